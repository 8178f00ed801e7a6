//! Evaluation and exact forward-mode differentiation with respect to the
//! free parameters.

use std::fmt;

use super::ast::{BinOp, Expr, UnaryOp};
use super::ExprError;

/// Location of a node: child indices from the root (0 = left/only child).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodePath(pub Vec<u8>);

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("root")?;
        for i in &self.0 {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}

/// An expression with names resolved to slots.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Param(usize),
    Neg(Box<Node>),
    Unary(UnaryOp, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

impl Node {
    /// Resolves names of `expr` against the given variable and parameter
    /// orderings.
    pub fn compile(expr: &Expr, vars: &[String], params: &[String]) -> Result<Node, ExprError> {
        Ok(match expr {
            Expr::Const { value, .. } => Node::Const(*value),
            Expr::Var(n) => Node::Var(
                vars.iter()
                    .position(|v| v == n)
                    .ok_or_else(|| ExprError::Unbound(n.clone()))?,
            ),
            Expr::Param(n) => Node::Param(
                params
                    .iter()
                    .position(|p| p == n)
                    .ok_or_else(|| ExprError::Unbound(n.clone()))?,
            ),
            Expr::Neg(c) => Node::Neg(Box::new(Node::compile(c, vars, params)?)),
            Expr::Unary(op, c) => Node::Unary(*op, Box::new(Node::compile(c, vars, params)?)),
            Expr::Binary(op, l, r) => Node::Binary(
                *op,
                Box::new(Node::compile(l, vars, params)?),
                Box::new(Node::compile(r, vars, params)?),
            ),
        })
    }

    pub fn eval(&self, vars: &[f64], params: &[f64]) -> Result<f64, ExprError> {
        let mut path = Vec::new();
        eval_node(self, vars, params, &mut path)
    }

    /// Value and gradient with respect to every parameter; `grad` must have
    /// one slot per parameter and is overwritten.
    pub fn eval_grad(
        &self,
        vars: &[f64],
        params: &[f64],
        grad: &mut [f64],
    ) -> Result<f64, ExprError> {
        let mut path = Vec::new();
        let (v, g) = grad_node(self, vars, params, &mut path)?;
        grad.copy_from_slice(&g);
        Ok(v)
    }
}

fn domain(path: &[u8], message: impl Into<String>) -> ExprError {
    ExprError::Domain {
        path: NodePath(path.to_vec()),
        message: message.into(),
    }
}

fn checked(value: f64, path: &[u8]) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(domain(path, format!("non-finite result {value}")))
    }
}

fn pow_domain(a: f64, b: f64, path: &[u8]) -> Result<(), ExprError> {
    if a < 0.0 && b.fract() != 0.0 {
        return Err(domain(path, format!("negative base {a} with fractional exponent {b}")));
    }
    if a == 0.0 && b < 0.0 {
        return Err(domain(path, "zero base with negative exponent"));
    }
    Ok(())
}

fn binary_value(op: BinOp, a: f64, b: f64, path: &[u8]) -> Result<f64, ExprError> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(domain(path, "division by zero"));
            }
            a / b
        }
        BinOp::Pow => {
            pow_domain(a, b, path)?;
            a.powf(b)
        }
    };
    checked(v, path)
}

fn eval_node(node: &Node, vars: &[f64], params: &[f64], path: &mut Vec<u8>) -> Result<f64, ExprError> {
    match node {
        Node::Const(v) => Ok(*v),
        Node::Var(i) => Ok(vars[*i]),
        Node::Param(i) => Ok(params[*i]),
        Node::Neg(c) => {
            path.push(0);
            let v = eval_node(c, vars, params, path)?;
            path.pop();
            Ok(-v)
        }
        Node::Unary(op, c) => {
            path.push(0);
            let x = eval_node(c, vars, params, path)?;
            path.pop();
            if !op.admits(x) {
                return Err(domain(path, format!("{}({x}) outside domain", op.name())));
            }
            checked(op.apply(x), path)
        }
        Node::Binary(op, l, r) => {
            path.push(0);
            let a = eval_node(l, vars, params, path)?;
            path.pop();
            path.push(1);
            let b = eval_node(r, vars, params, path)?;
            path.pop();
            binary_value(*op, a, b, path)
        }
    }
}

fn grad_node(
    node: &Node,
    vars: &[f64],
    params: &[f64],
    path: &mut Vec<u8>,
) -> Result<(f64, Vec<f64>), ExprError> {
    let n = params.len();
    match node {
        Node::Const(v) => Ok((*v, vec![0.0; n])),
        Node::Var(i) => Ok((vars[*i], vec![0.0; n])),
        Node::Param(i) => {
            let mut g = vec![0.0; n];
            g[*i] = 1.0;
            Ok((params[*i], g))
        }
        Node::Neg(c) => {
            path.push(0);
            let (v, mut g) = grad_node(c, vars, params, path)?;
            path.pop();
            g.iter_mut().for_each(|x| *x = -*x);
            Ok((-v, g))
        }
        Node::Unary(op, c) => {
            path.push(0);
            let (x, mut g) = grad_node(c, vars, params, path)?;
            path.pop();
            if !op.admits(x) {
                return Err(domain(path, format!("{}({x}) outside domain", op.name())));
            }
            let v = checked(op.apply(x), path)?;
            if g.iter().any(|d| *d != 0.0) {
                let d = op.derivative(x).ok_or_else(|| ExprError::NonDifferentiable {
                    path: NodePath(path.clone()),
                    message: format!("{} at {x}", op.name()),
                })?;
                g.iter_mut().for_each(|x| *x *= d);
            }
            Ok((v, g))
        }
        Node::Binary(op, l, r) => {
            path.push(0);
            let (a, ga) = grad_node(l, vars, params, path)?;
            path.pop();
            path.push(1);
            let (b, gb) = grad_node(r, vars, params, path)?;
            path.pop();
            let v = binary_value(*op, a, b, path)?;
            let g: Vec<f64> = match op {
                BinOp::Add => ga.iter().zip(&gb).map(|(x, y)| x + y).collect(),
                BinOp::Sub => ga.iter().zip(&gb).map(|(x, y)| x - y).collect(),
                BinOp::Mul => ga.iter().zip(&gb).map(|(x, y)| x * b + a * y).collect(),
                BinOp::Div => ga
                    .iter()
                    .zip(&gb)
                    .map(|(x, y)| (x * b - a * y) / (b * b))
                    .collect(),
                BinOp::Pow => {
                    let base_varies = ga.iter().any(|d| *d != 0.0);
                    let exp_varies = gb.iter().any(|d| *d != 0.0);
                    let nondiff = |message: &str| ExprError::NonDifferentiable {
                        path: NodePath(path.clone()),
                        message: message.to_string(),
                    };
                    if base_varies && a == 0.0 && b != 0.0 && b < 1.0 {
                        return Err(nondiff("zero base with exponent below one"));
                    }
                    if exp_varies && a <= 0.0 {
                        return Err(nondiff("non-positive base with varying exponent"));
                    }
                    let d_base = if base_varies && b != 0.0 { b * a.powf(b - 1.0) } else { 0.0 };
                    let d_exp = if exp_varies { v * a.ln() } else { 0.0 };
                    ga.iter().zip(&gb).map(|(x, y)| d_base * x + d_exp * y).collect()
                }
            };
            if g.iter().any(|d| !d.is_finite()) {
                return Err(ExprError::NonDifferentiable {
                    path: NodePath(path.clone()),
                    message: "non-finite derivative".into(),
                });
            }
            Ok((v, g))
        }
    }
}
