use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Unit;

/// Single-argument operators used to functionalize features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnaryOp {
    #[serde(rename = "recip")]
    Reciprocal,
    #[serde(rename = "sqrt")]
    Sqrt,
    #[serde(rename = "square")]
    Square,
    #[serde(rename = "cube")]
    Cube,
    #[serde(rename = "log")]
    Log,
    #[serde(rename = "invlog")]
    InvLog,
    #[serde(rename = "exp")]
    Exp,
    #[serde(rename = "id")]
    Identity,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 8] = [
        UnaryOp::Reciprocal,
        UnaryOp::Sqrt,
        UnaryOp::Square,
        UnaryOp::Cube,
        UnaryOp::Log,
        UnaryOp::InvLog,
        UnaryOp::Exp,
        UnaryOp::Identity,
    ];

    /// Function name in the text grammar.
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Reciprocal => "recip",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
            UnaryOp::Log => "log",
            UnaryOp::InvLog => "invlog",
            UnaryOp::Exp => "exp",
            UnaryOp::Identity => "id",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        UnaryOp::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Whether `x` lies in the operator's numeric domain.
    pub fn admits(self, x: f64) -> bool {
        match self {
            UnaryOp::Reciprocal => x != 0.0,
            UnaryOp::Sqrt => x >= 0.0,
            UnaryOp::Log => x > 0.0,
            UnaryOp::InvLog => x > 0.0 && x != 1.0,
            UnaryOp::Square | UnaryOp::Cube | UnaryOp::Exp | UnaryOp::Identity => true,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Reciprocal => 1.0 / x,
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Square => x * x,
            UnaryOp::Cube => x * x * x,
            UnaryOp::Log => x.ln(),
            UnaryOp::InvLog => 1.0 / x.ln(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Identity => x,
        }
    }

    /// Derivative at `x`; `None` where the operator is not differentiable.
    pub fn derivative(self, x: f64) -> Option<f64> {
        let d = match self {
            UnaryOp::Reciprocal => -1.0 / (x * x),
            UnaryOp::Sqrt if x > 0.0 => 0.5 / x.sqrt(),
            UnaryOp::Sqrt => return None,
            UnaryOp::Square => 2.0 * x,
            UnaryOp::Cube => 3.0 * x * x,
            UnaryOp::Log => 1.0 / x,
            UnaryOp::InvLog => {
                let l = x.ln();
                -1.0 / (x * l * l)
            }
            UnaryOp::Exp => x.exp(),
            UnaryOp::Identity => 1.0,
        };
        d.is_finite().then_some(d)
    }

    /// Unit of the result, or `None` when the input unit is not admissible.
    pub fn unit_rule(self, input: Unit) -> Option<Unit> {
        match self {
            UnaryOp::Reciprocal => Some(input.recip()),
            UnaryOp::Sqrt => input.sqrt(),
            UnaryOp::Square => Some(input.powi(2)),
            UnaryOp::Cube => Some(input.powi(3)),
            UnaryOp::Log | UnaryOp::InvLog | UnaryOp::Exp => {
                input.is_dimensionless().then_some(Unit::DIMENSIONLESS)
            }
            UnaryOp::Identity => Some(input),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

const NEG_PRECEDENCE: u8 = 3;
const ATOM_PRECEDENCE: u8 = 5;

/// Expression tree over input variables and free parameters.
///
/// Constants carry a unit so that dimensional scale factors (for instance a
/// reference area of one square angstrom) can be written explicitly.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const { value: f64, unit: Unit },
    Var(String),
    Param(String),
    Neg(Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Const {
            value,
            unit: Unit::DIMENSIONLESS,
        }
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Expr {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Add, self, rhs)
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Sub, self, rhs)
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Mul, self, rhs)
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Div, self, rhs)
    }

    pub fn pow(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Pow, self, rhs)
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const { .. } | Expr::Var(_) | Expr::Param(_) => 1,
            Expr::Neg(c) | Expr::Unary(_, c) => 1 + c.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var(n) = e {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Param(n) = e {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(c) | Expr::Unary(_, c) => c.visit(f),
            Expr::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }

    /// Rewrites every `Var` whose name satisfies `promote` into a `Param`.
    pub fn promote_vars(&self, promote: &impl Fn(&str) -> bool) -> Expr {
        match self {
            Expr::Var(n) if promote(n) => Expr::Param(n.clone()),
            Expr::Const { .. } | Expr::Var(_) | Expr::Param(_) => self.clone(),
            Expr::Neg(c) => Expr::Neg(Box::new(c.promote_vars(promote))),
            Expr::Unary(op, c) => Expr::unary(*op, c.promote_vars(promote)),
            Expr::Binary(op, l, r) => {
                Expr::binary(*op, l.promote_vars(promote), r.promote_vars(promote))
            }
        }
    }

    /// Value of a subtree built only from constants, if it is one.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Const { value, .. } => Some(*value),
            Expr::Neg(c) => c.constant_value().map(|v| -v),
            Expr::Unary(op, c) => c.constant_value().map(|v| op.apply(v)),
            Expr::Binary(op, l, r) => {
                let (a, b) = (l.constant_value()?, r.constant_value()?);
                Some(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                })
            }
            Expr::Var(_) | Expr::Param(_) => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => NEG_PRECEDENCE,
            _ => ATOM_PRECEDENCE,
        }
    }

    /// Text form accepted by [`crate::expr::parse`].
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, value: f64, unit: Unit) -> fmt::Result {
    let negative = value.is_sign_negative();
    if negative {
        write!(f, "(-{}", -value)?;
    } else {
        write!(f, "{value}")?;
    }
    if !unit.is_dimensionless() {
        write!(f, "[{unit}]")?;
    }
    if negative {
        f.write_str(")")?;
    }
    Ok(())
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const { value, unit } => write_const(f, *value, *unit),
            Expr::Var(n) | Expr::Param(n) => f.write_str(n),
            Expr::Neg(c) => {
                f.write_str("-")?;
                // A bare literal after a minus would parse back as a negative constant.
                let parens = c.precedence() < NEG_PRECEDENCE || matches!(**c, Expr::Const { .. });
                write_child(f, c, parens)
            }
            Expr::Unary(op, c) => write!(f, "{}({c})", op.name()),
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let right_assoc = *op == BinOp::Pow;
                let left_parens = l.precedence() < p || (right_assoc && l.precedence() == p);
                let right_parens = r.precedence() < p || (!right_assoc && r.precedence() == p);
                write_child(f, l, left_parens)?;
                write!(f, "{}", op.symbol())?;
                write_child(f, r, right_parens)
            }
        }
    }
}
