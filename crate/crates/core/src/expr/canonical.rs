//! Canonical string form used to decide whether two expressions describe the
//! same formula, e.g. `IE*(1+(TPSA/SP)^2)` and `IE*(1+square(TPSA)/square(SP))`.
//!
//! Expressions are expanded into a sum of monomials over atoms (names and
//! transcendental sub-expressions), with rational exponents. Variables and
//! parameters are identified by name only.

use std::collections::BTreeMap;

use num_rational::Ratio;

use super::ast::{BinOp, Expr, UnaryOp};

type Exponent = Ratio<i64>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Default)]
struct Monomial(Vec<(String, Exponent)>);

impl Monomial {
    fn atom(name: String, e: Exponent) -> Monomial {
        Monomial(vec![(name, e)])
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<String, Exponent> = self.0.iter().cloned().collect();
        for (a, e) in &other.0 {
            *map.entry(a.clone()).or_insert_with(|| Ratio::from_integer(0)) += *e;
        }
        Monomial(map.into_iter().filter(|(_, e)| *e.numer() != 0).collect())
    }

    fn scale_exponents(&self, k: Exponent) -> Monomial {
        Monomial(self.0.iter().map(|(a, e)| (a.clone(), *e * k)).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Poly(BTreeMap<Monomial, f64>);

const MAX_EXPANDED_POWER: i64 = 6;

impl Poly {
    fn constant(c: f64) -> Poly {
        let mut p = Poly::default();
        p.add_term(Monomial::default(), c);
        p
    }

    fn atom(name: String, e: Exponent) -> Poly {
        let mut p = Poly::default();
        p.add_term(Monomial::atom(name, e), 1.0);
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        let entry = self.0.entry(m.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.0.remove(&m);
        }
    }

    fn add(mut self, other: &Poly) -> Poly {
        for (m, c) in &other.0 {
            self.add_term(m.clone(), *c);
        }
        self
    }

    fn scale(mut self, k: f64) -> Poly {
        self.0.values_mut().for_each(|c| *c *= k);
        self.0.retain(|_, c| *c != 0.0);
        self
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    fn as_constant(&self) -> Option<f64> {
        match self.0.len() {
            0 => Some(0.0),
            1 => self.0.get(&Monomial::default()).copied(),
            _ => None,
        }
    }

    fn single_term(&self) -> Option<(&Monomial, f64)> {
        (self.0.len() == 1).then(|| self.0.iter().next().map(|(m, c)| (m, *c)).unwrap())
    }

    /// Raises to a constant power, expanding small integer powers of sums.
    fn pow(&self, e: f64) -> Poly {
        let ratio = nice_ratio(e);
        if let (Some((m, c)), Some(r)) = (self.single_term(), ratio) {
            let integral = r.is_integer();
            if c > 0.0 || integral {
                let mut out = Poly::default();
                out.add_term(m.scale_exponents(r), c.powf(e));
                return out;
            }
        }
        if let Some(r) = ratio.filter(|r| r.is_integer()) {
            let n = *r.numer();
            if (0..=MAX_EXPANDED_POWER).contains(&n) {
                let mut out = Poly::constant(1.0);
                for _ in 0..n {
                    out = out.mul(self);
                }
                return out;
            }
        }
        match ratio {
            Some(r) => Poly::atom(format!("({})", self.render()), r),
            None => Poly::atom(format!("({})^({})", self.render(), fmt_coef(e)), Ratio::from_integer(1)),
        }
    }

    fn recip(&self) -> Poly {
        self.pow(-1.0)
    }

    fn render(&self) -> String {
        if self.0.is_empty() {
            return "0".into();
        }
        let terms: Vec<String> = self
            .0
            .iter()
            .map(|(m, c)| {
                let factors: Vec<String> = m
                    .0
                    .iter()
                    .map(|(a, e)| {
                        if *e == Ratio::from_integer(1) {
                            a.clone()
                        } else {
                            format!("{a}^{e}")
                        }
                    })
                    .collect();
                match (factors.is_empty(), fmt_coef(*c).as_str()) {
                    (true, coef) => coef.to_string(),
                    (false, "1") => factors.join("*"),
                    (false, "-1") => format!("-{}", factors.join("*")),
                    (false, coef) => format!("{coef}*{}", factors.join("*")),
                }
            })
            .collect();
        terms.join(" + ")
    }
}

fn nice_ratio(e: f64) -> Option<Exponent> {
    if !e.is_finite() {
        return None;
    }
    for den in 1..=12i64 {
        let num = e * den as f64;
        if (num - num.round()).abs() < 1e-12 && num.abs() < 1e9 {
            return Some(Ratio::new(num.round() as i64, den));
        }
    }
    None
}

/// Coefficients are compared at 12 significant digits.
fn fmt_coef(c: f64) -> String {
    if c == c.round() && c.abs() < 1e15 {
        return format!("{}", c as i64);
    }
    let s = format!("{c:.11e}");
    let (mant, exp) = s.split_once('e').unwrap();
    let mant = mant.trim_end_matches('0').trim_end_matches('.');
    format!("{mant}e{exp}")
}

fn to_poly(expr: &Expr) -> Poly {
    match expr {
        Expr::Const { value, .. } => Poly::constant(*value),
        Expr::Var(n) | Expr::Param(n) => Poly::atom(n.clone(), Ratio::from_integer(1)),
        Expr::Neg(c) => to_poly(c).scale(-1.0),
        Expr::Unary(op, c) => {
            let p = to_poly(c);
            match op {
                UnaryOp::Identity => p,
                UnaryOp::Reciprocal => p.recip(),
                UnaryOp::Sqrt => p.pow(0.5),
                UnaryOp::Square => p.pow(2.0),
                UnaryOp::Cube => p.pow(3.0),
                UnaryOp::Log => match p.as_constant() {
                    Some(v) => Poly::constant(v.ln()),
                    None => Poly::atom(format!("log({})", p.render()), Ratio::from_integer(1)),
                },
                UnaryOp::InvLog => match p.as_constant() {
                    Some(v) => Poly::constant(1.0 / v.ln()),
                    None => Poly::atom(format!("log({})", p.render()), Ratio::from_integer(-1)),
                },
                UnaryOp::Exp => match p.as_constant() {
                    Some(v) => Poly::constant(v.exp()),
                    None => Poly::atom(format!("exp({})", p.render()), Ratio::from_integer(1)),
                },
            }
        }
        Expr::Binary(op, l, r) => {
            let a = to_poly(l);
            let b = to_poly(r);
            match op {
                BinOp::Add => a.add(&b),
                BinOp::Sub => a.add(&b.scale(-1.0)),
                BinOp::Mul => a.mul(&b),
                BinOp::Div => a.mul(&b.recip()),
                BinOp::Pow => match b.as_constant() {
                    Some(e) => a.pow(e),
                    None => Poly::atom(
                        format!("({})^({})", a.render(), b.render()),
                        Ratio::from_integer(1),
                    ),
                },
            }
        }
    }
}

/// Canonical text of `expr`; algebraically equal forms built from the same
/// atoms map to the same string.
pub fn canonical_form(expr: &Expr) -> String {
    to_poly(expr).render()
}
