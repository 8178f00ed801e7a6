use super::ast::{BinOp, Expr};
use super::ExprError;
use crate::data::Unit;

/// Folds unit rules over `expr`. `lookup` gives the unit of each variable
/// and parameter name.
pub fn infer_unit(expr: &Expr, lookup: &impl Fn(&str) -> Option<Unit>) -> Result<Unit, ExprError> {
    let mismatch = |message: String| ExprError::Unit(message);
    match expr {
        Expr::Const { unit, .. } => Ok(*unit),
        Expr::Var(n) | Expr::Param(n) => {
            lookup(n).ok_or_else(|| mismatch(format!("no unit declared for `{n}`")))
        }
        Expr::Neg(c) => infer_unit(c, lookup),
        Expr::Unary(op, c) => {
            let u = infer_unit(c, lookup)?;
            op.unit_rule(u)
                .ok_or_else(|| mismatch(format!("{}({c}) not admissible for unit {u}", op.name())))
        }
        Expr::Binary(op, l, r) => {
            let a = infer_unit(l, lookup)?;
            let b = infer_unit(r, lookup)?;
            match op {
                BinOp::Add | BinOp::Sub => {
                    if a == b {
                        Ok(a)
                    } else {
                        Err(mismatch(format!("cannot add {a} ({l}) and {b} ({r})")))
                    }
                }
                BinOp::Mul => Ok(a.mul(b)),
                BinOp::Div => Ok(a.div(b)),
                BinOp::Pow => {
                    if !b.is_dimensionless() {
                        return Err(mismatch(format!("exponent {r} has unit {b}")));
                    }
                    if a.is_dimensionless() {
                        return Ok(a);
                    }
                    let e = r.constant_value().ok_or_else(|| {
                        mismatch(format!("dimensional base {l} needs a constant exponent"))
                    })?;
                    a.powf(e)
                        .ok_or_else(|| mismatch(format!("{a} cannot be raised to {e}")))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn lookup(n: &str) -> Option<Unit> {
        match n {
            "TPSA" | "SP" => Some(Unit::AREA),
            "IE" => Some(Unit::ENERGY_PER_MASS),
            "molelogP" => Some(Unit::DIMENSIONLESS),
            "MW" => Some(Unit::MASS),
            _ => None,
        }
    }

    fn unit_of(text: &str) -> Result<Unit, ExprError> {
        infer_unit(&parse(text, |_| true).unwrap(), &lookup)
    }

    #[test]
    fn model_forms() {
        assert_eq!(unit_of("IE*(1+(TPSA/SP)^2)").unwrap(), Unit::ENERGY_PER_MASS);
        assert_eq!(
            unit_of("IE*(1+(TPSA/SP)^2+molelogP^2)").unwrap(),
            Unit::ENERGY_PER_MASS
        );
        // As printed, the third model adds an area to a pure number.
        assert!(unit_of("IE*(1+molelogP/(1+TPSA))").is_err());
        assert_eq!(
            unit_of("IE*(1+molelogP/(1+TPSA/1[area]))").unwrap(),
            Unit::ENERGY_PER_MASS
        );
    }

    #[test]
    fn operator_rules() {
        assert!(unit_of("log(TPSA)").is_err());
        assert_eq!(unit_of("log(TPSA/SP)").unwrap(), Unit::DIMENSIONLESS);
        assert_eq!(unit_of("sqrt(TPSA)").unwrap(), Unit::AREA.sqrt().unwrap());
        assert_eq!(unit_of("TPSA^1.5").unwrap(), Unit::AREA.powf(1.5).unwrap());
        assert!(unit_of("TPSA^molelogP").is_err());
        assert!(unit_of("2^TPSA").is_err());
        assert_eq!(unit_of("recip(MW)*cube(MW)").unwrap(), Unit::MASS.powi(2));
    }
}
