use std::collections::HashSet;

use crate::data::{Feature, MoleculeRecord, Unit};
use crate::expr::{canonical_form, Expr, UnaryOp};

use super::ForgeError;

/// A named base column with its unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: Unit,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: Unit, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            unit,
            values,
        }
    }
}

/// Base columns for `features` over `rows`, using the canonical units.
pub fn feature_columns(rows: &[MoleculeRecord], features: &[Feature]) -> Vec<Column> {
    features
        .iter()
        .map(|f| Column::new(f.name(), f.default_unit(), rows.iter().map(|r| r.get(*f)).collect()))
        .collect()
}

/// A functionalized feature column and the expression it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub provenance: Expr,
    pub unit: Unit,
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn label(&self) -> String {
        self.provenance.to_text()
    }
}

/// A candidate the expansion rejected, and why.
#[derive(Clone, Debug, PartialEq)]
pub struct Skipped {
    pub candidate: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Expansion {
    pub descriptors: Vec<Descriptor>,
    pub skipped: Vec<Skipped>,
}

/// Applies each operator to each base column. Identity descriptors are always
/// emitted; an (op, column) pair is dropped if any row falls outside the
/// operator's domain, the unit rule rejects the column's unit, or a value
/// overflows. Output order is column-major over `ops`.
pub fn expand_features(columns: &[Column], ops: &[UnaryOp]) -> Expansion {
    let mut out = Expansion::default();
    for col in columns {
        out.descriptors.push(Descriptor {
            provenance: Expr::var(&col.name),
            unit: col.unit,
            values: col.values.clone(),
        });
        for &op in ops.iter().filter(|op| **op != UnaryOp::Identity) {
            let label = format!("{}({})", op.name(), col.name);
            let Some(unit) = op.unit_rule(col.unit) else {
                out.skipped.push(Skipped {
                    candidate: label,
                    reason: format!("unit {} not admissible", col.unit),
                });
                continue;
            };
            if let Some(bad) = col.values.iter().find(|v| !op.admits(**v)) {
                out.skipped.push(Skipped {
                    candidate: label,
                    reason: format!("value {bad} outside domain"),
                });
                continue;
            }
            let values: Vec<f64> = col.values.iter().map(|v| op.apply(*v)).collect();
            if values.iter().any(|v| !v.is_finite()) {
                out.skipped.push(Skipped {
                    candidate: label,
                    reason: "non-finite value".into(),
                });
                continue;
            }
            out.descriptors.push(Descriptor {
                provenance: Expr::unary(op, Expr::var(&col.name)),
                unit,
                values,
            });
        }
    }
    for s in &out.skipped {
        log::debug!("expand: skipped {} ({})", s.candidate, s.reason);
    }
    out
}

/// Dimensionless terms available for summation: dimensionless pool members,
/// then ratios `a/b` of distinct dimensional pool members sharing a unit.
pub fn dimensionless_terms(pool: &[Descriptor]) -> Vec<Descriptor> {
    let mut terms: Vec<Descriptor> = pool
        .iter()
        .filter(|d| d.unit.is_dimensionless())
        .cloned()
        .collect();
    for (i, a) in pool.iter().enumerate() {
        if a.unit.is_dimensionless() {
            continue;
        }
        for (j, b) in pool.iter().enumerate() {
            if i == j || a.unit != b.unit || b.values.contains(&0.0) {
                continue;
            }
            let values: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x / y).collect();
            if values.iter().any(|v| !v.is_finite()) {
                continue;
            }
            terms.push(Descriptor {
                provenance: a.provenance.clone().div(b.provenance.clone()),
                unit: Unit::DIMENSIONLESS,
                values,
            });
        }
    }
    terms
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Unit-balanced candidates `carrier * (1 + t_1 + ... + t_k)` where the
/// carrier has `target_unit` and `k <= max_terms - 1` distinct dimensionless
/// terms. Candidates with the same canonical form are kept once, first seen.
pub fn combine_descriptors(
    pool: &[Descriptor],
    max_terms: usize,
    target_unit: Unit,
) -> Result<Vec<Descriptor>, ForgeError> {
    if !(2..=3).contains(&max_terms) {
        return Err(ForgeError::Config(format!("max_terms must be 2 or 3, got {max_terms}")));
    }
    let carriers: Vec<&Descriptor> = pool.iter().filter(|d| d.unit == target_unit).collect();
    if carriers.is_empty() {
        return Err(ForgeError::NoCarrier(target_unit));
    }
    let terms = dimensionless_terms(pool);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |d: Descriptor, out: &mut Vec<Descriptor>| {
        if d.values.iter().all(|v| v.is_finite()) && seen.insert(canonical_form(&d.provenance)) {
            out.push(d);
        }
    };
    for carrier in carriers {
        push(carrier.clone(), &mut out);
        for k in 1..max_terms {
            combinations(terms.len(), k, |idx| {
                let mut sum = Expr::num(1.0);
                let mut factor = vec![1.0; carrier.values.len()];
                for &t in idx {
                    sum = sum.add(terms[t].provenance.clone());
                    for (f, v) in factor.iter_mut().zip(&terms[t].values) {
                        *f += v;
                    }
                }
                let values = carrier.values.iter().zip(&factor).map(|(c, f)| c * f).collect();
                push(
                    Descriptor {
                        provenance: carrier.provenance.clone().mul(sum),
                        unit: carrier.unit,
                        values,
                    },
                    &mut out,
                );
            });
        }
    }
    Ok(out)
}

/// Pearson correlation; zero when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Indices of the `k` candidates most correlated (in absolute value) with
/// the target, ties kept in candidate order.
pub fn sis_screen(candidates: &[Descriptor], target: &[f64], k: usize) -> Vec<usize> {
    let corr: Vec<f64> = candidates
        .iter()
        .map(|d| pearson(&d.values, target).abs())
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|a, b| corr[*b].total_cmp(&corr[*a]));
    order.truncate(k);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, unit: Unit, values: &[f64]) -> Column {
        Column::new(name, unit, values.to_vec())
    }

    #[test]
    fn two_positive_dimensionless_features_give_sixteen() {
        let cols = [
            col("a", Unit::DIMENSIONLESS, &[0.5, 2.0, 3.0]),
            col("b", Unit::DIMENSIONLESS, &[0.1, 0.2, 4.0]),
        ];
        let e = expand_features(&cols, &UnaryOp::ALL);
        assert_eq!(e.descriptors.len(), 16);
        assert!(e.skipped.is_empty());
        assert_eq!(e.descriptors[0].label(), "a");
        assert_eq!(e.descriptors[1].label(), "recip(a)");
        assert_eq!(e.descriptors[8].label(), "b");
    }

    #[test]
    fn zero_blocks_reciprocal() {
        let cols = [col("a", Unit::DIMENSIONLESS, &[0.0, 1.0])];
        let e = expand_features(&cols, &[UnaryOp::Reciprocal]);
        assert_eq!(e.descriptors.len(), 1);
        assert_eq!(e.skipped.len(), 1);
    }

    #[test]
    fn log_of_area_skipped() {
        let cols = [col("TPSA", Unit::AREA, &[3.0, 5.0])];
        let e = expand_features(&cols, &[UnaryOp::Log]);
        assert_eq!(e.descriptors.len(), 1);
        assert!(e.skipped[0].reason.contains("unit"));
    }

    #[test]
    fn minimal_combination() {
        let pool = vec![
            Descriptor {
                provenance: Expr::var("IE"),
                unit: Unit::ENERGY_PER_MASS,
                values: vec![-2.0, -3.0],
            },
            Descriptor {
                provenance: Expr::var("t"),
                unit: Unit::DIMENSIONLESS,
                values: vec![0.5, 1.0],
            },
        ];
        let out = combine_descriptors(&pool, 2, Unit::ENERGY_PER_MASS).unwrap();
        let labels: Vec<String> = out.iter().map(Descriptor::label).collect();
        assert_eq!(labels, ["IE", "IE*(1+t)"]);
        assert_eq!(out[1].values, vec![-3.0, -6.0]);
        let only_carrier = combine_descriptors(&pool[..1], 3, Unit::ENERGY_PER_MASS).unwrap();
        assert_eq!(only_carrier.len(), 1);
        assert!(matches!(
            combine_descriptors(&pool[1..], 3, Unit::ENERGY_PER_MASS),
            Err(ForgeError::NoCarrier(_))
        ));
        assert!(combine_descriptors(&pool, 4, Unit::ENERGY_PER_MASS).is_err());
    }

    #[test]
    fn combinations_enumerate_in_order() {
        let mut seen = Vec::new();
        combinations(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn screening_ranks_target_first() {
        let target = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let cands = vec![
            Descriptor {
                provenance: Expr::var("noise"),
                unit: Unit::DIMENSIONLESS,
                values: vec![0.3, -0.1, 0.4, 0.1, -0.5],
            },
            Descriptor {
                provenance: Expr::var("const"),
                unit: Unit::DIMENSIONLESS,
                values: vec![1.0; 5],
            },
            Descriptor {
                provenance: Expr::var("P"),
                unit: Unit::DIMENSIONLESS,
                values: target.clone(),
            },
        ];
        assert_eq!(sis_screen(&cands, &target, 1), vec![2]);
        assert_eq!(sis_screen(&cands, &target, 10), vec![2, 0, 1]);
    }
}
