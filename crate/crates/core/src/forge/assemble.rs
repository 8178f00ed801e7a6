use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Feature, MoleculeRecord, Unit};
use crate::expr::{canonical_form, Hypothesis, ParamPrior, UnaryOp};

use super::descriptor::{
    combine_descriptors, expand_features, feature_columns, pearson, sis_screen, Descriptor,
};
use super::lasso::{center, lambda_grid, lambda_max, lasso_path, rank_descriptors, standardize};
use super::ForgeError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeSettings {
    pub base_features: Vec<Feature>,
    pub target: Feature,
    pub ops: Vec<UnaryOp>,
    pub max_terms: usize,
    pub sis_cap: usize,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub n_hypotheses: usize,
    /// Features turned into free parameters in assembled hypotheses.
    pub promote: Vec<Feature>,
    pub prior_widening: f64,
}

impl Default for ForgeSettings {
    fn default() -> Self {
        ForgeSettings {
            base_features: vec![
                Feature::Mw,
                Feature::Tpsa,
                Feature::MoleLogP,
                Feature::Sp,
                Feature::Ie,
            ],
            target: Feature::Fe,
            ops: UnaryOp::ALL.to_vec(),
            max_terms: 3,
            sis_cap: 2000,
            n_lambda: 16,
            lambda_ratio: 1e-4,
            n_hypotheses: 3,
            promote: vec![Feature::Ie, Feature::Sp],
            prior_widening: 1.5,
        }
    }
}

impl ForgeSettings {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |m: &str| Err(ForgeError::Config(m.to_string()));
        if self.base_features.is_empty() {
            return bad("no base features");
        }
        if self.base_features.contains(&self.target) {
            return bad("target listed among base features");
        }
        if !(2..=3).contains(&self.max_terms) {
            return bad("max_terms must be 2 or 3");
        }
        if self.sis_cap == 0 || self.n_lambda == 0 || self.n_hypotheses == 0 {
            return bad("sis_cap, n_lambda and n_hypotheses must be positive");
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return bad("lambda_ratio must lie in (0, 1)");
        }
        if !(self.prior_widening >= 1.0) || !self.prior_widening.is_finite() {
            return bad("prior_widening must be >= 1");
        }
        Ok(())
    }
}

/// One screened candidate with its standing at the selected lambda.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedDescriptor {
    pub label: String,
    pub canonical: String,
    pub unit: Unit,
    pub correlation: f64,
    pub abs_coefficient: f64,
    /// 1-based position in the LASSO ranking, if active.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ForgeOutcome {
    pub n_expanded: usize,
    pub n_skipped: usize,
    pub n_candidates: usize,
    pub n_screened: usize,
    pub lambda: f64,
    pub lambda_index: usize,
    pub active_sizes: Vec<usize>,
    /// Screened candidates in screening order.
    pub descriptors: Vec<RankedDescriptor>,
    pub hypotheses: Vec<Hypothesis>,
}

/// Linear-interpolation quantile of `values` at `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Uniform prior over [p1, p99] of `values`, widened about its midpoint.
/// A strictly one-signed feature keeps a one-signed support.
fn data_prior(values: &[f64], widening: f64, unit: Unit) -> Result<ParamPrior, ForgeError> {
    let p1 = percentile(values, 0.01);
    let p99 = percentile(values, 0.99);
    let mid = 0.5 * (p1 + p99);
    let mut half = 0.5 * (p99 - p1) * widening;
    if half <= 0.0 {
        half = (0.5 * mid.abs()).max(1e-6);
    }
    let (mut low, mut high) = (mid - half, mid + half);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min > 0.0 && low <= 0.0 {
        low = 0.5 * min;
    }
    if max < 0.0 && high >= 0.0 {
        high = 0.5 * max;
    }
    Ok(ParamPrior::uniform(low, high, unit)?)
}

/// Turns a candidate descriptor into a hypothesis: promoted features become
/// parameters with data-driven priors, the rest stay inputs.
pub fn assemble_hypothesis(
    name: &str,
    descriptor: &Descriptor,
    rows: &[MoleculeRecord],
    settings: &ForgeSettings,
) -> Result<Hypothesis, ForgeError> {
    let promoted: Vec<Feature> = settings.promote.clone();
    let is_promoted = |n: &str| Feature::from_name(n).is_some_and(|f| promoted.contains(&f));
    let expr = descriptor.provenance.promote_vars(&is_promoted);
    let mut params = BTreeMap::new();
    for p in expr.params() {
        let f = Feature::from_name(&p).expect("promoted names are features");
        let values: Vec<f64> = rows.iter().map(|r| r.get(f)).collect();
        params.insert(p, data_prior(&values, settings.prior_widening, f.default_unit())?);
    }
    let vars = expr.vars();
    let inputs: Vec<String> = Feature::ALL
        .iter()
        .map(|f| f.name().to_string())
        .filter(|n| vars.contains(n))
        .collect();
    Ok(Hypothesis::new(name, expr, params, inputs, descriptor.unit)?)
}

/// Runs expansion, combination, screening, the LASSO path and assembly over
/// the hypothesis subset `rows`.
pub fn forge(rows: &[MoleculeRecord], settings: &ForgeSettings) -> Result<ForgeOutcome, ForgeError> {
    settings.validate()?;
    if rows.len() < 2 {
        return Err(ForgeError::Config("need at least two rows".into()));
    }
    let target_unit = settings.target.default_unit();
    let target: Vec<f64> = rows.iter().map(|r| r.get(settings.target)).collect();
    let columns = feature_columns(rows, &settings.base_features);
    let expansion = expand_features(&columns, &settings.ops);
    let candidates = if settings.ops.is_empty() {
        let carriers: Vec<Descriptor> = expansion
            .descriptors
            .iter()
            .filter(|d| d.unit == target_unit)
            .cloned()
            .collect();
        if carriers.is_empty() {
            return Err(ForgeError::NoCarrier(target_unit));
        }
        carriers
    } else {
        combine_descriptors(&expansion.descriptors, settings.max_terms, target_unit)?
    };
    let n_candidates = candidates.len();
    let varying: Vec<Descriptor> = candidates
        .into_iter()
        .filter(|d| d.values.iter().any(|v| *v != d.values[0]))
        .collect();
    if varying.is_empty() {
        return Err(ForgeError::EmptyActiveSet);
    }
    let screened: Vec<Descriptor> = sis_screen(&varying, &target, settings.sis_cap)
        .into_iter()
        .map(|i| varying[i].clone())
        .collect();
    log::info!(
        "forge: {} descriptors ({} skipped), {} candidates, {} screened",
        expansion.descriptors.len(),
        expansion.skipped.len(),
        n_candidates,
        screened.len()
    );

    let raw: Vec<Vec<f64>> = screened.iter().map(|d| d.values.clone()).collect();
    let (design, _) = standardize(&raw)?;
    let (p, _) = center(&target);
    let grid = lambda_grid(lambda_max(&design, &p), settings.n_lambda, settings.lambda_ratio);
    let path = lasso_path(&design, &p, &grid)?;
    let active_sizes: Vec<usize> = path.iter().map(|r| r.active.len()).collect();
    let lambda_index = active_sizes
        .iter()
        .position(|n| *n >= settings.n_hypotheses)
        .or_else(|| active_sizes.iter().rposition(|n| *n > 0))
        .ok_or(ForgeError::EmptyActiveSet)?;
    let chosen = &path[lambda_index];
    let ranking = rank_descriptors(chosen);

    let mut descriptors: Vec<RankedDescriptor> = screened
        .iter()
        .zip(&chosen.coefficients)
        .map(|(d, c)| RankedDescriptor {
            label: d.label(),
            canonical: canonical_form(&d.provenance),
            unit: d.unit,
            correlation: pearson(&d.values, &target),
            abs_coefficient: c.abs(),
            rank: None,
        })
        .collect();
    for (pos, &j) in ranking.iter().enumerate() {
        descriptors[j].rank = Some(pos + 1);
    }
    let hypotheses = ranking
        .iter()
        .take(settings.n_hypotheses)
        .enumerate()
        .map(|(pos, &j)| assemble_hypothesis(&format!("forged{}", pos + 1), &screened[j], rows, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForgeOutcome {
        n_expanded: expansion.descriptors.len(),
        n_skipped: expansion.skipped.len(),
        n_candidates,
        n_screened: screened.len(),
        lambda: chosen.lambda,
        lambda_index,
        active_sizes,
        descriptors,
        hypotheses,
    })
}

/// Descriptor pool dump: one row per screened candidate, `#`-prefixed
/// header lines first.
pub fn write_descriptor_report(
    path: &Path,
    outcome: &ForgeOutcome,
    header: &[String],
) -> Result<(), ForgeError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "# lambda={}", outcome.lambda)?;
    writeln!(out, "provenance,canonical,unit,correlation,abs_coefficient,rank")?;
    for d in &outcome.descriptors {
        writeln!(
            out,
            "\"{}\",\"{}\",{},{},{},{}",
            d.label,
            d.canonical,
            d.unit,
            d.correlation,
            d.abs_coefficient,
            d.rank.map(|r| r.to_string()).unwrap_or_default()
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.01), 1.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[3.0, 1.0], 0.5), 2.0);
    }

    #[test]
    fn one_signed_priors_stay_one_signed() {
        let v: Vec<f64> = (1..=100).map(|i| -0.1 * f64::from(i)).collect();
        let p = data_prior(&v, 1.5, Unit::ENERGY_PER_MASS).unwrap();
        assert!(p.high < 0.0 && p.low < -9.9);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = data_prior(&v, 1.5, Unit::AREA).unwrap();
        assert_eq!(p.low, 0.5);
        let expected_high = 50.5 + 0.5 * (percentile(&v, 0.99) - percentile(&v, 0.01)) * 1.5;
        assert!((p.high - expected_high).abs() < 1e-12);
    }

    #[test]
    fn settings_validation() {
        assert!(ForgeSettings::default().validate().is_ok());
        let s = ForgeSettings {
            base_features: vec![Feature::Fe],
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = ForgeSettings {
            max_terms: 1,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
