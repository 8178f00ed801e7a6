use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::Node;
use super::units::infer_unit;
use super::{canonical_form, parse, Expr, ExprError};
use crate::data::{Feature, MoleculeRecord, Unit};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[default]
    Uniform,
}

/// Prior over one mean-function parameter, in the parameter's physical unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPrior {
    #[serde(default)]
    pub kind: PriorKind,
    pub low: f64,
    pub high: f64,
    #[serde(default)]
    pub unit: Unit,
}

fn log_sigmoid(z: f64) -> f64 {
    // -softplus(-z)
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Image of an unconstrained coordinate under the interval map, with the
/// derivatives needed by gradient-based samplers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constrained {
    pub value: f64,
    /// d value / d z
    pub dvalue: f64,
    pub log_jacobian: f64,
    /// d log_jacobian / d z
    pub dlog_jacobian: f64,
}

impl ParamPrior {
    pub fn uniform(low: f64, high: f64, unit: Unit) -> Result<Self, ExprError> {
        let p = ParamPrior {
            kind: PriorKind::Uniform,
            low,
            high,
            unit,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ExprError> {
        if self.low.is_finite() && self.high.is_finite() && self.low < self.high {
            Ok(())
        } else {
            Err(ExprError::Prior(format!(
                "uniform prior needs finite low < high, got [{}, {}]",
                self.low, self.high
            )))
        }
    }

    /// Orders the bounds; a reversed interval is read as the same interval.
    pub fn normalized(mut self) -> Self {
        if self.low > self.high {
            std::mem::swap(&mut self.low, &mut self.high);
        }
        self
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.low && x < self.high
    }

    pub fn log_density(&self) -> f64 {
        -(self.high - self.low).ln()
    }

    /// `value = low + (high - low) * sigmoid(z)`.
    pub fn from_unconstrained(&self, z: f64) -> Constrained {
        let width = self.high - self.low;
        let s = sigmoid(z);
        Constrained {
            value: self.low + width * s,
            dvalue: width * s * (1.0 - s),
            log_jacobian: width.ln() + log_sigmoid(z) + log_sigmoid(-z),
            dlog_jacobian: 1.0 - 2.0 * s,
        }
    }

    pub fn to_unconstrained(&self, value: f64) -> Result<f64, ExprError> {
        if !self.contains(value) {
            return Err(ExprError::Prior(format!(
                "{value} is not strictly inside ({}, {})",
                self.low, self.high
            )));
        }
        Ok((value - self.low).ln() - (self.high - value).ln())
    }
}

/// Maps parameters strictly inside their prior supports to unconstrained
/// coordinates.
pub fn to_unconstrained(params: &[f64], priors: &[ParamPrior]) -> Result<Vec<f64>, ExprError> {
    params
        .iter()
        .zip(priors)
        .map(|(v, p)| p.to_unconstrained(*v))
        .collect()
}

/// Inverse of [`to_unconstrained`], returning the summed log-Jacobian.
pub fn from_unconstrained(z: &[f64], priors: &[ParamPrior]) -> (Vec<f64>, f64) {
    let mut log_jac = 0.0;
    let values = z
        .iter()
        .zip(priors)
        .map(|(z, p)| {
            let c = p.from_unconstrained(*z);
            log_jac += c.log_jacobian;
            c.value
        })
        .collect();
    (values, log_jac)
}

/// Serialized form of one hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub name: String,
    pub expression: String,
    pub params: BTreeMap<String, ParamPrior>,
    pub inputs: Vec<String>,
    pub output_unit: Unit,
}

/// A hypothesis file: the list plus the provenance of whoever wrote it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub hypotheses: Vec<HypothesisSpec>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyHypothesisFile {
    Wrapped(HypothesisFile),
    List(Vec<HypothesisSpec>),
    Single(HypothesisSpec),
}

/// Mean-function inputs for a batch of rows, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanInputs {
    values: Vec<f64>,
    stride: usize,
    rows: usize,
}

impl MeanInputs {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.stride..(i + 1) * self.stride]
    }
}

/// A candidate physical law: expression, input features and parameter priors.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    name: String,
    expr: Expr,
    param_names: Vec<String>,
    priors: Vec<ParamPrior>,
    inputs: Vec<String>,
    input_features: Vec<Feature>,
    output_unit: Unit,
    program: Node,
}

impl Hypothesis {
    pub fn new(
        name: impl Into<String>,
        expr: Expr,
        params: BTreeMap<String, ParamPrior>,
        inputs: Vec<String>,
        output_unit: Unit,
    ) -> Result<Self, ExprError> {
        let name = name.into();
        let input_features = inputs
            .iter()
            .map(|n| Feature::from_name(n).ok_or_else(|| ExprError::UnknownVariable(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        for v in expr.vars() {
            if !inputs.contains(&v) {
                return Err(ExprError::UnknownVariable(v));
            }
        }
        for p in expr.params() {
            if !params.contains_key(&p) {
                return Err(ExprError::Prior(format!("parameter `{p}` has no prior")));
            }
        }
        for prior in params.values() {
            prior.validate()?;
        }
        let lookup = |n: &str| {
            params
                .get(n)
                .map(|p| p.unit)
                .or_else(|| Feature::from_name(n).map(Feature::default_unit))
        };
        let unit = infer_unit(&expr, &lookup)?;
        if unit != output_unit {
            return Err(ExprError::Unit(format!(
                "`{name}` evaluates to {unit}, declared {output_unit}"
            )));
        }
        let param_names: Vec<String> = params.keys().cloned().collect();
        let priors: Vec<ParamPrior> = params.values().copied().collect();
        let program = Node::compile(&expr, &inputs, &param_names)?;
        Ok(Hypothesis {
            name,
            expr,
            param_names,
            priors,
            inputs,
            input_features,
            output_unit,
            program,
        })
    }

    pub fn from_spec(spec: &HypothesisSpec) -> Result<Self, ExprError> {
        let expr = parse(&spec.expression, |n| spec.inputs.iter().any(|i| i == n))
            .map_err(ExprError::Parse)?;
        let params = spec
            .params
            .iter()
            .map(|(k, p)| (k.clone(), p.normalized()))
            .collect();
        Hypothesis::new(
            spec.name.clone(),
            expr,
            params,
            spec.inputs.clone(),
            spec.output_unit,
        )
    }

    pub fn to_spec(&self) -> HypothesisSpec {
        HypothesisSpec {
            name: self.name.clone(),
            expression: self.expr.to_text(),
            params: self
                .param_names
                .iter()
                .cloned()
                .zip(self.priors.iter().copied())
                .collect(),
            inputs: self.inputs.clone(),
            output_unit: self.output_unit,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn canonical(&self) -> String {
        canonical_form(&self.expr)
    }

    /// Parameter names in slot order (sorted).
    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn priors(&self) -> &[ParamPrior] {
        &self.priors
    }

    pub fn n_params(&self) -> usize {
        self.priors.len()
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn output_unit(&self) -> Unit {
        self.output_unit
    }

    pub fn prior_midpoint(&self) -> Vec<f64> {
        self.priors.iter().map(ParamPrior::midpoint).collect()
    }

    /// Evaluates at one point; `inputs` follow [`Hypothesis::inputs`] order.
    pub fn eval(&self, inputs: &[f64], params: &[f64]) -> Result<f64, ExprError> {
        self.program.eval(inputs, params)
    }

    pub fn mean_inputs(&self, rows: &[MoleculeRecord]) -> MeanInputs {
        let stride = self.input_features.len();
        let mut values = Vec::with_capacity(rows.len() * stride);
        for r in rows {
            values.extend(self.input_features.iter().map(|f| r.get(*f)));
        }
        MeanInputs {
            values,
            stride,
            rows: rows.len(),
        }
    }

    pub fn eval_inputs(&self, inputs: &MeanInputs, params: &[f64]) -> Result<Vec<f64>, ExprError> {
        (0..inputs.rows)
            .map(|i| self.program.eval(inputs.row(i), params))
            .collect()
    }

    /// Mean function over a batch of rows, in row order.
    pub fn eval_batch(&self, rows: &[MoleculeRecord], params: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.eval_inputs(&self.mean_inputs(rows), params)
    }

    /// Values and the row-major `rows x params` Jacobian.
    pub fn eval_grad_inputs(
        &self,
        inputs: &MeanInputs,
        params: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ExprError> {
        let p = params.len();
        let mut values = Vec::with_capacity(inputs.rows);
        let mut jac = vec![0.0; inputs.rows * p];
        for i in 0..inputs.rows {
            let v = self
                .program
                .eval_grad(inputs.row(i), params, &mut jac[i * p..(i + 1) * p])?;
            values.push(v);
        }
        Ok((values, jac))
    }

    /// Exact partial derivatives of the mean with respect to each parameter,
    /// one row per record.
    pub fn grad_params(
        &self,
        rows: &[MoleculeRecord],
        params: &[f64],
    ) -> Result<Vec<Vec<f64>>, ExprError> {
        for (v, prior) in params.iter().zip(&self.priors) {
            if !(prior.low..=prior.high).contains(v) {
                return Err(ExprError::Prior(format!(
                    "{v} outside prior support [{}, {}]",
                    prior.low, prior.high
                )));
            }
        }
        let (_, jac) = self.eval_grad_inputs(&self.mean_inputs(rows), params)?;
        Ok(jac.chunks(params.len().max(1)).map(<[f64]>::to_vec).take(rows.len()).collect())
    }
}

const BUNDLED_FE_HYPOTHESES: &str = include_str!("../../data/fe_hypotheses.json");

/// The three formation-enthalpy hypotheses with their literature priors.
pub fn bundled_hypotheses() -> Vec<Hypothesis> {
    parse_hypotheses(BUNDLED_FE_HYPOTHESES).expect("bundled hypothesis file is valid")
}

pub fn bundled_hypotheses_json() -> &'static str {
    BUNDLED_FE_HYPOTHESES
}

pub fn parse_hypotheses(text: &str) -> Result<Vec<Hypothesis>, ExprError> {
    let any: AnyHypothesisFile =
        serde_json::from_str(text).map_err(|e| ExprError::File(e.to_string()))?;
    let specs = match any {
        AnyHypothesisFile::Wrapped(f) => f.hypotheses,
        AnyHypothesisFile::List(l) => l,
        AnyHypothesisFile::Single(s) => vec![s],
    };
    let hyps = specs
        .iter()
        .map(Hypothesis::from_spec)
        .collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = hyps.iter().map(Hypothesis::name).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(ExprError::File("duplicate hypothesis names".into()));
    }
    Ok(hyps)
}

pub fn load_hypotheses(path: &Path) -> Result<Vec<Hypothesis>, ExprError> {
    let text = fs::read_to_string(path).map_err(|e| ExprError::File(format!("{}: {e}", path.display())))?;
    parse_hypotheses(&text)
}

pub fn write_hypotheses(path: &Path, file: &HypothesisFile) -> Result<(), ExprError> {
    let text = serde_json::to_string_pretty(file).map_err(|e| ExprError::File(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| ExprError::File(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(h: &Hypothesis, tpsa: f64, logp: f64, params: &[f64]) -> f64 {
        h.eval(&[tpsa, logp], params).unwrap()
    }

    #[test]
    fn bundled_models_evaluate() {
        let hyps = bundled_hypotheses();
        assert_eq!(hyps.len(), 3);
        for h in &hyps {
            assert_eq!(h.param_names(), ["IE", "SP"]);
            assert_eq!(h.inputs(), ["TPSA", "molelogP"]);
            assert_eq!(h.output_unit(), Unit::ENERGY_PER_MASS);
        }
        // params are ordered (IE, SP)
        assert_eq!(eval(&hyps[0], 0.0, 0.3, &[-2.0, 0.7]), -2.0);
        assert_eq!(eval(&hyps[2], 17.0, 0.0, &[-2.0, 0.7]), -2.0);
        assert_eq!(eval(&hyps[1], 1.0, 1.0, &[1.0, 1.0]), 3.0);
    }

    #[test]
    fn table_priors() {
        let h = &bundled_hypotheses()[0];
        assert_eq!(h.priors()[0].low, -4.0);
        assert_eq!(h.priors()[0].high, 2.0);
        assert_eq!(h.priors()[1].low, 0.05);
        assert_eq!(h.priors()[1].high, 2.0);
    }

    #[test]
    fn model_one_gradient_at_zero_tpsa() {
        let h = &bundled_hypotheses()[0];
        let rec = MoleculeRecord {
            id: 0,
            smiles: None,
            mw: 16.0,
            tpsa: 0.0,
            molelogp: 0.1,
            sp: 30.0,
            ie: -2.0,
            fe: -2.0,
        };
        let g = h.grad_params(std::slice::from_ref(&rec), &[-1.0, 0.5]).unwrap();
        assert_eq!(g[0][0], 1.0);
        let rec = MoleculeRecord { tpsa: 1.5, ..rec };
        let g = h.grad_params(&[rec], &[-1.0, 0.5]).unwrap();
        assert!((g[0][0] - (1.0 + 9.0)).abs() < 1e-12);
    }

    #[test]
    fn construction_errors() {
        let e = parse("IE*TPSA", |n| n == "TPSA").unwrap();
        let mut params = BTreeMap::new();
        assert!(matches!(
            Hypothesis::new("h", e.clone(), params.clone(), vec!["TPSA".into()], Unit::ENERGY_PER_MASS),
            Err(ExprError::Prior(_))
        ));
        params.insert(
            "IE".to_string(),
            ParamPrior::uniform(-4.0, 2.0, Unit::ENERGY_PER_MASS).unwrap(),
        );
        assert!(matches!(
            Hypothesis::new("h", e.clone(), params.clone(), vec!["TPSA".into()], Unit::ENERGY_PER_MASS),
            Err(ExprError::Unit(_))
        ));
        assert!(matches!(
            Hypothesis::new("h", e, params, vec!["bogus".into()], Unit::ENERGY_PER_MASS),
            Err(ExprError::UnknownVariable(_))
        ));
        assert!(ParamPrior::uniform(2.0, 0.05, Unit::AREA).is_err());
        let p = ParamPrior {
            kind: PriorKind::Uniform,
            low: 2.0,
            high: 0.05,
            unit: Unit::AREA,
        };
        assert_eq!(p.normalized().low, 0.05);
    }

    #[test]
    fn unconstrained_map() {
        let p = ParamPrior::uniform(-4.0, 2.0, Unit::ENERGY_PER_MASS).unwrap();
        assert_eq!(p.from_unconstrained(0.0).value, -1.0);
        assert!(p.to_unconstrained(2.0).is_err());
        assert!(p.to_unconstrained(-5.0).is_err());
        for v in [-3.99, -1.0, 0.5, 1.999] {
            let z = p.to_unconstrained(v).unwrap();
            assert!((p.from_unconstrained(z).value - v).abs() < 1e-12);
        }
        // log-Jacobian against a finite difference of the map
        for z in [-3.0, -0.4, 0.0, 1.2, 5.0] {
            let h = 1e-6;
            let fd = (p.from_unconstrained(z + h).value - p.from_unconstrained(z - h).value) / (2.0 * h);
            let c = p.from_unconstrained(z);
            assert!((c.log_jacobian - fd.ln()).abs() / c.log_jacobian.abs().max(1.0) < 1e-5);
            assert!((c.dvalue - fd).abs() / fd < 1e-5);
        }
    }

    #[test]
    fn file_round_trip() {
        let hyps = bundled_hypotheses();
        let file = HypothesisFile {
            config_hash: Some("abc".into()),
            seed: Some(7),
            hypotheses: hyps.iter().map(Hypothesis::to_spec).collect(),
        };
        let text = serde_json::to_string(&file).unwrap();
        assert_eq!(parse_hypotheses(&text).unwrap(), hyps);
        let single = serde_json::to_string(&hyps[0].to_spec()).unwrap();
        assert_eq!(parse_hypotheses(&single).unwrap(), vec![hyps[0].clone()]);
    }
}
