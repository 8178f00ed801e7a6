//! Joint posterior over kernel hyperparameters and mean-function parameters.
//!
//! Unconstrained layout: `[log σ_f, log ℓ_1 .. log ℓ_D, log σ_n, z_1 .. z_P]`
//! where each `z_k` maps onto its parameter's prior interval through a
//! scaled sigmoid.

use std::collections::HashSet;
use std::f64::consts::{LN_2, PI};

use crate::data::{Feature, MoleculeRecord};
use crate::expr::{Hypothesis, MeanInputs};

use super::kernel::{matern52_corr, matern52_neg_dcorr_dr2, KernelHyper};
use super::linalg;
use super::SgpError;

/// Relative diagonal jitter and its escalation ceiling, in units of σ_f².
pub const JITTER: f64 = 1e-6;
pub const MAX_JITTER: f64 = 1e-2;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Training inputs (row-major), targets and row ids.
#[derive(Clone, Debug, PartialEq)]
pub struct GpData {
    pub x: Vec<f64>,
    pub dims: usize,
    pub y: Vec<f64>,
    pub ids: Vec<u64>,
}

impl GpData {
    pub fn new(x: Vec<f64>, dims: usize, y: Vec<f64>, ids: Vec<u64>) -> Result<Self, SgpError> {
        if dims == 0 || x.len() != dims * y.len() || ids.len() != y.len() {
            return Err(SgpError::Shape(format!(
                "{} inputs for {} targets of dimension {dims} and {} ids",
                x.len(),
                y.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(SgpError::Shape(format!("duplicate id {dup}")));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(SgpError::Shape("non-finite training value".into()));
        }
        Ok(GpData { x, dims, y, ids })
    }

    pub fn from_records(
        rows: &[MoleculeRecord],
        inputs: &[Feature],
        target: Feature,
    ) -> Result<Self, SgpError> {
        let x = rows.iter().flat_map(|r| inputs.iter().map(|f| r.get(*f))).collect();
        let y = rows.iter().map(|r| r.get(target)).collect();
        GpData::new(x, inputs.len(), y, rows.iter().map(|r| r.id).collect())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dims..(i + 1) * self.dims]
    }
}

/// Prior mean of the process.
#[derive(Clone, Debug)]
pub enum Mean {
    Zero,
    /// A hypothesis together with its inputs at the training rows.
    Structured {
        hypothesis: Hypothesis,
        inputs: MeanInputs,
    },
}

impl Mean {
    pub fn structured(hypothesis: &Hypothesis, rows: &[MoleculeRecord]) -> Mean {
        Mean::Structured {
            inputs: hypothesis.mean_inputs(rows),
            hypothesis: hypothesis.clone(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Mean::Zero => 0,
            Mean::Structured { hypothesis, .. } => hypothesis.n_params(),
        }
    }

    pub fn hypothesis(&self) -> Option<&Hypothesis> {
        match self {
            Mean::Zero => None,
            Mean::Structured { hypothesis, .. } => Some(hypothesis),
        }
    }
}

/// Hyperpriors: σ_f ~ HalfNormal(signal_scale), σ_n ~ HalfNormal(noise_scale),
/// log ℓ_d ~ Normal(lengthscale_loc[d], lengthscale_sd²).
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperpriors {
    pub signal_scale: f64,
    pub noise_scale: f64,
    pub lengthscale_loc: Vec<f64>,
    pub lengthscale_sd: f64,
}

fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

fn positive_or(v: f64, fallback: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        fallback
    }
}

impl Hyperpriors {
    /// Scale-aware defaults: lengthscales centred on a fifth of each input's
    /// range, signal scale from the residual of the mean at its prior
    /// midpoint, noise scale a tenth of the target spread.
    pub fn from_data(data: &GpData, mean: &Mean) -> Hyperpriors {
        Hyperpriors::from_data_scaled(data, mean, 0.1, 1.0)
    }

    /// As [`Hyperpriors::from_data`] with the noise fraction and log-lengthscale
    /// spread given explicitly.
    pub fn from_data_scaled(
        data: &GpData,
        mean: &Mean,
        noise_fraction: f64,
        lengthscale_sd: f64,
    ) -> Hyperpriors {
        let lengthscale_loc = (0..data.dims)
            .map(|d| {
                let (lo, hi) = (0..data.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = data.row(i)[d];
                    (lo.min(v), hi.max(v))
                });
                (positive_or(hi - lo, 1.0) / 5.0).ln()
            })
            .collect();
        let y_sd = positive_or(std_dev(&data.y), 1.0);
        let residual_sd = match mean {
            Mean::Zero => std_dev(&data.y),
            Mean::Structured { hypothesis, inputs } => hypothesis
                .eval_inputs(inputs, &hypothesis.prior_midpoint())
                .map(|m| {
                    let r: Vec<f64> = data.y.iter().zip(&m).map(|(y, m)| y - m).collect();
                    std_dev(&r)
                })
                .unwrap_or(y_sd),
        };
        Hyperpriors {
            signal_scale: positive_or(residual_sd, y_sd),
            noise_scale: noise_fraction * y_sd,
            lengthscale_loc,
            lengthscale_sd,
        }
    }
}

/// One posterior draw in constrained space.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub hyper: KernelHyper,
    pub phi: Vec<f64>,
}

/// A factorized Gram matrix `σ_f²(C + jI) + σ_n²I`; row-major lower
/// triangles of the factor and of the correlation matrix `C`.
pub(crate) struct Factor {
    pub l: Vec<f64>,
    pub corr: Vec<f64>,
    pub jitter: f64,
}

/// Structured GP posterior over one training set.
#[derive(Clone, Debug)]
pub struct SgpModel {
    data: GpData,
    mean: Mean,
    priors: Hyperpriors,
    /// Per input dimension, squared coordinate differences (n × n, row-major).
    sq_diffs: Vec<Vec<f64>>,
}

impl SgpModel {
    pub fn new(data: GpData, mean: Mean, priors: Hyperpriors) -> Result<Self, SgpError> {
        if let Mean::Structured { inputs, .. } = &mean {
            if inputs.rows() != data.len() {
                return Err(SgpError::Shape("mean inputs differ from training rows".into()));
            }
        }
        if priors.lengthscale_loc.len() != data.dims {
            return Err(SgpError::Shape("one lengthscale prior per input dimension".into()));
        }
        let n = data.len();
        let sq_diffs = (0..data.dims)
            .map(|d| {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..i {
                        let v = (data.row(i)[d] - data.row(j)[d]).powi(2);
                        m[i * n + j] = v;
                        m[j * n + i] = v;
                    }
                }
                m
            })
            .collect();
        Ok(SgpModel {
            data,
            mean,
            priors,
            sq_diffs,
        })
    }

    pub fn data(&self) -> &GpData {
        &self.data
    }

    pub fn mean(&self) -> &Mean {
        &self.mean
    }

    pub fn priors(&self) -> &Hyperpriors {
        &self.priors
    }

    /// Length of the unconstrained vector.
    pub fn dim(&self) -> usize {
        self.data.dims + 2 + self.mean.n_params()
    }

    pub fn unpack(&self, u: &[f64]) -> Sample {
        let d = self.data.dims;
        let phi = match &self.mean {
            Mean::Zero => vec![],
            Mean::Structured { hypothesis, .. } => hypothesis
                .priors()
                .iter()
                .zip(&u[d + 2..])
                .map(|(p, z)| p.from_unconstrained(*z).value)
                .collect(),
        };
        Sample {
            hyper: KernelHyper {
                signal_variance: (2.0 * u[0]).exp(),
                lengthscales: u[1..=d].iter().map(|v| v.exp()).collect(),
                noise_variance: (2.0 * u[d + 1]).exp(),
            },
            phi,
        }
    }

    pub fn pack(&self, s: &Sample) -> Result<Vec<f64>, SgpError> {
        s.hyper.validate()?;
        let mut u = Vec::with_capacity(self.dim());
        u.push(0.5 * s.hyper.signal_variance.ln());
        u.extend(s.hyper.lengthscales.iter().map(|l| l.ln()));
        u.push(0.5 * s.hyper.noise_variance.ln());
        if let Mean::Structured { hypothesis, .. } = &self.mean {
            for (p, v) in hypothesis.priors().iter().zip(&s.phi) {
                u.push(p.to_unconstrained(*v)?);
            }
        }
        Ok(u)
    }

    /// Prior centre: σ_f and σ_n at their scales, ℓ at the lognormal
    /// location, φ at the prior midpoint.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.dim());
        u.push(self.priors.signal_scale.ln());
        u.extend(&self.priors.lengthscale_loc);
        u.push(self.priors.noise_scale.ln());
        u.extend(std::iter::repeat_n(0.0, self.mean.n_params()));
        u
    }

    pub fn mean_at_training(&self, phi: &[f64]) -> Result<Vec<f64>, SgpError> {
        match &self.mean {
            Mean::Zero => Ok(vec![0.0; self.data.len()]),
            Mean::Structured { hypothesis, inputs } => Ok(hypothesis.eval_inputs(inputs, phi)?),
        }
    }

    pub(crate) fn factorize(&self, hyper: &KernelHyper) -> Result<Factor, SgpError> {
        let n = self.data.len();
        let inv_l2: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut corr = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let r2: f64 = self
                    .sq_diffs
                    .iter()
                    .zip(&inv_l2)
                    .map(|(m, w)| m[i * n + j] * w)
                    .sum();
                corr[i * n + j] = matern52_corr(r2.sqrt());
            }
            corr[i * n + i] = 1.0;
        }
        let sf2 = hyper.signal_variance;
        let mut jitter = JITTER;
        loop {
            let mut l: Vec<f64> = corr.iter().map(|c| c * sf2).collect();
            for i in 0..n {
                l[i * n + i] += sf2 * jitter + hyper.noise_variance;
            }
            if linalg::cholesky_in_place(&mut l, n) {
                return Ok(Factor { l, corr, jitter });
            }
            if jitter >= MAX_JITTER {
                return Err(SgpError::Cholesky {
                    jitter,
                    hyper: format!("{hyper:?}"),
                });
            }
            log::debug!("cholesky failed at jitter {jitter:e}; escalating");
            jitter *= 10.0;
        }
    }

    fn log_prior_theta(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let d = self.data.dims;
        let p = &self.priors;
        let half_normal = |u: f64, scale: f64| {
            let s2 = (2.0 * u).exp();
            let lp = LN_2 - scale.ln() - HALF_LN_2PI - s2 / (2.0 * scale * scale) + u;
            (lp, 1.0 - s2 / (scale * scale))
        };
        let (lp_f, g_f) = half_normal(u[0], p.signal_scale);
        let (lp_n, g_n) = half_normal(u[d + 1], p.noise_scale);
        let mut lp = lp_f + lp_n;
        let sd2 = p.lengthscale_sd * p.lengthscale_sd;
        let mut gl = Vec::with_capacity(d);
        for k in 0..d {
            let z = u[1 + k] - p.lengthscale_loc[k];
            lp += -0.5 * z * z / sd2 - p.lengthscale_sd.ln() - HALF_LN_2PI;
            gl.push(-z / sd2);
        }
        if let Some(g) = grad {
            g[0] += g_f;
            g[d + 1] += g_n;
            for k in 0..d {
                g[1 + k] += gl[k];
            }
        }
        lp
    }

    /// Log joint density at `u`, including every prior and log-Jacobian.
    pub fn log_density(&self, u: &[f64]) -> Result<f64, SgpError> {
        self.evaluate(u, false).map(|(v, _)| v)
    }

    /// Log joint density and its gradient with respect to `u`.
    pub fn log_density_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>), SgpError> {
        self.evaluate(u, true)
    }

    fn evaluate(&self, u: &[f64], with_grad: bool) -> Result<(f64, Vec<f64>), SgpError> {
        if u.len() != self.dim() {
            return Err(SgpError::Shape(format!("expected {} coordinates, got {}", self.dim(), u.len())));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SgpError::InvalidHyper("non-finite coordinate".into()));
        }
        let d = self.data.dims;
        let n = self.data.len();
        let mut grad = vec![0.0; if with_grad { u.len() } else { 0 }];
        let mut lp = self.log_prior_theta(u, with_grad.then_some(&mut grad[..]));

        // Mean parameters through the interval transform.
        let mut phi = Vec::new();
        let mut dphi = Vec::new();
        let mut dlogjac = Vec::new();
        if let Mean::Structured { hypothesis, .. } = &self.mean {
            for (prior, z) in hypothesis.priors().iter().zip(&u[d + 2..]) {
                let c = prior.from_unconstrained(*z);
                lp += prior.log_density() + c.log_jacobian;
                phi.push(c.value);
                dphi.push(c.dvalue);
                dlogjac.push(c.dlog_jacobian);
            }
        }
        let (m, jac) = match &self.mean {
            Mean::Zero => (vec![0.0; n], vec![]),
            Mean::Structured { hypothesis, inputs } => {
                if with_grad {
                    hypothesis.eval_grad_inputs(inputs, &phi)?
                } else {
                    (hypothesis.eval_inputs(inputs, &phi)?, vec![])
                }
            }
        };
        if n == 0 {
            if with_grad {
                for k in 0..phi.len() {
                    grad[d + 2 + k] += dlogjac[k];
                }
            }
            return Ok((lp, grad));
        }

        let sample = self.unpack(u);
        let hyper = &sample.hyper;
        let factor = self.factorize(hyper)?;
        let resid: Vec<f64> = self.data.y.iter().zip(&m).map(|(y, m)| y - m).collect();
        let mut alpha = resid.clone();
        linalg::cholesky_solve(&factor.l, n, &mut alpha);
        let logdet = linalg::log_det(&factor.l, n);
        let quad: f64 = resid.iter().zip(&alpha).map(|(r, a)| r * a).sum();
        let ll = -0.5 * quad - 0.5 * logdet - n as f64 * HALF_LN_2PI;
        lp += ll;
        if !lp.is_finite() {
            return Err(SgpError::InvalidHyper(format!("log density {lp} at {u:?}")));
        }
        if !with_grad {
            return Ok((lp, grad));
        }

        // d ll / dθ_k = ½ tr((ααᵀ - K⁻¹) ∂K/∂θ_k).
        let kinv = linalg::inverse_lower(&factor.l, n);
        let sf2 = hyper.signal_variance;
        let sn2 = hyper.noise_variance;
        let inv_l2: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut g_sf = 0.0;
        let mut g_sn = 0.0;
        let mut g_l = vec![0.0; d];
        for i in 0..n {
            let w = alpha[i] * alpha[i] - kinv[i * n + i];
            g_sf += w * (1.0 + factor.jitter);
            g_sn += w;
            for j in 0..i {
                // Off-diagonal pairs appear twice in the trace.
                let w = 2.0 * (alpha[i] * alpha[j] - kinv[i * n + j]);
                g_sf += w * factor.corr[i * n + j];
                let mut r2 = 0.0;
                for k in 0..d {
                    r2 += self.sq_diffs[k][i * n + j] * inv_l2[k];
                }
                let a = w * matern52_neg_dcorr_dr2(r2.sqrt());
                for k in 0..d {
                    g_l[k] += a * self.sq_diffs[k][i * n + j] * inv_l2[k];
                }
            }
        }
        grad[0] += g_sf * sf2;
        for k in 0..d {
            grad[1 + k] += sf2 * g_l[k];
        }
        grad[d + 1] += g_sn * sn2;
        let p = phi.len();
        for k in 0..p {
            let dm: f64 = (0..n).map(|i| jac[i * p + k] * alpha[i]).sum();
            grad[d + 2 + k] += dm * dphi[k] + dlogjac[k];
        }
        Ok((lp, grad))
    }
}

/// Scalar Gaussian log-pdf, used as an oracle in tests.
pub fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / variance - 0.5 * (2.0 * PI * variance).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::bundled_hypotheses;
    use crate::synth::{synth_records, SynthConfig};

    fn priors(dims: usize) -> Hyperpriors {
        Hyperpriors {
            signal_scale: 1.3,
            noise_scale: 0.2,
            lengthscale_loc: vec![0.1; dims],
            lengthscale_sd: 1.0,
        }
    }

    #[test]
    fn single_point_reduces_to_scalar_gaussian() {
        let data = GpData::new(vec![0.4], 1, vec![0.9], vec![7]).unwrap();
        let model = SgpModel::new(data, Mean::Zero, priors(1)).unwrap();
        let u = [0.2, -0.3, -1.1];
        let s = model.unpack(&u);
        let var = s.hyper.signal_variance * (1.0 + JITTER) + s.hyper.noise_variance;
        let half_normal = |sigma: f64, scale: f64| {
            (2.0f64).ln() - 0.5 * (2.0 * PI).ln() - scale.ln() - sigma * sigma / (2.0 * scale * scale)
        };
        let expected = normal_log_pdf(0.9, 0.0, var)
            + half_normal(u[0].exp(), 1.3)
            + u[0]
            + half_normal(u[2].exp(), 0.2)
            + u[2]
            + normal_log_pdf(u[1], 0.1, 1.0);
        let got = model.log_density(&u).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    fn fd_check(model: &SgpModel, u: &[f64]) {
        let (_, g) = model.log_density_grad(u).unwrap();
        for k in 0..u.len() {
            let h = 1e-4;
            let f = |t: f64| {
                let mut v = u.to_vec();
                v[k] += t;
                model.log_density(&v).unwrap()
            };
            let fd = (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-5, "coordinate {k}: analytic {} vs fd {fd}", g[k]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = synth_records(&SynthConfig::sample());
        let rows = &rows[..25];
        for h in bundled_hypotheses() {
            let data = GpData::from_records(rows, &[Feature::Tpsa, Feature::MoleLogP], Feature::Fe).unwrap();
            let mean = Mean::structured(&h, rows);
            let pri = Hyperpriors::from_data(&data, &mean);
            let model = SgpModel::new(data, mean, pri).unwrap();
            let mut u = model.initial_point();
            u.iter_mut().enumerate().for_each(|(i, v)| *v += 0.3 * ((i as f64) * 1.7).sin());
            fd_check(&model, &u);
        }
        let data = GpData::new(vec![0.0, 0.5, 1.0, 2.0], 1, vec![1.0, 0.2, -0.3, 0.8], vec![1, 2, 3, 4]).unwrap();
        let model = SgpModel::new(data, Mean::Zero, priors(1)).unwrap();
        fd_check(&model, &[0.1, -0.5, -1.0]);
    }

    #[test]
    fn pack_roundtrip_and_shapes() {
        let rows = synth_records(&SynthConfig::sample());
        let h = &bundled_hypotheses()[0];
        let data = GpData::from_records(&rows[..5], &[Feature::Tpsa], Feature::Fe).unwrap();
        let mean = Mean::structured(h, &rows[..5]);
        let pri = Hyperpriors::from_data(&data, &mean);
        let model = SgpModel::new(data, mean, pri).unwrap();
        assert_eq!(model.dim(), 1 + 2 + 2);
        let u = vec![0.3, -0.2, -2.0, 0.5, -0.7];
        let back = model.pack(&model.unpack(&u)).unwrap();
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(GpData::new(vec![1.0, 2.0], 1, vec![1.0, 2.0], vec![3, 3]).is_err());
        assert!(GpData::new(vec![1.0], 2, vec![1.0], vec![3]).is_err());
    }
}
