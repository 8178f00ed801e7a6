//! Oracle suites: each check compares the library against an independent
//! computation and reports one line.

use std::fmt;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::config::ExperimentConfig;
use crate::data::{Feature, MoleculeRecord};
use crate::expr::{bundled_hypotheses, canonical_form, parse, Hypothesis};
use crate::forge::{center, forge, kkt_violation, lambda_max, lasso_fit, soft_threshold, standardize, Design, ForgeSettings};
use crate::learning;
use crate::rng::{self, Rng};
use crate::sgp::{
    hmc_sample, matern52_corr, predict_sample, Chain, GpData, HmcConfig, Hyperpriors, KernelHyper, Mean, Sample,
    SgpModel, TestPoints, JITTER,
};
use crate::synth::{synth_records, PlantedLaw, SynthConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({:.2}s): {}", self.name, self.seconds, self.detail)
    }
}

fn timed(name: &'static str, check: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = match check() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

const GP_INPUTS: [Feature; 2] = [Feature::Tpsa, Feature::MoleLogP];

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .expect("non-empty range");
        m.swap(col, pivot);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    m[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_phi(h: &Hypothesis, rng: &mut Rng) -> Vec<f64> {
    h.priors()
        .iter()
        .map(|p| p.from_unconstrained(StandardNormal.sample(rng)).value)
        .collect()
}

fn pick_rows(rows: &[MoleculeRecord], k: usize, rng: &mut Rng) -> Vec<MoleculeRecord> {
    rand::seq::index::sample(rng, rows.len(), k)
        .into_iter()
        .map(|i| rows[i].clone())
        .collect()
}

/// Single-sample prediction against an explicit-inverse solve.
pub fn gp_oracle(instances: usize, seed: u64) -> CheckResult {
    timed("gp-oracle", || {
        let rows = synth_records(&SynthConfig::planted_model1(400, seed));
        let hyps = bundled_hypotheses();
        let mut rng = rng::stream(seed, &[]);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let h = &hyps[rng.random_range(0..hyps.len())];
            let n = rng.random_range(1..=5);
            let t = rng.random_range(1..=3);
            let picked = pick_rows(&rows, n + t, &mut rng);
            let (train, test) = picked.split_at(n);
            let data = GpData::from_records(train, &GP_INPUTS, Feature::Fe).map_err(|e| e.to_string())?;
            let mean = Mean::structured(h, train);
            let priors = Hyperpriors::from_data(&data, &mean);
            let model = SgpModel::new(data, mean, priors).map_err(|e| e.to_string())?;
            let sf2 = log_uniform(&mut rng, 0.1, 3.0);
            let hyper = KernelHyper {
                signal_variance: sf2,
                lengthscales: vec![log_uniform(&mut rng, 0.2, 5.0), log_uniform(&mut rng, 0.2, 5.0)],
                noise_variance: sf2 * log_uniform(&mut rng, 1e-3, 1e-1),
            };
            let sample = Sample {
                hyper: hyper.clone(),
                phi: random_phi(h, &mut rng),
            };
            let points = TestPoints {
                x: test.iter().flat_map(|r| GP_INPUTS.map(|f| r.get(f))).collect(),
                dims: 2,
                mean_inputs: Some(h.mean_inputs(test)),
            };
            let (mu, var) = predict_sample(&model, &sample, &points).map_err(|e| e.to_string())?;

            let k = |a: &MoleculeRecord, b: &MoleculeRecord| {
                let r2: f64 = GP_INPUTS
                    .iter()
                    .zip(&hyper.lengthscales)
                    .map(|(f, l)| ((a.get(*f) - b.get(*f)) / l).powi(2))
                    .sum();
                sf2 * matern52_corr(r2.sqrt())
            };
            let gram: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| k(&train[i], &train[j]) + if i == j { sf2 * JITTER + hyper.noise_variance } else { 0.0 })
                        .collect()
                })
                .collect();
            let inv = dense_inverse(&gram);
            let m_train = h.eval_batch(train, &sample.phi).map_err(|e| e.to_string())?;
            let m_test = h.eval_batch(test, &sample.phi).map_err(|e| e.to_string())?;
            let resid: Vec<f64> = train.iter().zip(&m_train).map(|(r, m)| r.fe - m).collect();
            for (s, x) in test.iter().enumerate() {
                let ks: Vec<f64> = train.iter().map(|r| k(x, r)).collect();
                let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| inv[i][j] * ks[j]).sum()).collect();
                let mu_ref = m_test[s] + w.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>();
                let var_ref = sf2 - w.iter().zip(&ks).map(|(a, b)| a * b).sum::<f64>();
                worst = worst.max(relative(mu[s], mu_ref)).max(relative(var[s], var_ref));
            }
        }
        let detail = format!("{instances} instances, worst relative error {worst:.2e} (tolerance 1e-8)");
        if worst <= 1e-8 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Joint log-density gradient against five-point central differences.
pub fn gradient_fd(points: usize, seed: u64) -> CheckResult {
    timed("gradient-fd", || {
        let rows = synth_records(&SynthConfig::sample());
        let hyps = bundled_hypotheses();
        let mut rng = rng::stream(seed, &[]);
        let mut worst: f64 = 0.0;
        for p in 0..points {
            let h = &hyps[p % hyps.len()];
            let train = pick_rows(&rows, 25, &mut rng);
            let data = GpData::from_records(&train, &GP_INPUTS, Feature::Fe).map_err(|e| e.to_string())?;
            let mean = Mean::structured(h, &train);
            let priors = Hyperpriors::from_data(&data, &mean);
            let model = SgpModel::new(data, mean, priors).map_err(|e| e.to_string())?;
            let u: Vec<f64> = model
                .initial_point()
                .iter()
                .map(|v| v + 0.5 * normal(&mut rng))
                .collect();
            let (_, g) = model.log_density_grad(&u).map_err(|e| e.to_string())?;
            for k in 0..u.len() {
                let step = 1e-4;
                let f = |t: f64| {
                    let mut v = u.clone();
                    v[k] += t;
                    model.log_density(&v).map_err(|e| e.to_string())
                };
                let fd = (8.0 * (f(step)? - f(-step)?) - (f(2.0 * step)? - f(-2.0 * step)?)) / (12.0 * step);
                worst = worst.max((fd - g[k]).abs() / fd.abs().max(1.0));
            }
        }
        let detail = format!("{points} points, worst relative error {worst:.2e} (tolerance 1e-5)");
        if worst <= 1e-5 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Centered columns orthogonalized against each other, scaled to unit
/// population variance.
fn orthonormal_columns(n: usize, p: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    while cols.len() < p {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
        for _ in 0..2 {
            for c in &cols {
                let proj = v.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        if norm > 1e-6 {
            cols.push(v.iter().map(|x| x / norm).collect());
        }
    }
    cols
}

/// Orthonormal soft-thresholding, KKT on random designs, and the zero
/// solution at `lambda_max`.
pub fn lasso(instances: usize, seed: u64) -> CheckResult {
    timed("lasso", || {
        let mut rng = rng::stream(seed, &[]);
        let mut worst_orth: f64 = 0.0;
        for _ in 0..instances {
            let n = rng.random_range(12..40);
            let p = rng.random_range(1..=n.min(10) - 1);
            let cols = orthonormal_columns(n, p, &mut rng);
            let y: Vec<f64> = (0..n).map(|_| 2.0 * normal(&mut rng)).collect();
            let y = center(&y).0;
            let d = Design::from_columns(cols.clone()).map_err(|e| e.to_string())?;
            let lambda = rng.random_range(0.0..1.0) * lambda_max(&d, &y);
            let fit = lasso_fit(&d, &y, lambda).map_err(|e| e.to_string())?;
            for (j, c) in cols.iter().enumerate() {
                let z = c.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                worst_orth = worst_orth.max((fit.coefficients[j] - soft_threshold(z, lambda)).abs());
            }
        }
        let mut worst_kkt: f64 = 0.0;
        let mut nonzero_at_max = 0;
        for _ in 0..instances {
            let n = rng.random_range(20..60);
            let p = rng.random_range(2..30);
            let raw: Vec<Vec<f64>> = (0..p)
                .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let (d, _) = standardize(&raw).map_err(|e| e.to_string())?;
            let y: Vec<f64> = (0..n)
                .map(|i| d.column(0)[i] - 0.5 * d.column(p - 1)[i] + 0.3 * normal(&mut rng))
                .collect();
            let y = center(&y).0;
            let lmax = lambda_max(&d, &y);
            let lambda = lmax * log_uniform(&mut rng, 1e-3, 1.0);
            let fit = lasso_fit(&d, &y, lambda).map_err(|e| e.to_string())?;
            worst_kkt = worst_kkt.max(kkt_violation(&d, &y, &fit));
            for scale in [1.0, 1.5] {
                let at_max = lasso_fit(&d, &y, lmax * scale).map_err(|e| e.to_string())?;
                if at_max.coefficients.iter().any(|c| *c != 0.0) {
                    nonzero_at_max += 1;
                }
            }
        }
        let detail = format!(
            "orthonormal max error {worst_orth:.2e}, KKT max violation {worst_kkt:.2e} (tolerance 1e-6), \
             {nonzero_at_max} non-zero fits at lambda >= lambda_max"
        );
        if worst_orth <= 1e-6 && worst_kkt <= 1e-6 && nonzero_at_max == 0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn gaussian(vars: &[f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), String> + '_ {
    move |q: &[f64]| {
        let lp = -0.5 * q.iter().zip(vars).map(|(x, v)| x * x / v).sum::<f64>();
        Ok((lp, q.iter().zip(vars).map(|(x, v)| -x / v).collect()))
    }
}

fn moments(chain: &Chain, k: usize) -> (f64, f64) {
    let n = chain.draws.len() as f64;
    let m = chain.draws.iter().map(|q| q[k]).sum::<f64>() / n;
    let v = chain.draws.iter().map(|q| (q[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Moments of Gaussian targets at 2,000 draws, and bit-exact replay.
///
/// Means are compared in units of the target standard deviation.
pub fn hmc_moments() -> CheckResult {
    timed("hmc-moments", || {
        let cfg = HmcConfig {
            warmup: 500,
            samples: 2000,
            ..Default::default()
        };
        let mut failures = Vec::new();
        let mut parts = Vec::new();
        for (vars, stream) in [(vec![1.0], 1u64), (vec![1.0, 4.0, 9.0], 2)] {
            let run = || hmc_sample(gaussian(&vars), &vec![0.0; vars.len()], &cfg, &mut rng::stream(stream, &[rng::HMC]));
            let chain = run().map_err(|e| e.to_string())?;
            let replay = run().map_err(|e| e.to_string())?;
            if chain != replay {
                failures.push(format!("{}-d chain differs on replay", vars.len()));
            }
            for (k, v) in vars.iter().enumerate() {
                let (m, got) = moments(&chain, k);
                let z = m / v.sqrt();
                let ratio = got / v;
                parts.push(format!("var{v}: mean/sd {z:+.3}, var ratio {ratio:.3}"));
                if z.abs() > 0.05 || (ratio - 1.0).abs() > 0.15 {
                    failures.push(format!("variance-{v} target off"));
                }
            }
        }
        let detail = parts.join("; ");
        if failures.is_empty() {
            Ok(detail)
        } else {
            Err(format!("{detail}; {}", failures.join(", ")))
        }
    })
}

/// Near-zero noise: the posterior passes through the training targets.
pub fn interpolation() -> CheckResult {
    timed("interpolation", || {
        let rows = synth_records(&SynthConfig::planted_model1(200, 7));
        let train = &rows[..20];
        let mut worst_mu: f64 = 0.0;
        let mut worst_var: f64 = 0.0;
        let sf2 = 1.0;
        for h in bundled_hypotheses() {
            let data = GpData::from_records(train, &GP_INPUTS, Feature::Fe).map_err(|e| e.to_string())?;
            let mean = Mean::structured(&h, train);
            let priors = Hyperpriors::from_data(&data, &mean);
            let model = SgpModel::new(data, mean, priors).map_err(|e| e.to_string())?;
            let sample = Sample {
                hyper: KernelHyper {
                    signal_variance: sf2,
                    lengthscales: vec![0.5, 0.5],
                    noise_variance: 1e-12,
                },
                phi: h.prior_midpoint(),
            };
            let points = TestPoints {
                x: train.iter().flat_map(|r| GP_INPUTS.map(|f| r.get(f))).collect(),
                dims: 2,
                mean_inputs: Some(h.mean_inputs(train)),
            };
            let (mu, var) = predict_sample(&model, &sample, &points).map_err(|e| e.to_string())?;
            for (i, r) in train.iter().enumerate() {
                worst_mu = worst_mu.max((mu[i] - r.fe).abs());
                worst_var = worst_var.max(var[i]);
            }
        }
        let bound = 10.0 * sf2 * JITTER;
        let detail = format!("max |mu - y| {worst_mu:.2e} (tolerance 1e-4), max variance {worst_var:.2e} (bound {bound:.0e})");
        if worst_mu <= 1e-4 && worst_var <= bound {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Forging on a table generated from the Model-1 form recovers that form.
pub fn forge_planted() -> CheckResult {
    timed("forge-planted", || {
        let cfg = SynthConfig {
            rows: 1000,
            seed: 11,
            law: PlantedLaw::Model1Features,
            noise_fraction: 0.01,
            tpsa_max: 120.0,
        };
        let rows = synth_records(&cfg);
        let out = forge(&rows, &ForgeSettings::default()).map_err(|e| e.to_string())?;
        let want = canonical_form(&parse("IE*(1+(TPSA/SP)^2)", |_| false).map_err(|e| e.to_string())?);
        let got: Vec<String> = out.hypotheses.iter().map(|h| h.canonical()).collect();
        match got.iter().position(|c| *c == want) {
            Some(i) => Ok(format!("IE*(1+(TPSA/SP)^2) is forged hypothesis {} of {}", i + 1, got.len())),
            None => Err(format!("not among forged hypotheses {got:?}")),
        }
    })
}

/// Two identical learning runs produce identical traces and summaries.
pub fn determinism() -> CheckResult {
    timed("determinism", || {
        let rows = synth_records(&SynthConfig::planted_model1(60, 5));
        let cfg = ExperimentConfig {
            n_seed: 15,
            n_steps: 3,
            n_init: 2,
            pool_subsample: 20,
            hypothesis_subset: 10,
            warmup: 30,
            samples: 30,
            thin: 5,
            ..Default::default()
        };
        let hyps = bundled_hypotheses();
        let a = learning::run(&rows, &hyps, &cfg, None).map_err(|f| f.error.to_string())?;
        let b = learning::run(&rows, &hyps, &cfg, None).map_err(|f| f.error.to_string())?;
        if a.traces == b.traces && a.summary == b.summary {
            Ok(format!("{} steps replayed identically", a.traces.iter().map(Vec::len).sum::<usize>()))
        } else {
            Err("repeated runs differ".into())
        }
    })
}

/// The full oracle suite, at the sizes used by the acceptance criteria.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        gp_oracle(200, 101),
        gradient_fd(50, 102),
        lasso(50, 103),
        hmc_moments(),
        interpolation(),
        forge_planted(),
        determinism(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_inverse_inverts() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let inv = dense_inverse(&a);
        for i in 0..3 {
            for j in 0..3 {
                let p: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((p - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn orthonormal_columns_are_orthonormal() {
        let mut rng = rng::stream(4, &[]);
        let c = orthonormal_columns(10, 4, &mut rng);
        for a in &c {
            assert!(a.iter().sum::<f64>().abs() < 1e-12);
            for b in &c {
                let g = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / 10.0;
                let want = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_suites_pass() {
        for r in [gp_oracle(20, 1), gradient_fd(3, 2), lasso(10, 3), interpolation()] {
            assert!(r.passed, "{r}");
        }
    }
}
