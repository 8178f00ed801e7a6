//! Static-trajectory HMC with dual-averaging step-size adaptation and a
//! diagonal metric estimated during warmup.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

use super::SgpError;

/// Energy error beyond which a transition counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub warmup: usize,
    pub samples: usize,
    /// Draws kept for prediction, evenly spaced over the chain.
    pub thin: usize,
    pub leapfrog_min: usize,
    pub leapfrog_max: usize,
    pub target_accept: f64,
    /// Estimate a diagonal metric from the middle of warmup.
    pub adapt_metric: bool,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            warmup: 500,
            samples: 500,
            thin: 100,
            leapfrog_min: 5,
            leapfrog_max: 25,
            target_accept: 0.8,
            adapt_metric: true,
        }
    }
}

impl HmcConfig {
    pub fn desk() -> Self {
        HmcConfig {
            warmup: 250,
            samples: 250,
            thin: 50,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SgpError> {
        if self.warmup == 0 || self.samples == 0 || self.thin == 0 {
            return Err(SgpError::Config("warmup, samples and thin must be positive".into()));
        }
        if self.leapfrog_min == 0 || self.leapfrog_min > self.leapfrog_max {
            return Err(SgpError::Config("leapfrog range must satisfy 1 <= min <= max".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(SgpError::Config("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    /// Post-warmup positions of non-divergent transitions.
    pub draws: Vec<Vec<f64>>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Mean Metropolis acceptance probability after warmup.
    pub accept_rate: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub gradient_evals: usize,
}

impl Chain {
    /// `m` draws evenly spaced over the chain, always including the last.
    pub fn thinned(&self, m: usize) -> Vec<&[f64]> {
        let n = self.draws.len();
        if n <= m {
            return self.draws.iter().map(Vec::as_slice).collect();
        }
        (0..m)
            .map(|i| self.draws[n - 1 - (i * n) / m].as_slice())
            .rev()
            .collect()
    }
}

/// Dual averaging of the log step size toward a target acceptance rate.
#[derive(Clone, Debug)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial_step).ln(),
            target,
            h_bar: 0.0,
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
            t: 0.0,
        }
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct Point {
    q: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

struct Sampler<'a, F> {
    target: &'a mut F,
    inv_metric: Vec<f64>,
    evals: usize,
}

struct Transition {
    accept_prob: f64,
    divergent: bool,
}

impl<'a, F, E> Sampler<'a, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    fn eval(&mut self, q: Vec<f64>) -> Option<Point> {
        self.evals += 1;
        match (self.target)(&q) {
            Ok((logp, grad)) if logp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
                Some(Point { q, logp, grad })
            }
            _ => None,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn momentum(&self, rng: &mut Rng) -> Vec<f64> {
        self.inv_metric
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                z / m.sqrt()
            })
            .collect()
    }

    /// Leapfrog trajectory of `steps` steps; `None` if the target fails.
    fn trajectory(&mut self, start: &Point, p0: &[f64], eps: f64, steps: usize) -> Option<(Point, Vec<f64>)> {
        let mut p: Vec<f64> = p0.iter().zip(&start.grad).map(|(p, g)| p + 0.5 * eps * g).collect();
        let mut q = start.q.clone();
        let mut point = None;
        for s in 0..steps {
            for ((q, p), m) in q.iter_mut().zip(&p).zip(&self.inv_metric) {
                *q += eps * p * m;
            }
            let next = self.eval(q.clone())?;
            let scale = if s + 1 == steps { 0.5 } else { 1.0 };
            for (p, g) in p.iter_mut().zip(&next.grad) {
                *p += scale * eps * g;
            }
            point = Some(next);
        }
        point.map(|pt| (pt, p))
    }

    fn transition(&mut self, current: &mut Point, eps: f64, steps: usize, rng: &mut Rng) -> Transition {
        let p0 = self.momentum(rng);
        let h0 = -current.logp + self.kinetic(&p0);
        let Some((proposal, p1)) = self.trajectory(current, &p0, eps, steps) else {
            return Transition {
                accept_prob: 0.0,
                divergent: true,
            };
        };
        let h1 = -proposal.logp + self.kinetic(&p1);
        let delta = h1 - h0;
        if !delta.is_finite() || delta > DIVERGENCE_THRESHOLD {
            return Transition {
                accept_prob: 0.0,
                divergent: true,
            };
        }
        let accept_prob = (-delta).exp().min(1.0);
        let u: f64 = rng.random();
        if u < accept_prob {
            *current = proposal;
        }
        Transition {
            accept_prob,
            divergent: false,
        }
    }
}

/// Doubles or halves the step until one leapfrog step's acceptance
/// probability crosses one half.
fn initial_step<F, E>(s: &mut Sampler<'_, F>, current: &Point, rng: &mut Rng) -> f64
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let mut eps: f64 = 0.1;
    let p0 = s.momentum(rng);
    let h0 = -current.logp + s.kinetic(&p0);
    let accept = |s: &mut Sampler<'_, F>, eps: f64| match s.trajectory(current, &p0, eps, 1) {
        Some((pt, p1)) => {
            let d = h0 - (-pt.logp + s.kinetic(&p1));
            if d.is_finite() { d.min(0.0).exp() } else { 0.0 }
        }
        None => 0.0,
    };
    let a0 = accept(s, eps);
    let up = a0 > 0.5;
    for _ in 0..50 {
        let a = accept(s, eps);
        if up != (a > 0.5) {
            break;
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
    }
    eps.clamp(1e-8, 10.0)
}

/// Draws from the density whose log and gradient `target` returns. Failed
/// evaluations count as divergences.
pub fn hmc_sample<F, E>(
    mut target: F,
    initial: &[f64],
    cfg: &HmcConfig,
    rng: &mut Rng,
) -> Result<Chain, SgpError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    E: std::fmt::Display,
{
    cfg.validate()?;
    let dim = initial.len();
    let mut s = Sampler {
        target: &mut target,
        inv_metric: vec![1.0; dim],
        evals: 0,
    };
    let mut current = match (s.target)(initial) {
        Ok((logp, grad)) if logp.is_finite() => Point {
            q: initial.to_vec(),
            logp,
            grad,
        },
        Ok((logp, _)) => return Err(SgpError::Sampler(format!("initial log density {logp}"))),
        Err(e) => return Err(SgpError::Sampler(format!("initial point: {e}"))),
    };
    s.evals += 1;

    let mut eps = initial_step(&mut s, &current, rng);
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    // Metric window: the middle half of warmup.
    let window = (cfg.warmup / 4, (3 * cfg.warmup) / 4);
    let adapt_metric = cfg.adapt_metric && window.1 - window.0 >= 20;
    let mut window_draws: Vec<Vec<f64>> = Vec::new();
    let mut warmup_divergences = 0;
    let steps_of = |rng: &mut Rng| rng.random_range(cfg.leapfrog_min..=cfg.leapfrog_max);

    for it in 0..cfg.warmup {
        let steps = steps_of(rng);
        let t = s.transition(&mut current, eps, steps, rng);
        if t.divergent {
            warmup_divergences += 1;
        }
        da.update(t.accept_prob);
        eps = da.current();
        if adapt_metric && (window.0..window.1).contains(&it) {
            window_draws.push(current.q.clone());
        }
        if adapt_metric && it + 1 == window.1 {
            let n = window_draws.len() as f64;
            for k in 0..dim {
                let mean = window_draws.iter().map(|q| q[k]).sum::<f64>() / n;
                let var = window_draws.iter().map(|q| (q[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                s.inv_metric[k] = (n / (n + 5.0)) * var + 1e-3 * 5.0 / (n + 5.0);
            }
            eps = initial_step(&mut s, &current, rng);
            da = DualAveraging::new(eps, cfg.target_accept);
        }
    }
    if warmup_divergences == cfg.warmup {
        return Err(SgpError::Sampler("every warmup transition diverged".into()));
    }
    eps = da.adapted();

    let mut draws = Vec::with_capacity(cfg.samples);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    for _ in 0..cfg.samples {
        let steps = steps_of(rng);
        let jittered = eps * rng.random_range(0.9..1.1);
        let t = s.transition(&mut current, jittered, steps, rng);
        accept_sum += t.accept_prob;
        if t.divergent {
            divergences += 1;
        } else {
            draws.push(current.q.clone());
        }
    }
    let accept_rate = accept_sum / cfg.samples as f64;
    log::debug!(
        "hmc: step {eps:.4e}, accept {accept_rate:.3}, divergences {divergences} (+{warmup_divergences} warmup), {} evaluations",
        s.evals
    );
    if draws.is_empty() {
        return Err(SgpError::Sampler("every sampling transition diverged".into()));
    }
    Ok(Chain {
        draws,
        step_size: eps,
        inv_metric: s.inv_metric,
        accept_rate,
        divergences,
        warmup_divergences,
        gradient_evals: s.evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn gaussian(vars: &'static [f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), String> {
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

    fn cfg() -> HmcConfig {
        HmcConfig {
            warmup: 500,
            samples: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn standard_normal_moments() {
        let chain = hmc_sample(gaussian(&[1.0]), &[0.5], &cfg(), &mut rng::stream(1, &[rng::HMC])).unwrap();
        let (m, v) = moments(&chain, 0);
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - 1.0).abs() < 0.1, "variance {v}");
    }

    #[test]
    fn anisotropic_normal_moments() {
        let vars = &[1.0, 4.0, 9.0];
        let chain = hmc_sample(gaussian(vars), &[0.0; 3], &cfg(), &mut rng::stream(2, &[rng::HMC])).unwrap();
        for (k, v) in vars.iter().enumerate() {
            let (_, got) = moments(&chain, k);
            assert!((got / v - 1.0).abs() < 0.15, "dim {k}: {got}");
        }
    }

    #[test]
    fn seeded_chains_repeat() {
        let a = hmc_sample(gaussian(&[1.0, 2.0]), &[0.1, 0.1], &HmcConfig::desk(), &mut rng::stream(5, &[])).unwrap();
        let b = hmc_sample(gaussian(&[1.0, 2.0]), &[0.1, 0.1], &HmcConfig::desk(), &mut rng::stream(5, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failing_target_reports() {
        let always_fail = |_: &[f64]| -> Result<(f64, Vec<f64>), String> { Err("nope".into()) };
        assert!(hmc_sample(always_fail, &[0.0], &HmcConfig::desk(), &mut rng::stream(0, &[])).is_err());
        let mut calls = 0;
        let fails_after_start = move |q: &[f64]| -> Result<(f64, Vec<f64>), String> {
            calls += 1;
            if calls == 1 { Ok((-0.5 * q[0] * q[0], vec![-q[0]])) } else { Err("x".into()) }
        };
        assert!(matches!(
            hmc_sample(fails_after_start, &[0.0], &HmcConfig::desk(), &mut rng::stream(0, &[])),
            Err(SgpError::Sampler(_))
        ));
    }

    #[test]
    fn thinning_keeps_last() {
        let chain = Chain {
            draws: (0..10).map(|i| vec![i as f64]).collect(),
            step_size: 0.1,
            inv_metric: vec![1.0],
            accept_rate: 0.8,
            divergences: 0,
            warmup_divergences: 0,
            gradient_evals: 0,
        };
        let t = chain.thinned(3);
        assert_eq!(t.len(), 3);
        assert_eq!(t[2], &[9.0]);
        assert_eq!(chain.thinned(20).len(), 10);
    }
}
