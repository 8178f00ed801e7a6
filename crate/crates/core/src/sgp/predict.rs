use crate::expr::MeanInputs;

use super::kernel::matern52_corr;
use super::linalg;
use super::model::{Sample, SgpModel};
use super::SgpError;

/// Prediction inputs: GP coordinates (row-major) and, for a structured mean,
/// the hypothesis inputs at the same rows.
#[derive(Clone, Debug)]
pub struct TestPoints {
    pub x: Vec<f64>,
    pub dims: usize,
    pub mean_inputs: Option<MeanInputs>,
}

impl TestPoints {
    pub fn len(&self) -> usize {
        self.x.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dims..(i + 1) * self.dims]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    /// Latent (noise-free) variance.
    pub variance: Vec<f64>,
    pub sample_means: Option<Vec<Vec<f64>>>,
}

fn test_mean(model: &SgpModel, sample: &Sample, test: &TestPoints) -> Result<Vec<f64>, SgpError> {
    match (model.mean().hypothesis(), &test.mean_inputs) {
        (None, _) => Ok(vec![0.0; test.len()]),
        (Some(h), Some(inputs)) => Ok(h.eval_inputs(inputs, &sample.phi)?),
        (Some(_), None) => Err(SgpError::Shape("structured mean needs test mean inputs".into())),
    }
}

/// Posterior mean and latent variance at `test` under one sample.
pub fn predict_sample(
    model: &SgpModel,
    sample: &Sample,
    test: &TestPoints,
) -> Result<(Vec<f64>, Vec<f64>), SgpError> {
    let data = model.data();
    if test.dims != data.dims {
        return Err(SgpError::Shape("test dimension differs from training".into()));
    }
    sample.hyper.validate()?;
    let mut mu = test_mean(model, sample, test)?;
    let sf2 = sample.hyper.signal_variance;
    let mut var = vec![sf2; test.len()];
    let n = data.len();
    if n == 0 {
        return Ok((mu, var));
    }
    let factor = model.factorize(&sample.hyper)?;
    let m = model.mean_at_training(&sample.phi)?;
    let mut alpha: Vec<f64> = data.y.iter().zip(&m).map(|(y, m)| y - m).collect();
    linalg::cholesky_solve(&factor.l, n, &mut alpha);
    let inv_l2: Vec<f64> = sample.hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    let mut ks = vec![0.0; n];
    for t in 0..test.len() {
        let xs = test.row(t);
        for (i, k) in ks.iter_mut().enumerate() {
            let r2: f64 = xs
                .iter()
                .zip(data.row(i))
                .zip(&inv_l2)
                .map(|((a, b), w)| (a - b) * (a - b) * w)
                .sum();
            *k = sf2 * matern52_corr(r2.sqrt());
        }
        mu[t] += ks.iter().zip(&alpha).map(|(k, a)| k * a).sum::<f64>();
        linalg::solve_lower(&factor.l, n, &mut ks);
        var[t] = (sf2 - ks.iter().map(|v| v * v).sum::<f64>()).max(0.0);
    }
    Ok((mu, var))
}

/// Aggregate over samples: mean of means, and mean variance plus the
/// variance of the means.
pub fn predict(
    model: &SgpModel,
    samples: &[Sample],
    test: &TestPoints,
    keep_sample_means: bool,
) -> Result<Prediction, SgpError> {
    if samples.is_empty() {
        return Err(SgpError::Shape("no posterior samples".into()));
    }
    let t = test.len();
    let mut sum_mu = vec![0.0; t];
    let mut sum_mu2 = vec![0.0; t];
    let mut sum_var = vec![0.0; t];
    let mut kept = keep_sample_means.then(Vec::new);
    for s in samples {
        let (mu, var) = predict_sample(model, s, test)?;
        for i in 0..t {
            sum_mu[i] += mu[i];
            sum_mu2[i] += mu[i] * mu[i];
            sum_var[i] += var[i];
        }
        if let Some(k) = kept.as_mut() {
            k.push(mu);
        }
    }
    let m = samples.len() as f64;
    let mean: Vec<f64> = sum_mu.iter().map(|s| s / m).collect();
    let variance = (0..t)
        .map(|i| (sum_var[i] / m + (sum_mu2[i] / m - mean[i] * mean[i]).max(0.0)).max(0.0))
        .collect();
    Ok(Prediction {
        mean,
        variance,
        sample_means: kept,
    })
}

/// Pool id with the largest aggregated variance; ties go to the lowest id.
pub fn acquire(prediction: &Prediction, pool_ids: &[u64]) -> Option<u64> {
    prediction
        .variance
        .iter()
        .zip(pool_ids)
        .max_by(|(va, ia), (vb, ib)| va.total_cmp(vb).then(ib.cmp(ia)))
        .map(|(_, id)| *id)
}
