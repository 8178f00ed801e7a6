//! Structured Gaussian processes: a Matérn-5/2 kernel around a parametric
//! mean, with kernel and mean parameters sampled jointly by HMC.

mod hmc;
mod kernel;
pub mod linalg;
mod model;
mod predict;

pub use hmc::{hmc_sample, Chain, DualAveraging, HmcConfig, DIVERGENCE_THRESHOLD};
pub use kernel::{matern52, matern52_corr, KernelHyper};
pub use model::{
    normal_log_pdf, GpData, Hyperpriors, Mean, Sample, SgpModel, JITTER, MAX_JITTER,
};
pub use predict::{acquire, predict, predict_sample, Prediction, TestPoints};

use crate::expr::ExprError;
use crate::rng::Rng;

#[derive(Debug, thiserror::Error)]
pub enum SgpError {
    #[error("cholesky failed at jitter {jitter:e} (hyperparameters {hyper})")]
    Cholesky { jitter: f64, hyper: String },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Posterior draws kept for prediction plus chain diagnostics.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub samples: Vec<Sample>,
    pub chain: Chain,
}

/// Samples the joint posterior of `model`, starting from its prior centre.
pub fn fit(model: &SgpModel, cfg: &HmcConfig, rng: &mut Rng) -> Result<Posterior, SgpError> {
    let chain = hmc_sample(|u: &[f64]| model.log_density_grad(u), &model.initial_point(), cfg, rng)?;
    let samples = chain.thinned(cfg.thin).into_iter().map(|u| model.unpack(u)).collect();
    log::debug!(
        "fit: accept {:.3}, divergences {}, step {:.3e}",
        chain.accept_rate,
        chain.divergences,
        chain.step_size
    );
    Ok(Posterior { samples, chain })
}
