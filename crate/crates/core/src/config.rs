//! Experiment configuration: one flat JSON object, hashed for provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Feature;
use crate::forge::ForgeSettings;
use crate::sgp::HmcConfig;

pub const KERNEL_MATERN52: &str = "matern52";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Canonical feature CSV. Unset means the bundled 500-row sample.
    pub dataset: Option<PathBuf>,
    /// Hypothesis file. Unset means the three bundled hypotheses.
    pub hypotheses: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,

    pub n_seed: usize,
    pub n_steps: usize,
    pub n_init: usize,
    pub epsilon: f64,
    /// Evaluation pool size per initialization; 0 uses the full pool.
    pub pool_subsample: usize,
    /// Leading rows reserved for hypothesis generation, never explored.
    pub hypothesis_subset: usize,
    pub gp_inputs: Vec<Feature>,
    pub target: Feature,

    pub kernel: String,
    pub lengthscale_prior_sd: f64,
    /// Noise prior scale as a fraction of the seed-set target spread.
    pub noise_prior_fraction: f64,

    pub warmup: usize,
    pub samples: usize,
    pub thin: usize,
    pub leapfrog_min: usize,
    pub leapfrog_max: usize,
    pub target_accept: f64,
    pub adapt_metric: bool,

    /// Fill the `seconds` trace column. Off by default so traces are
    /// byte-reproducible.
    pub record_time: bool,
    /// Threads over which initializations are spread.
    pub workers: usize,

    pub forge: ForgeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hmc = HmcConfig::default();
        ExperimentConfig {
            dataset: None,
            hypotheses: None,
            output_dir: PathBuf::from("out"),
            seed: 20220117,
            n_seed: 300,
            n_steps: 200,
            n_init: 5,
            epsilon: 0.3,
            pool_subsample: 2000,
            hypothesis_subset: 1000,
            gp_inputs: vec![Feature::Tpsa, Feature::MoleLogP],
            target: Feature::Fe,
            kernel: KERNEL_MATERN52.to_string(),
            lengthscale_prior_sd: 1.0,
            noise_prior_fraction: 0.1,
            warmup: hmc.warmup,
            samples: hmc.samples,
            thin: hmc.thin,
            leapfrog_min: hmc.leapfrog_min,
            leapfrog_max: hmc.leapfrog_max,
            target_accept: hmc.target_accept,
            adapt_metric: hmc.adapt_metric,
            record_time: false,
            workers: 1,
            forge: ForgeSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The desk-scale protocol: 3 initializations of 50 steps with a
    /// shorter chain.
    pub fn desk() -> Self {
        let hmc = HmcConfig::desk();
        ExperimentConfig {
            n_init: 3,
            n_steps: 50,
            warmup: hmc.warmup,
            samples: hmc.samples,
            thin: hmc.thin,
            ..Default::default()
        }
    }

    pub fn hmc(&self) -> HmcConfig {
        HmcConfig {
            warmup: self.warmup,
            samples: self.samples,
            thin: self.thin,
            leapfrog_min: self.leapfrog_min,
            leapfrog_max: self.leapfrog_max,
            target_accept: self.target_accept,
            adapt_metric: self.adapt_metric,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n_seed == 0 || self.n_init == 0 || self.workers == 0 {
            return bad("n_seed, n_init and workers must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.gp_inputs.is_empty() {
            return bad("gp_inputs is empty".into());
        }
        if self.gp_inputs.contains(&self.target) {
            return bad("target cannot be a GP input".into());
        }
        if self.kernel != KERNEL_MATERN52 {
            return bad(format!("unknown kernel `{}` (supported: {KERNEL_MATERN52})", self.kernel));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lengthscale_prior_sd) || !positive(self.noise_prior_fraction) {
            return bad("hyperprior scales must be positive".into());
        }
        self.hmc().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.forge.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every key except `output_dir` and
    /// `workers`, truncated to 16 hex digits.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = PathBuf::new();
        keyed.workers = 1;
        let json = serde_json::to_vec(&keyed).expect("configuration serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Applies `key=value` overrides, with the value parsed as JSON and
    /// falling back to a bare string.
    pub fn with_overrides<'a>(
        &self,
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConfigError> {
        let mut value = serde_json::to_value(self)?;
        let map = value.as_object_mut().expect("configuration is an object");
        for (key, raw) in overrides {
            if !map.contains_key(key) {
                return Err(ConfigError::Invalid(format!("unknown key `{key}`")));
            }
            let v = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            map.insert(key.to_string(), v);
        }
        Ok(serde_json::from_value(value)?)
    }
}
