use std::time::Instant;

use rand::seq::index;

use crate::config::ExperimentConfig;
use crate::data::MoleculeRecord;
use crate::expr::Hypothesis;
use crate::rng::{self, Rng};
use crate::sgp::{self, acquire, predict, GpData, Hyperpriors, Mean, SgpModel, TestPoints};

use super::policy::{reward, select_model, total_uncertainty, Policy, RewardLedger};
use super::trace::StepRecord;
use super::LearnError;

/// Sampler diagnostics for one step, kept for the run log.
#[derive(Clone, Debug, PartialEq)]
pub struct FitDiagnostics {
    pub n_train: usize,
    pub accept_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
}

#[derive(Clone, Debug)]
pub struct LoopState {
    pub init: usize,
    /// Row indices with observed targets, seeds first then queries in order.
    pub measured: Vec<usize>,
    /// Row indices of the evaluation and candidate pool, ascending.
    pub pool: Vec<usize>,
    pub ledger: RewardLedger,
    pub u_prev: Option<f64>,
    pub trace: Vec<StepRecord>,
}

impl LoopState {
    pub fn step(&self) -> usize {
        self.trace.len()
    }
}

/// The fixed inputs of an exploration run.
pub struct Explorer<'a> {
    pub records: &'a [MoleculeRecord],
    pub hypotheses: &'a [Hypothesis],
    pub config: &'a ExperimentConfig,
}

impl<'a> Explorer<'a> {
    pub fn new(
        records: &'a [MoleculeRecord],
        hypotheses: &'a [Hypothesis],
        config: &'a ExperimentConfig,
    ) -> Result<Self, LearnError> {
        config.validate()?;
        if hypotheses.is_empty() {
            return Err(LearnError::Config("no hypotheses".into()));
        }
        let eligible = records.len().saturating_sub(config.hypothesis_subset);
        if eligible <= config.n_seed {
            return Err(LearnError::Config(format!(
                "{} rows outside the hypothesis subset of {} cannot hold {} seeds and a pool",
                eligible, config.hypothesis_subset, config.n_seed
            )));
        }
        Ok(Explorer {
            records,
            hypotheses,
            config,
        })
    }

    /// Draws seeds and the fixed evaluation pool for initialization `init`.
    pub fn initial_state(&self, init: usize) -> LoopState {
        let cfg = self.config;
        let first = cfg.hypothesis_subset;
        let eligible = self.records.len() - first;
        let mut seed_rng = rng::stream(cfg.seed, &[rng::INIT, init as u64, rng::SEEDS]);
        let mut is_seed = vec![false; eligible];
        for i in index::sample(&mut seed_rng, eligible, cfg.n_seed) {
            is_seed[i] = true;
        }
        let measured: Vec<usize> = (0..eligible).filter(|&i| is_seed[i]).map(|i| first + i).collect();
        let rest: Vec<usize> = (0..eligible).filter(|&i| !is_seed[i]).map(|i| first + i).collect();
        let pool = if cfg.pool_subsample == 0 || cfg.pool_subsample >= rest.len() {
            rest
        } else {
            let mut pool_rng = rng::stream(cfg.seed, &[rng::INIT, init as u64, rng::POOL]);
            let mut picked = index::sample(&mut pool_rng, rest.len(), cfg.pool_subsample).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| rest[i]).collect()
        };
        LoopState {
            init,
            measured,
            pool,
            ledger: RewardLedger::new(self.hypotheses.len()),
            u_prev: None,
            trace: Vec::new(),
        }
    }

    fn rows(&self, idx: &[usize]) -> Vec<MoleculeRecord> {
        idx.iter().map(|&i| self.records[i].clone()).collect()
    }

    fn step_rng(&self, state: &LoopState, tag: u64) -> Rng {
        rng::stream(
            self.config.seed,
            &[rng::INIT, state.init as u64, rng::STEP, state.step() as u64, tag],
        )
    }

    /// One exploration step: select, fit, predict, reward, acquire, query.
    pub fn step(&self, state: &mut LoopState) -> Result<FitDiagnostics, LearnError> {
        if state.pool.is_empty() {
            return Err(LearnError::PoolExhausted);
        }
        let cfg = self.config;
        let started = Instant::now();
        let policy = Policy::new(cfg.epsilon)?;
        let model_index = select_model(&state.ledger, &policy, &mut self.step_rng(state, rng::POLICY));
        let h = &self.hypotheses[model_index];

        let train = self.rows(&state.measured);
        let data = GpData::from_records(&train, &cfg.gp_inputs, cfg.target)?;
        let mean = Mean::structured(h, &train);
        let priors = Hyperpriors::from_data_scaled(&data, &mean, cfg.noise_prior_fraction, cfg.lengthscale_prior_sd);
        let model = SgpModel::new(data, mean, priors)?;
        let posterior = sgp::fit(&model, &cfg.hmc(), &mut self.step_rng(state, rng::HMC))?;

        let pool_rows = self.rows(&state.pool);
        let test = TestPoints {
            x: pool_rows
                .iter()
                .flat_map(|r| cfg.gp_inputs.iter().map(|f| r.get(*f)))
                .collect(),
            dims: cfg.gp_inputs.len(),
            mean_inputs: Some(h.mean_inputs(&pool_rows)),
        };
        let prediction = predict(&model, &posterior.samples, &test, false)?;
        let (u_total, u_median) = total_uncertainty(&prediction.variance);
        let r = reward(state.u_prev, u_total);
        state.ledger.record(model_index, r);
        state.u_prev = Some(u_total);

        let ids: Vec<u64> = pool_rows.iter().map(|r| r.id).collect();
        let queried_id = acquire(&prediction, &ids).expect("pool is non-empty");
        let at = ids.iter().position(|&id| id == queried_id).expect("acquired id is in the pool");
        let row = state.pool.remove(at);
        state.measured.push(row);

        state.trace.push(StepRecord {
            step: state.step(),
            init: state.init,
            model: h.name().to_string(),
            u_total,
            u_median,
            reward: r,
            queried_id,
            seconds: cfg.record_time.then(|| started.elapsed().as_secs_f64()),
        });
        Ok(FitDiagnostics {
            n_train: model.data().len(),
            accept_rate: posterior.chain.accept_rate,
            divergences: posterior.chain.divergences,
            step_size: posterior.chain.step_size,
        })
    }
}
