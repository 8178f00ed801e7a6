use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

use super::LearnError;

/// Epsilon-greedy selection over hypotheses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Policy {
    epsilon: f64,
}

impl Policy {
    pub fn new(epsilon: f64) -> Result<Self, LearnError> {
        if (0.0..=1.0).contains(&epsilon) {
            Ok(Policy { epsilon })
        } else {
            Err(LearnError::Config(format!("epsilon {epsilon} outside [0, 1]")))
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Per-model cumulative reward and selection count.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardLedger {
    pub cumulative: Vec<i64>,
    pub selections: Vec<u64>,
}

impl RewardLedger {
    pub fn new(models: usize) -> Self {
        RewardLedger {
            cumulative: vec![0; models],
            selections: vec![0; models],
        }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Books a ±1 reward against `model`; a zero reward is not counted.
    pub fn record(&mut self, model: usize, reward: i32) {
        debug_assert!(matches!(reward, -1..=1));
        if reward != 0 {
            self.cumulative[model] += reward as i64;
            self.selections[model] += 1;
        }
    }

    /// Cumulative reward per counted selection; zero for unselected models.
    pub fn average(&self, model: usize) -> f64 {
        match self.selections[model] {
            0 => 0.0,
            s => self.cumulative[model] as f64 / s as f64,
        }
    }

    /// Model indices by average reward, best first; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.average(b).total_cmp(&self.average(a)));
        order
    }
}

/// With probability ε a uniform draw over models, otherwise the model with
/// the largest cumulative reward, ties to the lowest index.
pub fn select_model(ledger: &RewardLedger, policy: &Policy, rng: &mut Rng) -> usize {
    assert!(!ledger.is_empty(), "select_model needs at least one model");
    let explore = rng.random::<f64>() < policy.epsilon;
    if explore {
        return rng.random_range(0..ledger.len());
    }
    let mut best = 0;
    for (i, c) in ledger.cumulative.iter().enumerate() {
        if *c > ledger.cumulative[best] {
            best = i;
        }
    }
    best
}

/// Sum and median of predictive standard deviations over the pool.
pub fn total_uncertainty(variances: &[f64]) -> (f64, f64) {
    assert!(!variances.is_empty(), "total_uncertainty needs a non-empty pool");
    let mut sd: Vec<f64> = variances.iter().map(|v| v.max(0.0).sqrt()).collect();
    let total = sd.iter().sum();
    sd.sort_by(f64::total_cmp);
    let n = sd.len();
    let median = if n % 2 == 1 {
        sd[n / 2]
    } else {
        0.5 * (sd[n / 2 - 1] + sd[n / 2])
    };
    (total, median)
}

/// `+1` if uncertainty strictly decreased, `-1` otherwise, `0` without a
/// previous value.
pub fn reward(previous: Option<f64>, current: f64) -> i32 {
    match previous {
        None => 0,
        Some(p) if current < p => 1,
        Some(_) => -1,
    }
}
