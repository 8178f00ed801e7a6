//! Reward-driven exploration: an epsilon-greedy policy picks a hypothesis
//! each step, the structured GP built on it scores the pool, and the model
//! is rewarded when total predictive uncertainty falls.
//!
//! Random streams are addressed below the master seed as
//! `[INIT, i, SEEDS]`, `[INIT, i, POOL]` and `[INIT, i, STEP, t, POLICY|HMC]`,
//! so initializations are independent of each other and of the worker count.

mod explore;
mod policy;
mod trace;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use explore::{Explorer, FitDiagnostics, LoopState};
pub use policy::{reward, select_model, total_uncertainty, Policy, RewardLedger};
pub use trace::{
    parse_trace, read_trace, replay_ledgers, write_trace, InitSummary, ModelSummary, Provenance,
    StepRecord, Summary, Trace, TraceWriter, TRACE_HEADER,
};

use crate::config::{ConfigError, ExperimentConfig};
use crate::data::{DataError, MoleculeRecord};
use crate::expr::{ExprError, Hypothesis};
use crate::sgp::SgpError;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("evaluation pool is exhausted")]
    PoolExhausted,
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Sgp(#[from] SgpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<ConfigError> for LearnError {
    fn from(e: ConfigError) -> Self {
        LearnError::Config(e.to_string())
    }
}

/// A failed initialization, with the steps it completed.
#[derive(Debug)]
pub struct InitFailure {
    pub init: usize,
    pub completed: Vec<StepRecord>,
    pub error: LearnError,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub traces: Vec<Vec<StepRecord>>,
    pub ledgers: Vec<RewardLedger>,
    pub summary: Summary,
}

pub fn trace_path(dir: &Path, init: usize) -> PathBuf {
    dir.join(format!("trace_init{init}.csv"))
}

fn log_line(r: &StepRecord, d: &FitDiagnostics) -> String {
    format!(
        "init={} step={} model={} n_train={} accept={:.4} divergences={} step_size={:.6e} U_total={} reward={} queried_id={}",
        r.init, r.step, r.model, d.n_train, d.accept_rate, d.divergences, d.step_size, r.u_total, r.reward, r.queried_id
    )
}

/// Runs one initialization to completion, writing its trace as it goes.
pub fn run_init(
    explorer: &Explorer<'_>,
    init: usize,
    out_dir: Option<&Path>,
    provenance: &Provenance,
) -> Result<(LoopState, Vec<String>), InitFailure> {
    let mut state = explorer.initial_state(init);
    let mut log = Vec::new();
    let fail = |state: &LoopState, error: LearnError| InitFailure {
        init,
        completed: state.trace.clone(),
        error,
    };
    let mut writer = match out_dir {
        Some(dir) => Some(TraceWriter::create(&trace_path(dir, init), provenance).map_err(|e| fail(&state, e))?),
        None => None,
    };
    for _ in 0..explorer.config.n_steps {
        let diag = explorer.step(&mut state).map_err(|e| fail(&state, e))?;
        let record = state.trace.last().expect("step appended a record");
        let line = log_line(record, &diag);
        log::info!("{line}");
        log.push(line);
        if let Some(w) = writer.as_mut() {
            w.write(record).map_err(|e| fail(&state, e))?;
        }
    }
    Ok((state, log))
}

/// Runs every initialization. With an output directory, writes per-init
/// traces, the merged `trace.csv`, `summary.json` and `run.log`.
pub fn run(
    records: &[MoleculeRecord],
    hypotheses: &[Hypothesis],
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<RunOutput, InitFailure> {
    let as_failure = |error: LearnError| InitFailure {
        init: 0,
        completed: Vec::new(),
        error,
    };
    let explorer = Explorer::new(records, hypotheses, config).map_err(as_failure)?;
    let provenance = Provenance {
        config_hash: config.hash(),
        seed: config.seed,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| as_failure(e.into()))?;
    }

    let n = config.n_init;
    let slots: Vec<Mutex<Option<Result<(LoopState, Vec<String>), InitFailure>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= n {
            break;
        }
        let result = run_init(&explorer, i, out_dir, &provenance);
        *slots[i].lock().expect("slot lock") = Some(result);
    };
    let workers = config.workers.min(n);
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let mut states = Vec::with_capacity(n);
    let mut log = Vec::new();
    for slot in slots {
        let (state, lines) = slot.into_inner().expect("slot lock").expect("every init ran")?;
        log.extend(lines);
        states.push(state);
    }
    let names: Vec<String> = hypotheses.iter().map(|h| h.name().to_string()).collect();
    let ledgers: Vec<RewardLedger> = states.iter().map(|s| s.ledger.clone()).collect();
    let summary = Summary::from_ledgers(&names, &ledgers, config.n_steps, &provenance);
    let traces: Vec<Vec<StepRecord>> = states.into_iter().map(|s| s.trace).collect();

    if let Some(dir) = out_dir {
        let write = || -> Result<(), LearnError> {
            let merged: Vec<StepRecord> = traces.iter().flatten().cloned().collect();
            write_trace(&dir.join("trace.csv"), &provenance, &merged)?;
            summary.write(&dir.join("summary.json"))?;
            let mut text = format!("# config_hash={}\n# seed={}\n", provenance.config_hash, provenance.seed);
            for line in &log {
                text.push_str(line);
                text.push('\n');
            }
            fs::write(dir.join("run.log"), text)?;
            Ok(())
        };
        write().map_err(as_failure)?;
    }
    Ok(RunOutput {
        traces,
        ledgers,
        summary,
    })
}
