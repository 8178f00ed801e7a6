use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::RewardLedger;
use super::LearnError;

/// One exploration step as written to the trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub init: usize,
    pub model: String,
    #[serde(rename = "U_total")]
    pub u_total: f64,
    #[serde(rename = "U_median")]
    pub u_median: f64,
    pub reward: i32,
    pub queried_id: u64,
    pub seconds: Option<f64>,
}

/// Provenance lines heading every output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn lines(&self) -> [String; 2] {
        [
            format!("# config_hash={}", self.config_hash),
            format!("# seed={}", self.seed),
        ]
    }
}

/// Appends step records to a trace CSV, flushing after each one.
pub struct TraceWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl TraceWriter {
    pub fn create(path: &Path, provenance: &Provenance) -> Result<Self, LearnError> {
        let mut file = BufWriter::new(File::create(path)?);
        for line in provenance.lines() {
            writeln!(file, "{line}")?;
        }
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(TRACE_HEADER)?;
        inner.flush()?;
        Ok(TraceWriter { inner })
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<(), LearnError> {
        self.inner.serialize(TraceRow::from(record))?;
        self.inner.flush()?;
        Ok(())
    }
}

pub const TRACE_HEADER: [&str; 8] = [
    "step",
    "init",
    "model",
    "U_total",
    "U_median",
    "reward",
    "queried_id",
    "seconds",
];

// Serialized without a header so that an empty trace still carries one.
#[derive(Serialize)]
struct TraceRow<'a> {
    step: usize,
    init: usize,
    model: &'a str,
    u_total: f64,
    u_median: f64,
    reward: i32,
    queried_id: u64,
    seconds: Option<f64>,
}

impl<'a> From<&'a StepRecord> for TraceRow<'a> {
    fn from(r: &'a StepRecord) -> Self {
        TraceRow {
            step: r.step,
            init: r.init,
            model: &r.model,
            u_total: r.u_total,
            u_median: r.u_median,
            reward: r.reward,
            queried_id: r.queried_id,
            seconds: r.seconds,
        }
    }
}

pub fn write_trace(path: &Path, provenance: &Provenance, records: &[StepRecord]) -> Result<(), LearnError> {
    let mut w = TraceWriter::create(path, provenance)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

/// A parsed trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub provenance: Option<Provenance>,
    pub records: Vec<StepRecord>,
}

pub fn parse_trace(text: &str) -> Result<Trace, LearnError> {
    let mut hash = None;
    let mut seed = None;
    let mut body_start = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim_end();
        let Some(comment) = line.strip_prefix('#') else { break };
        body_start += raw.len();
        let comment = comment.trim();
        if let Some(h) = comment.strip_prefix("config_hash=") {
            hash = Some(h.to_string());
        } else if let Some(s) = comment.strip_prefix("seed=") {
            seed = Some(
                s.parse()
                    .map_err(|_| LearnError::Trace(format!("bad seed line `{line}`")))?,
            );
        }
    }
    let body = &text[body_start..];
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(LearnError::Trace(format!(
            "unexpected trace header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let records = reader
        .deserialize()
        .collect::<Result<Vec<StepRecord>, _>>()
        .map_err(|e| LearnError::Trace(e.to_string()))?;
    let provenance = match (hash, seed) {
        (Some(config_hash), Some(seed)) => Some(Provenance { config_hash, seed }),
        _ => None,
    };
    Ok(Trace { provenance, records })
}

pub fn read_trace(path: &Path) -> Result<Trace, LearnError> {
    parse_trace(&fs::read_to_string(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub average_reward: f64,
    pub selections: u64,
    pub final_cumulative: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSummary {
    pub init: usize,
    pub models: Vec<ModelSummary>,
    /// Model names by average reward, best first.
    pub ranking: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub n_init: usize,
    pub n_steps: usize,
    /// Pooled over initializations: total reward per counted selection.
    pub models: Vec<ModelSummary>,
    pub ranking: Vec<String>,
    pub per_init: Vec<InitSummary>,
}

fn model_summaries(names: &[String], ledger: &RewardLedger) -> Vec<ModelSummary> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| ModelSummary {
            name: name.clone(),
            average_reward: ledger.average(i),
            selections: ledger.selections[i],
            final_cumulative: ledger.cumulative[i],
        })
        .collect()
}

impl Summary {
    pub fn from_ledgers(
        names: &[String],
        ledgers: &[RewardLedger],
        n_steps: usize,
        provenance: &Provenance,
    ) -> Summary {
        let mut pooled = RewardLedger::new(names.len());
        let per_init = ledgers
            .iter()
            .enumerate()
            .map(|(init, l)| {
                for m in 0..names.len() {
                    pooled.cumulative[m] += l.cumulative[m];
                    pooled.selections[m] += l.selections[m];
                }
                InitSummary {
                    init,
                    models: model_summaries(names, l),
                    ranking: l.ranking().into_iter().map(|i| names[i].clone()).collect(),
                }
            })
            .collect();
        Summary {
            config_hash: provenance.config_hash.clone(),
            seed: provenance.seed,
            n_init: ledgers.len(),
            n_steps,
            models: model_summaries(names, &pooled),
            ranking: pooled.ranking().into_iter().map(|i| names[i].clone()).collect(),
            per_init,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), LearnError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Rebuilds each initialization's ledger from trace records.
pub fn replay_ledgers(names: &[String], records: &[StepRecord]) -> Result<Vec<RewardLedger>, LearnError> {
    let mut ledgers: Vec<RewardLedger> = Vec::new();
    for r in records {
        let m = names
            .iter()
            .position(|n| *n == r.model)
            .ok_or_else(|| LearnError::Trace(format!("unknown model `{}`", r.model)))?;
        if !matches!(r.reward, -1..=1) {
            return Err(LearnError::Trace(format!("reward {} out of range", r.reward)));
        }
        while ledgers.len() <= r.init {
            ledgers.push(RewardLedger::new(names.len()));
        }
        ledgers[r.init].record(m, r.reward);
    }
    Ok(ledgers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize, model: &str, reward: i32) -> StepRecord {
        StepRecord {
            step,
            init: 0,
            model: model.into(),
            u_total: 10.0 - step as f64 * 0.1,
            u_median: 0.1 + step as f64,
            reward,
            queried_id: 100 + step as u64,
            seconds: None,
        }
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 9,
        };
        let mut rs = vec![rec(0, "model1", 0), rec(1, "model2", 1)];
        rs[1].seconds = Some(0.25);
        write_trace(&path, &prov, &rs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=abc\n# seed=9\nstep,init,model,U_total,U_median,reward,queried_id,seconds\n"));
        assert!(text.lines().nth(3).unwrap().ends_with(",100,"));
        let back = read_trace(&path).unwrap();
        assert_eq!(back.records, rs);
        assert_eq!(back.provenance, Some(prov.clone()));

        write_trace(&path, &prov, &[]).unwrap();
        assert!(read_trace(&path).unwrap().records.is_empty());
    }

    #[test]
    fn malformed_traces_are_rejected() {
        assert!(parse_trace("step,init\n1,2\n").is_err());
        let bad = "step,init,model,U_total,U_median,reward,queried_id,seconds\nx,0,m,1,1,1,1,\n";
        assert!(parse_trace(bad).is_err());
    }

    #[test]
    fn summary_pools_inits() {
        let names = vec!["a".to_string(), "b".to_string()];
        let mut l0 = RewardLedger::new(2);
        l0.record(0, 1);
        l0.record(1, -1);
        let mut l1 = RewardLedger::new(2);
        l1.record(1, 1);
        l1.record(1, 1);
        let prov = Provenance {
            config_hash: "h".into(),
            seed: 1,
        };
        let s = Summary::from_ledgers(&names, &[l0, l1], 3, &prov);
        assert_eq!(s.models[0].average_reward, 1.0);
        assert_eq!(s.models[1].average_reward, 1.0 / 3.0);
        assert_eq!(s.models[1].selections, 3);
        assert_eq!(s.ranking, vec!["a", "b"]);
        assert_eq!(s.per_init[1].ranking, vec!["b", "a"]);
    }

    #[test]
    fn replay_matches_records() {
        let names = vec!["m1".to_string(), "m2".to_string()];
        let rs = vec![rec(0, "m1", 0), rec(1, "m2", 1), rec(2, "m2", -1), rec(3, "m1", 1)];
        let l = replay_ledgers(&names, &rs).unwrap();
        assert_eq!(l[0].cumulative, vec![1, 0]);
        assert_eq!(l[0].selections, vec![1, 2]);
        assert!(replay_ledgers(&names, &[rec(0, "zz", 0)]).is_err());
    }
}
