//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `HYPOLEARN_QM9` to a canonical feature CSV extracted from QM9 to run
//! the desk-scale reproduction and the forge check on real data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use hypolearn::config::ExperimentConfig;
use hypolearn::data::{load_feature_table, MoleculeRecord, Schema};
use hypolearn::expr::{bundled_hypotheses, canonical_form, parse};
use hypolearn::forge::forge;
use hypolearn::learning::{self, Summary};
use hypolearn::selfcheck::{self, CheckResult};
use hypolearn::synth::{synth_records, SynthConfig};

const QM9_ENV: &str = "HYPOLEARN_QM9";

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Line {
    name: &'static str,
    status: Status,
    detail: String,
    seconds: f64,
}

fn from_check(r: CheckResult, limit: f64) -> Line {
    let mut detail = r.detail;
    let within = r.seconds < limit;
    if !within {
        detail = format!("{detail}; exceeded {limit} s");
    }
    Line {
        name: r.name,
        status: if r.passed && within { Status::Pass } else { Status::Fail },
        detail,
        seconds: r.seconds,
    }
}

fn timed(name: &'static str, limit: f64, check: impl FnOnce() -> Result<String, String>) -> Line {
    let t = Instant::now();
    let outcome = check();
    let seconds = t.elapsed().as_secs_f64();
    let (passed, mut detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if seconds >= limit {
        detail = format!("{detail}; exceeded {limit} s");
    }
    Line {
        name,
        status: if passed && seconds < limit { Status::Pass } else { Status::Fail },
        detail,
        seconds,
    }
}

fn skip(name: &'static str, detail: &str) -> Line {
    Line {
        name,
        status: Status::Skip,
        detail: detail.to_string(),
        seconds: 0.0,
    }
}

fn winners(summary: &Summary) -> Vec<String> {
    summary.per_init.iter().map(|i| i.ranking[0].clone()).collect()
}

fn planted_truth() -> Line {
    timed("planted-truth", 15.0 * 60.0, || {
        let rows = synth_records(&SynthConfig::planted_model1(2000, 1));
        let cfg = ExperimentConfig {
            n_init: 3,
            n_steps: 30,
            n_seed: 100,
            hypothesis_subset: 1000,
            epsilon: 0.3,
            ..ExperimentConfig::desk()
        };
        let out = learning::run(&rows, &bundled_hypotheses(), &cfg, None).map_err(|f| f.error.to_string())?;
        let top = winners(&out.summary);
        let wins = top.iter().filter(|m| *m == "model1").count();
        let detail = format!("per-init leaders {top:?}, model1 leads {wins} of 3");
        if wins >= 2 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn qm9_records() -> Option<Result<Vec<MoleculeRecord>, String>> {
    let path = std::env::var_os(QM9_ENV)?;
    Some(
        load_feature_table(Path::new(&path), &Schema::canonical())
            .map(|t| t.records().to_vec())
            .map_err(|e| e.to_string()),
    )
}

fn desk_qm9() -> Line {
    let Some(records) = qm9_records() else {
        return skip("desk-qm9", &format!("dataset not available; set {QM9_ENV}"));
    };
    timed("desk-qm9", 2.0 * 3600.0, || {
        let rows = records?;
        let cfg = ExperimentConfig::desk();
        let out = learning::run(&rows, &bundled_hypotheses(), &cfg, None).map_err(|f| f.error.to_string())?;
        let last: Vec<&String> = out.summary.per_init.iter().map(|i| i.ranking.last().expect("models")).collect();
        let model3_last = last.iter().filter(|m| **m == "model3").count();
        let pooled_last = out.summary.ranking.last().map(String::as_str) == Some("model3");
        let detail = format!(
            "per-init last {last:?}, pooled ranking {:?}",
            out.summary.ranking
        );
        if model3_last >= 2 && pooled_last {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

fn forge_qm9() -> Line {
    let Some(records) = qm9_records() else {
        return from_check(selfcheck::forge_planted(), f64::INFINITY);
    };
    timed("forge-qm9", f64::INFINITY, || {
        let rows = records?;
        let subset = &rows[..rows.len().min(1000)];
        let out = forge(subset, &Default::default()).map_err(|e| e.to_string())?;
        let want = canonical_form(&parse("IE*(1+(TPSA/SP)^2)", |_| false).map_err(|e| e.to_string())?);
        let got: Vec<String> = out.hypotheses.iter().map(|h| h.canonical()).collect();
        match got.iter().position(|c| *c == want) {
            Some(i) => Ok(format!("IE*(1+(TPSA/SP)^2) is forged hypothesis {} of {}", i + 1, got.len())),
            None => Err(format!("not among forged hypotheses {got:?}")),
        }
    })
}

fn trace_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("trace")))
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Line {
    timed("cli-determinism", 120.0, || {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut dirs = Vec::new();
        for run in ["a", "b"] {
            let dir = tmp.path().join(run);
            let status = Command::new(env!("CARGO_BIN_EXE_hypolearn"))
                .args(["learn", "--n-init", "2", "--n-steps", "3", "--n-seed", "40"])
                .args(["--hypothesis-subset", "100", "--pool-subsample", "150"])
                .args(["--warmup", "60", "--samples", "60", "--thin", "10", "--workers", "2"])
                .arg("--output-dir")
                .arg(&dir)
                .env_remove("HYPOLEARN_OUTPUT_DIR")
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("learn failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            dirs.push(dir);
        }
        let a = trace_files(&dirs[0]);
        let b = trace_files(&dirs[1]);
        if a.len() != 3 || a.iter().map(|p| p.file_name()).ne(b.iter().map(|p| p.file_name())) {
            return Err(format!("unexpected trace files {a:?} vs {b:?}"));
        }
        for (x, y) in a.iter().zip(&b) {
            if fs::read(x).map_err(|e| e.to_string())? != fs::read(y).map_err(|e| e.to_string())? {
                return Err(format!("{} differs between runs", x.display()));
            }
        }
        Ok(format!("{} trace files byte-identical across two invocations", a.len()))
    })
}

fn main() -> ExitCode {
    let checks: Vec<Box<dyn Fn() -> Line>> = vec![
        Box::new(|| from_check(selfcheck::gp_oracle(200, 101), 10.0)),
        Box::new(|| from_check(selfcheck::gradient_fd(50, 102), 30.0)),
        Box::new(|| from_check(selfcheck::lasso(50, 103), 10.0)),
        Box::new(|| from_check(selfcheck::hmc_moments(), 60.0)),
        Box::new(|| from_check(selfcheck::interpolation(), 10.0)),
        Box::new(planted_truth),
        Box::new(desk_qm9),
        Box::new(forge_qm9),
        Box::new(cli_determinism),
    ];
    let mut failed = 0;
    for check in checks {
        let line = check();
        let status = match line.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("{status} {} ({:.2}s): {}", line.name, line.seconds, line.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
