//! Plot-ready aggregates of exploration traces and dataset histograms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{histogram, histogram_in_range, DataError, Feature, FeatureTable};
use crate::learning::{LearnError, Provenance, StepRecord, Trace};

/// One exploration series: a single initialization from one trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub source: usize,
    pub init: usize,
    pub records: Vec<StepRecord>,
}

/// Splits traces into per-initialization series, ordered by source then init.
pub fn series(traces: &[Trace]) -> Vec<Series> {
    let mut out: BTreeMap<(usize, usize), Vec<StepRecord>> = BTreeMap::new();
    for (source, t) in traces.iter().enumerate() {
        for r in &t.records {
            out.entry((source, r.init)).or_default().push(r.clone());
        }
    }
    out.into_iter()
        .map(|((source, init), mut records)| {
            records.sort_by_key(|r| r.step);
            Series { source, init, records }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardRow {
    /// `None` for the pooled row.
    pub series: Option<(usize, usize)>,
    pub model: String,
    pub average_reward: f64,
    pub selections: u64,
    pub cumulative: i64,
}

fn reward_rows(key: Option<(usize, usize)>, records: &[&StepRecord], models: &BTreeSet<String>) -> Vec<RewardRow> {
    models
        .iter()
        .map(|m| {
            let counted: Vec<i32> = records
                .iter()
                .filter(|r| r.model == *m && r.reward != 0)
                .map(|r| r.reward)
                .collect();
            let cumulative: i64 = counted.iter().map(|&r| r as i64).sum();
            let selections = counted.len() as u64;
            RewardRow {
                series: key,
                model: m.clone(),
                average_reward: if selections == 0 { 0.0 } else { cumulative as f64 / selections as f64 },
                selections,
                cumulative,
            }
        })
        .collect()
}

/// Per-series and pooled average reward per model.
pub fn average_rewards(series: &[Series]) -> Vec<RewardRow> {
    let models: BTreeSet<String> = series.iter().flat_map(|s| s.records.iter().map(|r| r.model.clone())).collect();
    let mut rows = Vec::new();
    for s in series {
        let recs: Vec<&StepRecord> = s.records.iter().collect();
        rows.extend(reward_rows(Some((s.source, s.init)), &recs, &models));
    }
    let all: Vec<&StepRecord> = series.iter().flat_map(|s| &s.records).collect();
    rows.extend(reward_rows(None, &all, &models));
    rows
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanCurvePoint {
    pub step: usize,
    pub n_series: usize,
    pub u_total: f64,
    pub u_median: f64,
    pub reward: f64,
}

/// Arithmetic means across series at each step.
pub fn mean_curves(series: &[Series]) -> Vec<MeanCurvePoint> {
    let mut acc: BTreeMap<usize, (usize, f64, f64, f64)> = BTreeMap::new();
    for s in series {
        for r in &s.records {
            let e = acc.entry(r.step).or_insert((0, 0.0, 0.0, 0.0));
            e.0 += 1;
            e.1 += r.u_total;
            e.2 += r.u_median;
            e.3 += r.reward as f64;
        }
    }
    acc.into_iter()
        .map(|(step, (n, ut, um, rw))| {
            let k = n as f64;
            MeanCurvePoint {
                step,
                n_series: n,
                u_total: ut / k,
                u_median: um / k,
                reward: rw / k,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramRow {
    pub lo: f64,
    pub hi: f64,
    pub density_full: f64,
    pub density_subset: f64,
}

/// Densities of `feature` over the full table and its first `subset` rows,
/// on the full table's bins.
pub fn subset_histogram(
    table: &FeatureTable,
    feature: Feature,
    subset: usize,
    bins: usize,
) -> Result<Vec<HistogramRow>, DataError> {
    let full = table.column(feature);
    let head = &full[..subset.min(full.len())];
    let hf = histogram(&full, bins)?;
    let (lo, hi) = (hf.edges[0], hf.edges[bins]);
    let hs = histogram_in_range(head, bins, lo, hi)?;
    Ok((0..bins)
        .map(|b| HistogramRow {
            lo: hf.edges[b],
            hi: hf.edges[b + 1],
            density_full: hf.densities[b],
            density_subset: hs.densities[b],
        })
        .collect())
}

fn header(provenance: &[Provenance]) -> String {
    let mut out = String::new();
    for p in provenance {
        let _ = writeln!(out, "# config_hash={}", p.config_hash);
        let _ = writeln!(out, "# seed={}", p.seed);
    }
    out
}

fn write_csv(path: &Path, provenance: &[Provenance], head: &[&str], rows: Vec<Vec<String>>) -> Result<(), LearnError> {
    let mut bytes = header(provenance).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        w.write_record(head)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Inputs to [`write_report`].
pub struct ReportInputs<'a> {
    pub traces: &'a [Trace],
    /// Dataset for the target histogram, with the subset size and bin count.
    pub histogram: Option<(&'a FeatureTable, Feature, usize, usize)>,
}

/// Writes `average_reward.csv`, `curves.csv`, `curves_mean.csv` and, with a
/// dataset, `histogram.csv`. Returns the paths written.
pub fn write_report(dir: &Path, inputs: &ReportInputs<'_>) -> Result<Vec<PathBuf>, LearnError> {
    fs::create_dir_all(dir)?;
    let mut provenance: Vec<Provenance> = Vec::new();
    for p in inputs.traces.iter().filter_map(|t| t.provenance.clone()) {
        if !provenance.contains(&p) {
            provenance.push(p);
        }
    }
    let series = series(inputs.traces);
    let key = |s: Option<(usize, usize)>| match s {
        Some((src, init)) => (src.to_string(), init.to_string()),
        None => ("all".to_string(), "all".to_string()),
    };
    let mut written = Vec::new();

    let path = dir.join("average_reward.csv");
    let rows = average_rewards(&series)
        .into_iter()
        .map(|r| {
            let (src, init) = key(r.series);
            vec![src, init, r.model, r.average_reward.to_string(), r.selections.to_string(), r.cumulative.to_string()]
        })
        .collect();
    write_csv(&path, &provenance, &["source", "init", "model", "average_reward", "selections", "cumulative"], rows)?;
    written.push(path);

    let path = dir.join("curves.csv");
    let mut rows = Vec::new();
    for s in &series {
        let mut cumulative: BTreeMap<&str, i64> = BTreeMap::new();
        for r in &s.records {
            let c = cumulative.entry(&r.model).or_insert(0);
            *c += r.reward as i64;
            rows.push(vec![
                s.source.to_string(),
                s.init.to_string(),
                r.step.to_string(),
                r.model.clone(),
                r.u_total.to_string(),
                r.u_median.to_string(),
                r.reward.to_string(),
                c.to_string(),
            ]);
        }
    }
    write_csv(
        &path,
        &provenance,
        &["source", "init", "step", "model", "U_total", "U_median", "reward", "model_cumulative"],
        rows,
    )?;
    written.push(path);

    let path = dir.join("curves_mean.csv");
    let rows = mean_curves(&series)
        .into_iter()
        .map(|p| {
            vec![
                p.step.to_string(),
                p.n_series.to_string(),
                p.u_total.to_string(),
                p.u_median.to_string(),
                p.reward.to_string(),
            ]
        })
        .collect();
    write_csv(&path, &provenance, &["step", "n_series", "U_total", "U_median", "reward"], rows)?;
    written.push(path);

    if let Some((table, feature, subset, bins)) = inputs.histogram {
        let path = dir.join("histogram.csv");
        let rows = subset_histogram(table, feature, subset, bins)?
            .into_iter()
            .map(|h| vec![h.lo.to_string(), h.hi.to_string(), h.density_full.to_string(), h.density_subset.to_string()])
            .collect();
        write_csv(&path, &provenance, &["bin_lo", "bin_hi", "density_full", "density_subset"], rows)?;
        written.push(path);
    }
    Ok(written)
}
