use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hypolearn::data::{Feature, MoleculeRecord};
use hypolearn::expr::bundled_hypotheses;
use hypolearn::forge::{center, lambda_grid, lambda_max, lasso_path, standardize};
use hypolearn::rng;
use hypolearn::sgp::{self, predict_sample, GpData, HmcConfig, Hyperpriors, Mean, SgpModel, TestPoints};
use hypolearn::synth::{synth_records, SynthConfig};

const INPUTS: [Feature; 2] = [Feature::Tpsa, Feature::MoleLogP];

fn model(rows: &[MoleculeRecord]) -> SgpModel {
    let h = &bundled_hypotheses()[0];
    let data = GpData::from_records(rows, &INPUTS, Feature::Fe).unwrap();
    let mean = Mean::structured(h, rows);
    let priors = Hyperpriors::from_data(&data, &mean);
    SgpModel::new(data, mean, priors).unwrap()
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_density_grad");
    for n in [50, 100, 300] {
        let rows = synth_records(&SynthConfig::planted_model1(n, 1));
        let m = model(&rows);
        let u = m.initial_point();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| m.log_density_grad(black_box(&u)).unwrap())
        });
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let rows = synth_records(&SynthConfig::planted_model1(2300, 2));
    let (train, pool) = rows.split_at(300);
    let m = model(train);
    let sample = m.unpack(&m.initial_point());
    let h = m.mean().hypothesis().unwrap();
    let test = TestPoints {
        x: pool.iter().flat_map(|r| INPUTS.map(|f| r.get(f))).collect(),
        dims: INPUTS.len(),
        mean_inputs: Some(h.mean_inputs(pool)),
    };
    c.bench_function("predict_300_train_2000_pool", |b| {
        b.iter(|| predict_sample(&m, black_box(&sample), &test).unwrap())
    });
}

fn hmc(c: &mut Criterion) {
    let rows = synth_records(&SynthConfig::planted_model1(100, 3));
    let m = model(&rows);
    let cfg = HmcConfig {
        warmup: 50,
        samples: 50,
        thin: 10,
        ..HmcConfig::desk()
    };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("hmc_100_rows_50_50", |b| {
        b.iter(|| sgp::fit(&m, &cfg, &mut rng::stream(7, &[rng::HMC])).unwrap())
    });
    group.finish();
}

fn lasso(c: &mut Criterion) {
    let rows = synth_records(&SynthConfig::planted_model1(1000, 4));
    let columns: Vec<Vec<f64>> = (0..200)
        .map(|j| {
            rows.iter()
                .map(|r| r.tpsa.powf(1.0 + j as f64 / 100.0) + r.molelogp * (j as f64).sin())
                .collect()
        })
        .collect();
    let (design, _) = standardize(&columns).unwrap();
    let (p, _) = center(&rows.iter().map(|r| r.fe).collect::<Vec<_>>());
    let grid = lambda_grid(lambda_max(&design, &p), 16, 1e-4);
    c.bench_function("lasso_path_1000x200_16", |b| {
        b.iter(|| lasso_path(black_box(&design), &p, &grid).unwrap())
    });
}

criterion_group!(benches, gradient, predict, hmc, lasso);
criterion_main!(benches);
