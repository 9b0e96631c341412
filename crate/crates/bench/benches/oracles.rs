use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use gas_oracle_bench::synthetic_series;
use gas_oracle_core::baseline::PercentileOracle;
use gas_oracle_core::gp::{fit, GpModel};
use gas_oracle_core::{backtest, BacktestSpec, FitConfig, GpHyperparams, Oracle, ProcessedBlock, TrainingSeries};

fn gp(c: &mut Criterion) {
    let ys = synthetic_series(200, 1);
    let cfg = FitConfig::default();
    let mut group = c.benchmark_group("gp");
    group.sample_size(10);
    group.bench_function("fit_predict_200", |b| {
        b.iter_batched(
            || TrainingSeries::from_wei(&ys, true).unwrap(),
            |ts| fit(ts, &cfg).unwrap().predict_next().percentile_price(75.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let hp = GpHyperparams::new(1.0, 10.0, 0.3).unwrap();
    group.bench_function("predict_fixed_hp_200", |b| {
        b.iter(|| {
            let ts = TrainingSeries::from_wei(black_box(&ys), true).unwrap();
            GpModel::new(ts, hp).unwrap().predict_next()
        })
    });
    group.finish();
}

fn percentile(c: &mut Criterion) {
    let ys = synthetic_series(2_000, 2);
    let gs = PercentileOracle::gs_express(200).unwrap();
    c.bench_function("gs_express_quote", |b| {
        b.iter(|| gs.quote(black_box(&ys), &[50.0, 75.0, 84.0, 95.0]).unwrap())
    });

    let series: Vec<ProcessedBlock> = synthetic_series(10_200, 3)
        .into_iter()
        .enumerate()
        .map(|(i, y)| ProcessedBlock::new(i as u64, y))
        .collect();
    let spec = BacktestSpec::new(vec![50.0, 75.0, 84.0, 95.0]);
    let mut group = c.benchmark_group("backtest");
    group.sample_size(10);
    group.bench_function("gs_express_10k", |b| b.iter(|| backtest(&gs, &series, &spec).unwrap()));
    group.finish();
}

criterion_group!(benches, gp, percentile);
criterion_main!(benches);
