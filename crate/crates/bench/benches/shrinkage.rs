use criterion::{black_box, criterion_group, criterion_main, Criterion};

use shrinkbound::bounds;
use shrinkbound::model::{Dataset, HeterogeneityPrior, Study};
use shrinkbound::posterior::{self, IntervalKind, TauPosterior};
use shrinkbound::quad::QuadratureSettings;

fn cjd() -> Dataset {
    Dataset::new(vec![
        Study::new("observational", -0.499, 0.249).unwrap(),
        Study::new("randomized", -0.173, 0.631).unwrap(),
    ])
    .unwrap()
}

fn bench_fit(c: &mut Criterion) {
    let ds = cjd();
    let prior = HeterogeneityPrior::half_normal(0.5).unwrap();
    let settings = QuadratureSettings::default();
    c.bench_function("fit_tau_posterior_cjd", |b| {
        b.iter(|| TauPosterior::fit(black_box(&ds), &prior, &settings).unwrap())
    });
}

fn bench_expected_weights(c: &mut Criterion) {
    let ds = cjd();
    let prior = HeterogeneityPrior::half_normal(0.5).unwrap();
    let settings = QuadratureSettings::default();
    let tp = TauPosterior::fit(&ds, &prior, &settings).unwrap();
    c.bench_function("expected_weights_cjd", |b| {
        b.iter(|| posterior::expected_weights(black_box(&tp)).unwrap())
    });
}

fn bench_shortest_interval(c: &mut Criterion) {
    let ds = cjd();
    let prior = HeterogeneityPrior::half_normal(0.5).unwrap();
    let settings = QuadratureSettings::default();
    let tp = TauPosterior::fit(&ds, &prior, &settings).unwrap();
    c.bench_function("marginal_theta_shortest_cjd", |b| {
        b.iter(|| {
            posterior::marginal_theta(black_box(&tp), 1, 0.95, IntervalKind::Shortest).unwrap()
        })
    });
}

fn bench_discrepancy_sweep(c: &mut Criterion) {
    let prior = HeterogeneityPrior::half_normal(0.5).unwrap();
    let settings = QuadratureSettings::default();
    let deltas: Vec<f64> = (0..13).map(|i| -3.0 + i as f64 * 0.5).collect();
    c.bench_function("discrepancy_sweep_13_rows", |b| {
        b.iter(|| {
            bounds::discrepancy_sweep(
                black_box(&[0.8, 0.2]),
                &prior,
                0,
                &deltas,
                0.95,
                IntervalKind::Central,
                &settings,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_fit,
    bench_expected_weights,
    bench_shortest_interval,
    bench_discrepancy_sweep
);
criterion_main!(benches);
