use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use infdelay_core::model::{RegimeTerms, Term};
use infdelay_core::phase::KernelRecursion;
use infdelay_core::scheme::PathEngine;
use infdelay_core::{
    FadingMeasure, GrowthSpec, HistoryBuffer, InitialData, MarkovChain, ModelSpec, RngStream, SchemeConfig,
    SchemeVariant,
};

fn two_regime_model() -> ModelSpec {
    let mu = FadingMeasure::exponential(6.0).unwrap();
    let regimes = [
        RegimeTerms {
            drift: vec![
                Term::PointPower { coeff: -1.0, exponent: 3.0 },
                Term::MeasureIntegral { coeff: 1.0, measure: mu.clone() },
            ],
            diffusion: vec![Term::PointPower { coeff: 1.0, exponent: 1.0 }],
        },
        RegimeTerms {
            drift: vec![
                Term::PointPower { coeff: 0.25, exponent: 1.0 },
                Term::PointPower { coeff: -1.0, exponent: 3.0 },
                Term::MeasureIntegral { coeff: 0.25, measure: mu },
            ],
            diffusion: vec![Term::PointPower { coeff: 0.5, exponent: 1.0 }],
        },
    ];
    ModelSpec::declarative(1, &regimes, GrowthSpec::affine(2.0, 1.0, 2.0)).unwrap()
}

fn path(c: &mut Criterion) {
    let model = two_regime_model();
    let chain = MarkovChain::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
    let xi = InitialData::exponential(1.0, 1.0, 1.0);
    let mut group = c.benchmark_group("path_t1_l1024");
    for recursion in [true, false] {
        let mut cfg = SchemeConfig::new(1024, 2, 0.5, SchemeVariant::Convergence, 1.0);
        cfg.kernel_recursion = recursion;
        let engine = PathEngine::new(&cfg, &model, &xi).unwrap();
        let dt = engine.dt();
        let (bm, ch) = RngStream::pair(1, 0);
        let skeleton = chain.sample_discrete_chain(dt, engine.steps(), 0, &ch).unwrap();
        let label = if recursion { "recursive" } else { "direct" };
        group.bench_function(label, |b| {
            b.iter(|| {
                let mut reader = bm.reader();
                engine.run(&skeleton, |j, out| reader.fill_increments(j, dt, out), usize::MAX).unwrap()
            })
        });
    }
    group.finish();
}

fn history_integral(c: &mut Criterion) {
    let measure = FadingMeasure::exponential(6.0).unwrap();
    let mut group = c.benchmark_group("history_integral");
    for depth in [256usize, 4096, 65536] {
        let dt = 1.0 / 4096.0;
        let mut buf = HistoryBuffer::zeros(1, dt, depth).unwrap();
        for j in 0..=depth {
            buf.push(&[(j as f64 * 0.01).sin()]).unwrap();
        }
        let weights = measure.cell_weights(dt, depth).unwrap();
        group.bench_with_input(BenchmarkId::new("direct", depth), &depth, |b, _| {
            b.iter(|| buf.integrate(black_box(&weights)).unwrap())
        });
        let mut rec = KernelRecursion::new(&measure, &buf).unwrap();
        group.bench_with_input(BenchmarkId::new("recursive_advance", depth), &depth, |b, _| {
            b.iter(|| {
                rec.advance(&buf, black_box(&[0.5]));
                rec.value(&buf)
            })
        });
    }
    group.finish();
}

fn transition_matrix(c: &mut Criterion) {
    let chain = MarkovChain::from_rows(&[
        vec![-3.0, 1.0, 1.0, 1.0],
        vec![0.5, -1.0, 0.25, 0.25],
        vec![2.0, 2.0, -5.0, 1.0],
        vec![0.1, 0.2, 0.3, -0.6],
    ])
    .unwrap();
    c.bench_function("transition_matrix_4x4", |b| b.iter(|| chain.transition_matrix(black_box(0.37)).unwrap()));
    c.bench_function("eta_spectral_4x4", |b| {
        b.iter(|| chain.eta_spectral(1.0, black_box(&[-1.0, 0.5, -2.0, 0.1])).unwrap())
    });
}

criterion_group!(benches, path, history_integral, transition_matrix);
criterion_main!(benches);
