use causaldrive::causal::{discover, SceneAnalysis};
use causaldrive::config::AnalysisConfig;
use causaldrive::data::{synth_scene, ScenarioSpec, Template};
use causaldrive::linalg::Matrix;
use causaldrive::reward::solve_profile;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn least_squares(c: &mut Criterion) {
    // Deterministic 20x6 system with a duplicated column.
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            let x = i as f64;
            vec![
                (x * 0.37).sin(),
                (x * 0.11).cos(),
                x / 20.0,
                (x * 0.37).sin(),
                (x * 0.5).sin(),
                1.0,
            ]
        })
        .collect();
    let a = Matrix::from_rows(&rows);
    let b: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
    c.bench_function("solve_profile 20x6", |bch| {
        bch.iter(|| solve_profile(black_box(&a), black_box(b.clone())))
    });
}

fn rollout(c: &mut Criterion) {
    let cfg = AnalysisConfig::default();
    let scene = synth_scene(&ScenarioSpec::new(Template::Merge), 3).unwrap();
    let world = SceneAnalysis::new(&scene, &cfg).world_at(0.0).unwrap();
    c.bench_function("scene rollout 5 s", |bch| {
        bch.iter(|| world.simulate(black_box(5.0)).unwrap())
    });
}

fn discovery(c: &mut Criterion) {
    let cfg = AnalysisConfig::default();
    let scene = synth_scene(&ScenarioSpec::new(Template::ConvoyBrake), 1).unwrap();
    let mut g = c.benchmark_group("discover");
    g.sample_size(10);
    g.bench_function("convoy-brake scene", |bch| {
        bch.iter(|| discover(black_box(&scene), &cfg))
    });
    g.finish();
}

criterion_group!(benches, least_squares, rollout, discovery);
criterion_main!(benches);
