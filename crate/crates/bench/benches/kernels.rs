use criterion::{black_box, criterion_group, criterion_main, Criterion};

use secest_core::benchmark::config::{ExperimentConfig, SystemConfig};
use secest_core::benchmark::sim::Experiment;
use secest_core::estimator::{synthesize_gain, GainPolicy};
use secest_core::{CVector, SensorDecomposition, C64};

fn ieee14(horizon: f64) -> ExperimentConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ieee14_attack.json");
    let mut cfg = ExperimentConfig::from_path(path.as_ref()).unwrap();
    cfg.run.horizon = horizon;
    assert!(matches!(cfg.system, SystemConfig::Ieee14 { .. }));
    cfg
}

fn state_transition(c: &mut Criterion) {
    let model = ieee14(1.0).build_plant().unwrap().model;
    c.bench_function("state_transition_ieee14", |b| b.iter(|| model.state_transition(black_box(0.013))));
}

fn gain_synthesis(c: &mut Criterion) {
    let exp = Experiment::prepare(ieee14(1.0)).unwrap();
    let model = &exp.plant.model;
    let decomp = SensorDecomposition::build(model);
    let lambda = model.state_transition(0.02);
    // A phase sensor, whose subsystem holds the zero mode.
    let sub = decomp.sensor(0);
    let a = sub.restrict(&lambda);
    let policy = exp.config.estimator.policy;
    c.bench_function("synthesize_gain_radial_phase_sensor", |b| {
        b.iter(|| synthesize_gain(black_box(&a), &sub.c_tilde, 0.9999, policy).unwrap())
    });
    let small = ExperimentConfig::from_json_str(
        r#"{"system": {"kind": "jordan", "a": [[-1, 0, 0], [0, -0.2, 1], [0, 0, -0.2]], "c": [[1, 1, 1]]},
            "sampling": {"t_max": 1.5}, "run": {"horizon": 1}}"#,
    )
    .unwrap()
    .build_plant()
    .unwrap()
    .model;
    let sub = SensorDecomposition::build(&small).sensor(0).clone();
    let a = sub.restrict(&small.state_transition(0.3));
    c.bench_function("synthesize_gain_uniform_three_state", |b| {
        b.iter(|| synthesize_gain(black_box(&a), &sub.c_tilde, 0.6, GainPolicy::default()).unwrap())
    });
}

fn fusion(c: &mut Criterion) {
    let exp = Experiment::prepare(ieee14(1.0)).unwrap();
    let etas: Vec<CVector> = exp
        .decomposition
        .sensors()
        .iter()
        .enumerate()
        .map(|(i, s)| CVector::from_fn(s.dim(), |j, _| C64::new((i * 7 + j) as f64 % 5.0, 0.0)))
        .collect();
    c.bench_function("median_fuse_ieee14", |b| b.iter(|| exp.fuser.fuse(1, 0.1, black_box(&etas)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let exp = Experiment::prepare(ieee14(1.0)).unwrap();
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("ieee14_attack_1s", |b| b.iter(|| exp.run(black_box(1)).unwrap()));
    group.finish();
}

criterion_group!(benches, state_transition, gain_synthesis, fusion, simulation);
criterion_main!(benches);
