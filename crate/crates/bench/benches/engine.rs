use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use loctask::allocation::{allocate, AllocParams};
use loctask::estimation::{kf_predict, kf_update, EntropyForm};
use loctask::math::{Mat3, Mat6, Vec3};
use loctask::orbit::{cwh_stm, MeanMotion};
use loctask::sim::{run_simulation, SimConfig};
use loctask::tasking::{observation_score, principal_axes};
use loctask_bench::{entry, views};

fn kernels(c: &mut Criterion) {
    let eta = MeanMotion::default();
    c.bench_function("cwh_stm", |b| b.iter(|| cwh_stm(black_box(1.0), eta)));

    let e = entry();
    let q = Mat6::identity() * 1e-3;
    let r = Mat3::identity() * 1e-4;
    c.bench_function("kf_predict", |b| b.iter(|| kf_predict(black_box(&e), 1.0, eta, &q, EntropyForm::FullLogDet)));
    let z = e.mean.position().normalize();
    c.bench_function("kf_update", |b| {
        b.iter(|| kf_update(black_box(&e), &z, &Vec3::zeros(), &r, EntropyForm::FullLogDet))
    });
    c.bench_function("score", |b| {
        b.iter(|| {
            let axes = principal_axes(black_box(&e.cov)).unwrap();
            observation_score(&e.mean.position(), &axes)
        })
    });
}

fn allocation(c: &mut Criterion) {
    let none = vec![vec![false; 8]; 2];
    for depth in [1, 3] {
        let params = AllocParams { depth, ..AllocParams::default() };
        let v = views(2, 8);
        c.bench_function(&format!("allocate 2x8 depth {depth}"), |b| {
            b.iter(|| allocate(black_box(&v), &[None, None], &none, &params))
        });
    }
}

fn full_run(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let mut group = c.benchmark_group("simulation");
    group.sample_size(20);
    group.bench_function("default 200 s", |b| b.iter(|| run_simulation(black_box(&cfg), 0)));
    group.finish();
}

criterion_group!(benches, kernels, allocation, full_run);
criterion_main!(benches);
