use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use hball_core::dyadic::check_points;
use hball_core::functions::Spike;
use hball_core::geometry::mobius;
use hball_core::kernels::{DiskKernel, HarmonicBallKernel};
use hball_core::projector::project;
use hball_core::{
    decompose, BallPoint, DecomposeOptions, DyadicConfig, DyadicSystem, FunctionSpec, Integrator, Kernel, SamplerConfig,
};

fn geometry(c: &mut Criterion) {
    let a = BallPoint::new(vec![0.3, -0.4, 0.2]).unwrap();
    let x = BallPoint::new(vec![-0.1, 0.5, 0.6]).unwrap();
    c.bench_function("mobius n=3", |b| {
        b.iter(|| mobius(black_box(&a), black_box(&x)).unwrap())
    });
}

fn dyadic(c: &mut Criterion) {
    let sys = DyadicSystem::build(DyadicConfig::practical(2)).unwrap();
    let points = check_points(2, 1024, 7);
    let depth = sys.config().max_level;
    c.bench_function("locate 1024 points at max_level", |b| {
        b.iter(|| {
            for x in &points {
                black_box(sys.locate(x, depth).unwrap());
            }
        })
    });
}

fn kernels(c: &mut Criterion) {
    let x = BallPoint::new(vec![0.6, 0.2]).unwrap();
    let y = BallPoint::new(vec![-0.3, 0.7]).unwrap();
    c.bench_function("disk kernel eval", |b| {
        b.iter(|| DiskKernel.eval(black_box(&x), black_box(&y)).unwrap())
    });
    let h = HarmonicBallKernel::new(3, 12).unwrap();
    let x3 = BallPoint::new(vec![0.4, 0.1, -0.3]).unwrap();
    let y3 = BallPoint::new(vec![-0.2, 0.5, 0.3]).unwrap();
    c.bench_function("harmonic kernel eval n=3 M=12", |b| {
        b.iter(|| h.eval(black_box(&x3), black_box(&y3)).unwrap())
    });
}

fn spike() -> hball_core::IntegrableFunction {
    FunctionSpec::Spike(Spike {
        center: vec![0.3, -0.2],
        radius: 0.2,
        height: 25.0,
    })
    .build(2, &SamplerConfig::default())
    .unwrap()
}

fn czd(c: &mut Criterion) {
    let sys = Arc::new(DyadicSystem::build(DyadicConfig::practical(2)).unwrap());
    let f = spike();
    let opts = DecomposeOptions::default();
    let mut group = c.benchmark_group("decompose");
    group.sample_size(10);
    group.bench_function("spike at t=4", |b| {
        b.iter(|| decompose(&f, black_box(4.0), &sys, &opts).unwrap())
    });
    group.finish();
}

fn projector(c: &mut Criterion) {
    let f = spike();
    let x = BallPoint::new(vec![0.5, 0.1]).unwrap();
    let mut group = c.benchmark_group("project");
    group.sample_size(20);
    let mc = Integrator::monte_carlo(4096, SamplerConfig::low_discrepancy(3));
    group.bench_function("monte carlo 4096", |b| {
        b.iter(|| project(&DiskKernel, &f, black_box(&x), &mc).unwrap())
    });
    let product = Integrator::Product {
        radial: 32,
        angular: 64,
    };
    group.bench_function("product 32x64", |b| {
        b.iter(|| project(&DiskKernel, &f, black_box(&x), &product).unwrap())
    });
    group.finish();
}

criterion_group!(benches, geometry, dyadic, kernels, czd, projector);
criterion_main!(benches);
