use std::sync::Arc;

use hball_core::functions::{FunctionSpec, Spike};
use hball_core::kernels::{DiskKernel, Kernel};
use hball_core::projector::{
    cz_pipeline_check, distribution_function, project, weak22_check, DistributionProfile, Integrator, PipelineOptions,
    ScanConfig,
};
use hball_core::{BallPoint, Complex64, DyadicConfig, DyadicSystem, IntegrableFunction, SamplerConfig};
use proptest::prelude::*;

fn z(p: &BallPoint) -> Complex64 {
    Complex64::new(p.coords()[0], p.coords()[1])
}

fn scan(outer: usize, integrator: Integrator) -> ScanConfig {
    ScanConfig {
        outer,
        sampler: SamplerConfig::low_discrepancy(31),
        integrator,
    }
}

#[test]
fn projection_is_idempotent_on_polynomials() {
    let k = DiskKernel;
    // f = w² + w̄ + 1, Pf = w² + 1
    let f = IntegrableFunction::estimated(
        2,
        |p| z(p).powu(2) + z(p).conj() + 1.0,
        &SamplerConfig::default(),
        20_000,
    )
    .unwrap();
    let rule = Integrator::Product {
        radial: 24,
        angular: 48,
    };
    let pf = {
        let f = f.clone();
        IntegrableFunction::new(2, 1.0, move |p| {
            project(&DiskKernel, &f, p, &rule).unwrap().estimate().value
        })
        .unwrap()
    };
    for x in [[0.1, 0.2], [-0.5, 0.3], [0.0, -0.7]] {
        let x = BallPoint::new(x.to_vec()).unwrap();
        let once = project(&k, &f, &x, &rule).unwrap().estimate();
        let twice = project(
            &k,
            &pf,
            &x,
            &Integrator::Product {
                radial: 12,
                angular: 24,
            },
        )
        .unwrap()
        .estimate();
        let expect = z(&x).powu(2) + 1.0;
        assert!((once.value - expect).norm() < 1e-9, "{once:?}");
        assert!((twice.value - once.value).norm() < 2e-8, "{twice:?} vs {once:?}");
    }
}

#[test]
fn weak22_examples() {
    let k = DiskKernel;
    let cfg = scan(
        2048,
        Integrator::Product {
            radial: 16,
            angular: 32,
        },
    );
    let w2 = IntegrableFunction::new(2, 0.5, |p| z(p).powu(2)).unwrap();
    let r = weak22_check(&k, &w2, &cfg, 50_000).unwrap();
    // ‖w²‖₂² = 1/3
    assert!(r.pass, "{r:?}");
    assert!((r.l2_out.value - (1.0f64 / 3.0).sqrt()).abs() < 0.02, "{r:?}");
    let wbar = IntegrableFunction::new(2, 2.0 / 3.0, |p| z(p).conj()).unwrap();
    let r = weak22_check(&k, &wbar, &cfg, 50_000).unwrap();
    assert!(r.pass && r.l2_out.value < 1e-6, "{r:?}");
    let zero = IntegrableFunction::new(2, 0.0, |_| Complex64::new(0.0, 0.0)).unwrap();
    let r = weak22_check(&k, &zero, &cfg, 1000).unwrap();
    assert!(r.pass && r.l2_in.value == 0.0 && r.l2_out.value == 0.0);
}

#[test]
fn non_integrable_data_is_reported_divergent() {
    // |w|^{-4} is far from L¹ of the disk
    let f = IntegrableFunction::new(2, 1.0, |p| Complex64::new(p.norm_sq().powi(-2), 0.0)).unwrap();
    let x = BallPoint::new(vec![0.5, 0.0]).unwrap();
    let r = project(
        &DiskKernel,
        &f,
        &x,
        &Integrator::monte_carlo(4096, SamplerConfig::low_discrepancy(2)),
    )
    .unwrap();
    assert!(r.is_divergent(), "{r:?}");
}

#[test]
fn pipeline_for_constant_data_has_no_bad_side() {
    let sys = Arc::new(DyadicSystem::build(DyadicConfig::practical(2)).unwrap());
    let f = FunctionSpec::Constant { value: 1.0 }
        .build(2, &SamplerConfig::default())
        .unwrap();
    let opts = PipelineOptions {
        scan: scan(256, Integrator::Product { radial: 8, angular: 16 }),
        ..PipelineOptions::default()
    };
    let r = cz_pipeline_check(&DiskKernel, &f, 2.0, &sys, &opts).unwrap();
    assert!(r.passed(), "{r:#?}");
    assert_eq!(r.stopping_cubes, 0);
    assert_eq!(r.omega_prime_measure.value, 0.0);
    assert_eq!(r.pb_outside.value, 0.0);
    assert_eq!(r.constants.c4, 0.0);
}

#[test]
fn pipeline_for_a_spike_passes_every_stage() {
    let sys = Arc::new(DyadicSystem::build(DyadicConfig::practical(2)).unwrap());
    let f = FunctionSpec::Spike(Spike {
        center: vec![0.3, -0.2],
        radius: 0.2,
        height: 25.0,
    })
    .build(2, &SamplerConfig::default())
    .unwrap();
    let opts = PipelineOptions {
        scan: scan(512, Integrator::monte_carlo(1024, SamplerConfig::low_discrepancy(4))),
        cube_samples: 1024,
        hormander_samples: 4096,
        ..PipelineOptions::default()
    };
    let r = cz_pipeline_check(&DiskKernel, &f, 8.0, &sys, &opts).unwrap();
    assert!(r.stopping_cubes > 0);
    assert!(r.passed(), "{r:#?}");
    assert!(r.constants.final_constant.is_finite());
}

#[test]
fn dimension_mismatch_is_an_error() {
    let f = IntegrableFunction::new(3, 1.0, |_| Complex64::new(1.0, 0.0)).unwrap();
    let x = BallPoint::origin(3);
    assert!(project(&DiskKernel, &f, &x, &Integrator::Product { radial: 4, angular: 4 }).is_err());
    assert_eq!(DiskKernel.dim(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profiles_are_monotone_and_bounded(values in prop::collection::vec(0.0f64..10.0, 1..200), t0 in 0.01f64..1.0) {
        let grid: Vec<f64> = (0..20).map(|i| t0 * 1.4f64.powi(i)).collect();
        let p = DistributionProfile::from_values(&values, &grid).unwrap();
        prop_assert!(p.lambda.windows(2).all(|w| w[0].value >= w[1].value));
        prop_assert!(p.lambda.iter().all(|l| (0.0..=1.0).contains(&l.value)));
        // Chebyshev holds on the sample itself
        for (t, l) in grid.iter().zip(&p.lambda) {
            prop_assert!(t * l.value <= p.l1_norm.value + 1e-12);
        }
    }

    #[test]
    fn indicator_profiles(frac in 0.05f64..0.95) {
        let r = frac.sqrt();
        let s = SamplerConfig::low_discrepancy(6);
        let p = distribution_function(|x| if x.norm() < r { 5.0 } else { 0.0 }, 2, &[1.0, 4.9, 5.0, 6.0], &s, 20_000)
            .unwrap();
        prop_assert!((p.lambda[0].value - frac).abs() < 5e-3);
        prop_assert_eq!(p.lambda[0].value, p.lambda[1].value);
        prop_assert_eq!(p.lambda[2].value, 0.0);
        prop_assert_eq!(p.lambda[3].value, 0.0);
    }
}
