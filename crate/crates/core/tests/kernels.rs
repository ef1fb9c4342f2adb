use hball_core::kernels::{
    gradient, gradient_norm, hormander_integral, kernel_gradient_constant, kernel_size_constant, sample_pairs,
    tail_integral_bound, BoundConfig, ConstantKernel, DiskKernel, HarmonicBallKernel, Kernel,
};
use hball_core::quadrature::gauss_legendre_unit;
use hball_core::{BallPoint, SamplerConfig};
use proptest::prelude::*;

fn p(c: &[f64]) -> BallPoint {
    BallPoint::new(c.to_vec()).unwrap()
}

/// `2^{n+1} d ∫_{2d}^{2} n r^{n−1} r^{-n-1} dr` by composite Gauss–Legendre on geometric panels.
fn tail_by_quadrature(n: usize, d: f64) -> f64 {
    let (x, w) = gauss_legendre_unit(20);
    let panels = 30;
    let q = (1.0 / d).powf(1.0 / panels as f64);
    let mut integral = 0.0;
    for i in 0..panels {
        let a = 2.0 * d * q.powi(i);
        let b = if i + 1 == panels { 2.0 } else { a * q };
        integral += x
            .iter()
            .zip(&w)
            .map(|(s, w)| {
                let r = a + (b - a) * s;
                w * (b - a) * n as f64 * r.powi(n as i32 - 1) / r.powi(n as i32 + 1)
            })
            .sum::<f64>();
    }
    2f64.powi(n as i32 + 1) * d * integral
}

#[test]
fn tail_bound_matches_an_independent_radial_quadrature() {
    for n in 2..=5 {
        for d in [0.01, 0.1, 0.25, 0.5, 0.9] {
            let closed = tail_integral_bound(n, d).unwrap();
            assert!(
                (closed - tail_by_quadrature(n, d)).abs() < 1e-10 * closed,
                "n={n}, d={d}"
            );
            assert!(closed <= 2f64.powi(n as i32) * n as f64);
        }
    }
    assert_eq!(tail_integral_bound(2, 0.1).unwrap(), 7.2);
    assert_eq!(tail_integral_bound(2, 1.5).unwrap(), 0.0);
    assert!(tail_integral_bound(2, -0.1).is_err());
}

#[test]
fn harmonic_kernel_is_symmetric() {
    let cfg = SamplerConfig::pseudo_random(21);
    for n in [2, 3, 4] {
        let k = HarmonicBallKernel::new(n, 12).unwrap();
        for (x, y) in sample_pairs(&cfg, n, 0.95, 0, 10_000) {
            let (a, b) = (k.eval(&x, &y).unwrap().re, k.eval(&y, &x).unwrap().re);
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn truncation_changes_stay_below_the_next_term_bound() {
    let cfg = SamplerConfig::pseudo_random(22);
    for n in [2, 3, 5] {
        for (x, y) in sample_pairs(&cfg, n, 0.95, 0, 500) {
            let rho = x.norm() * y.norm();
            for m in [4, 8, 12] {
                let a = HarmonicBallKernel::new(n, m).unwrap();
                let b = HarmonicBallKernel::new(n, m + 1).unwrap();
                let diff = (b.eval(&x, &y).unwrap() - a.eval(&x, &y).unwrap()).norm();
                assert!(diff <= a.term_bound(m + 1, rho) * (1.0 + 1e-12) + 1e-14, "n={n} m={m}");
            }
        }
    }
}

#[test]
fn disk_mean_value_consistency() {
    let k = DiskKernel;
    let cfg = SamplerConfig::pseudo_random(23);
    let triples = sample_pairs(&cfg, 2, 0.99, 0, 1000);
    let others = sample_pairs(&cfg.derive(1), 2, 0.99, 0, 1000);
    for ((x, y), (yj, _)) in triples.iter().zip(&others) {
        let diff = (k.eval(x, y).unwrap() - k.eval(x, yj).unwrap()).norm();
        let sup = (0..=256)
            .map(|i| {
                let s = i as f64 / 256.0;
                let xi: Vec<f64> = y
                    .coords()
                    .iter()
                    .zip(yj.coords())
                    .map(|(a, b)| b + s * (a - b))
                    .collect();
                // |∇_y K(x, y)| = |∇_x K(y, x)| since K(x, y) is the conjugate of K(y, x)
                gradient_norm(&gradient(&k, &p(&xi), x).unwrap())
            })
            .fold(0.0, f64::max);
        assert!(
            diff <= sup * y.dist(yj) * (1.0 + 1e-3) + 1e-12,
            "{x:?} {y:?} {yj:?}: {diff} > {sup}"
        );
    }
}

#[test]
fn bound_examples() {
    let cfg = BoundConfig {
        pairs: 20_000,
        ..BoundConfig::default()
    };
    let disk = DiskKernel;
    let size = kernel_size_constant(&disk, &cfg).unwrap();
    assert!((size.constant_estimate - 1.0).abs() < 1e-6, "{size:?}");
    let grad = kernel_gradient_constant(&disk, &cfg).unwrap();
    assert!(
        grad.constant_estimate <= 2.0 + 1e-9 && grad.constant_estimate > 1.9,
        "{grad:?}"
    );
    // at z = 0 the gradient is 2|w| and [0, w] = 1
    let w = p(&[0.3, -0.4]);
    let g = gradient_norm(&gradient(&disk, &BallPoint::origin(2), &w).unwrap());
    assert!((g - 2.0 * w.norm()).abs() < 1e-14);
    let one = ConstantKernel { dim: 3, value: 1.0 };
    assert_eq!(kernel_gradient_constant(&one, &cfg).unwrap().constant_estimate, 0.0);
}

#[test]
fn harmonic_constants_depend_on_truncation() {
    let cfg = BoundConfig {
        pairs: 50_000,
        ..BoundConfig::default()
    };
    let m12 = kernel_size_constant(&HarmonicBallKernel::new(3, 12).unwrap(), &cfg).unwrap();
    let m24 = kernel_size_constant(&HarmonicBallKernel::new(3, 24).unwrap(), &cfg).unwrap();
    assert!(m12.constant_estimate.is_finite() && m24.constant_estimate.is_finite());
    assert!(m24.constant_estimate > m12.constant_estimate, "{m12:?} vs {m24:?}");
}

#[test]
fn hormander_integral_examples() {
    let s = SamplerConfig::low_discrepancy(3);
    let yj = p(&[0.3, 0.0]);
    let disk = DiskKernel;
    assert_eq!(hormander_integral(&disk, &yj, 0.05, &yj, &s, 1000).unwrap().value, 0.0);
    let one = ConstantKernel { dim: 2, value: 1.0 };
    let y = p(&[0.35, 0.0]);
    assert_eq!(hormander_integral(&one, &yj, 0.05, &y, &s, 1000).unwrap().value, 0.0);
    let h = hormander_integral(&disk, &yj, 0.05, &y, &s, 100_000).unwrap();
    let bound = 2.0 * tail_integral_bound(2, y.dist(&yj)).unwrap();
    assert!(h.value.is_finite() && h.value > 0.0);
    assert!(h.value <= bound + 3.0 * h.stderr, "{h:?} vs {bound}");
}

proptest! {
    #[test]
    fn disk_size_product_is_one(x in (-0.7f64..0.7, -0.7f64..0.7), y in (-0.7f64..0.7, -0.7f64..0.7)) {
        // |1 − z w̄| = [z, w] on the disk
        let (x, y) = (p(&[x.0, x.1]), p(&[y.0, y.1]));
        let v = DiskKernel.eval(&x, &y).unwrap().norm() * hball_core::geometry::quasi_metric_sq(&x, &y);
        prop_assert!((v - 1.0).abs() < 1e-12);
    }
}
