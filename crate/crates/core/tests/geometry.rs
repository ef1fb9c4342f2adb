use hball_core::geometry::{
    hyperbolic_laplacian, hyperbolic_laplacian_fd, hyperbolic_laplacian_richardson, mobius, quasi_metric,
    quasi_metric_sq, BallPoint, SmoothFunction,
};
use hball_core::Complex64;
use proptest::prelude::*;

fn point(dim: usize, max_radius: f64) -> impl Strategy<Value = BallPoint> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0f64..max_radius).prop_map(|(mut v, r)| {
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-9);
        v.iter_mut().for_each(|c| *c *= r / n);
        BallPoint::new(v).unwrap()
    })
}

fn pair(max_radius: f64) -> impl Strategy<Value = (BallPoint, BallPoint)> {
    (2usize..=4).prop_flat_map(move |n| (point(n, max_radius), point(n, max_radius)))
}

proptest! {
    #[test]
    fn mobius_is_an_involution((a, x) in pair(0.99)) {
        let y = mobius(&a, &mobius(&a, &x).unwrap()).unwrap();
        prop_assert!(y.dist(&x) < 1e-12, "{:?}", y.dist(&x));
    }

    #[test]
    fn mobius_exchanges_a_and_origin((a, _x) in pair(0.99)) {
        prop_assert!(mobius(&a, &BallPoint::origin(a.dim())).unwrap().dist(&a) < 1e-12);
        prop_assert!(mobius(&a, &a).unwrap().norm() < 1e-12);
    }

    #[test]
    fn mobius_norm_identity((a, x) in pair(0.95)) {
        // 1 − |φ_a(x)|² = (1 − |a|²)(1 − |x|²) / [a, x]²
        let y = mobius(&a, &x).unwrap();
        let rhs = (1.0 - a.norm_sq()) * (1.0 - x.norm_sq()) / quasi_metric_sq(&a, &x);
        prop_assert!((1.0 - y.norm_sq() - rhs).abs() < 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn quasi_metric_bounds((x, y) in pair(0.999)) {
        let q = quasi_metric(&x, &y);
        prop_assert!((q - quasi_metric(&y, &x)).abs() < 1e-15);
        prop_assert!(q + 1e-15 >= x.dist(&y));
        prop_assert!(q >= 1.0 - x.norm() - 1e-15);
        prop_assert!(q <= 2.0 + 1e-15);
    }

    #[test]
    fn richardson_beats_plain_differences(a in point(3, 0.8)) {
        let f = cubic();
        let exact = hyperbolic_laplacian(&f, &a).unwrap();
        let plain = (hyperbolic_laplacian_fd(&f, &a, 1e-2) - exact).norm();
        let rich = (hyperbolic_laplacian_richardson(&f, &a, 1e-2) - exact).norm();
        prop_assert!(rich <= plain + 1e-9, "{rich} vs {plain}");
    }
}

/// `x₁³ + x₁ x₂²` with its gradient and Laplacian.
fn cubic() -> SmoothFunction {
    let c = |x: &BallPoint| (x.coords()[0], x.coords()[1]);
    SmoothFunction::new(move |x| {
        let (a, b) = c(x);
        Complex64::new(a * a * a + a * b * b, 0.0)
    })
    .with_gradient(move |x| {
        let (a, b) = c(x);
        let mut g = vec![Complex64::new(0.0, 0.0); x.dim()];
        g[0] = Complex64::new(3.0 * a * a + b * b, 0.0);
        g[1] = Complex64::new(2.0 * a * b, 0.0);
        g
    })
    .with_laplacian(move |x| Complex64::new(8.0 * c(x).0, 0.0))
}

#[test]
fn hyperbolic_poisson_function_is_annihilated() {
    // ((1 − |x|²)/|x − ζ|²)^{n−1} with ζ on the sphere
    for (n, zeta, a) in [
        (3, vec![1.0, 0.0, 0.0], vec![0.2, 0.1, 0.0]),
        (2, vec![0.0, 1.0], vec![-0.3, 0.4]),
        (4, vec![0.6, 0.0, 0.8, 0.0], vec![0.1, -0.2, 0.3, 0.1]),
    ] {
        let z = zeta.clone();
        let f = SmoothFunction::new(move |x| {
            let d: f64 = x.coords().iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
            Complex64::new(((1.0 - x.norm_sq()) / d).powi(n - 1), 0.0)
        });
        let a = BallPoint::new(a).unwrap();
        let coarse = hyperbolic_laplacian_fd(&f, &a, 1e-3).norm();
        let fine = hyperbolic_laplacian_fd(&f, &a, 5e-4).norm();
        if n == 3 {
            assert!(coarse <= 1e-4, "n={n}: {coarse}");
        }
        assert!(fine < coarse / 3.5, "n={n}: residual is not O(h²) ({coarse} → {fine})");
    }
}
