//! Deterministic product rules for n = 2 and n = 3.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::estimate::Estimate;
use crate::geometry::BallPoint;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d.is_finite() { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if order == 0 { 1.0 } else { p1 };
    let n = order as f64;
    let d = n * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Gauss–Legendre on `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|w| 0.5 * w).collect(),
    )
}

fn disk_rule(f: &dyn Fn(&BallPoint) -> Complex64, radial: usize, angular: usize) -> Complex64 {
    let (s, ws) = gauss_legendre_unit(radial);
    let mut total = Complex64::new(0.0, 0.0);
    for (&sk, &wk) in s.iter().zip(&ws) {
        let r = sk.sqrt();
        let mut ring = Complex64::new(0.0, 0.0);
        for j in 0..angular {
            let t = TAU * j as f64 / angular as f64;
            ring += f(&BallPoint::from_interior(vec![r * t.cos(), r * t.sin()]));
        }
        total += ring * (wk / angular as f64);
    }
    total
}

/// `∫_𝔹₂ f dν` by Gauss–Legendre in `s = r²` and the trapezoid rule in angle.
///
/// The stderr field holds `|I(radial, angular) - I(2 radial, 2 angular)|`.
pub fn product_rule_disk(
    f: &dyn Fn(&BallPoint) -> Complex64,
    radial_nodes: usize,
    angular_nodes: usize,
) -> Estimate<Complex64> {
    let coarse = disk_rule(f, radial_nodes, angular_nodes);
    let fine = disk_rule(f, 2 * radial_nodes, 2 * angular_nodes);
    Estimate::new(coarse, (fine - coarse).norm(), radial_nodes * angular_nodes)
}

/// Same as [`product_rule_disk`] without the error estimate.
pub fn product_rule_disk_value(
    f: &dyn Fn(&BallPoint) -> Complex64,
    radial_nodes: usize,
    angular_nodes: usize,
) -> Complex64 {
    disk_rule(f, radial_nodes, angular_nodes)
}

fn ball3_rule(f: &dyn Fn(&BallPoint) -> Complex64, radial: usize, polar: usize, azimuthal: usize) -> Complex64 {
    let (rs, wr) = gauss_legendre_unit(radial);
    let (z, wz) = gauss_legendre(polar);
    let mut total = Complex64::new(0.0, 0.0);
    for (&r, &wr) in rs.iter().zip(&wr) {
        let wk = 3.0 * r * r * wr;
        for (&zl, &wl) in z.iter().zip(&wz) {
            let s = (1.0 - zl * zl).max(0.0).sqrt();
            let mut ring = Complex64::new(0.0, 0.0);
            for j in 0..azimuthal {
                let t = TAU * j as f64 / azimuthal as f64;
                ring += f(&BallPoint::from_interior(vec![
                    r * s * t.cos(),
                    r * s * t.sin(),
                    r * zl,
                ]));
            }
            total += ring * (wk * 0.5 * wl / azimuthal as f64);
        }
    }
    total
}

/// `∫_𝔹₃ f dν` by Gauss–Legendre in `r` (weight `3r²`) and `cos θ`, trapezoid in azimuth.
pub fn product_rule_ball3(
    f: &dyn Fn(&BallPoint) -> Complex64,
    radial_nodes: usize,
    polar_nodes: usize,
    azimuthal_nodes: usize,
) -> Estimate<Complex64> {
    let coarse = ball3_rule(f, radial_nodes, polar_nodes, azimuthal_nodes);
    let fine = ball3_rule(f, 2 * radial_nodes, 2 * polar_nodes, 2 * azimuthal_nodes);
    Estimate::new(
        coarse,
        (fine - coarse).norm(),
        radial_nodes * polar_nodes * azimuthal_nodes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_weights_and_moments() {
        for order in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(order);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // exact for degree 2·order − 1
            let deg = 2 * order - 2;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((m - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "{order}");
        }
        let (x, _) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn disk_rule_examples() {
        let one = product_rule_disk(&|_| Complex64::new(1.0, 0.0), 8, 16);
        assert!((one.value - 1.0).norm() < 1e-15);
        for k in 1..6 {
            let v = product_rule_disk(&|w| Complex64::new(w.coords()[0], w.coords()[1]).powu(k), 8, 16);
            assert!(v.value.norm() < 1e-15, "k={k}: {}", v.value);
        }
        let sq = product_rule_disk(&|w| Complex64::new(w.norm_sq(), 0.0), 8, 16);
        assert!((sq.value.re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ball3_rule_moments() {
        let one = product_rule_ball3(&|_| Complex64::new(1.0, 0.0), 6, 6, 8);
        assert!((one.value.re - 1.0).abs() < 1e-14);
        // ∫ |x|² dν = 3/5 on 𝔹₃
        let sq = product_rule_ball3(&|x| Complex64::new(x.norm_sq(), 0.0), 6, 6, 8);
        assert!((sq.value.re - 0.6).abs() < 1e-12);
        let z2 = product_rule_ball3(&|x| Complex64::new(x.coords()[2].powi(2), 0.0), 6, 6, 8);
        assert!((z2.value.re - 0.2).abs() < 1e-12);
    }
}
