//! Seeded sampling and integration over 𝔹ⁿ with the normalized measure ν.
//!
//! Samples are split into fixed blocks of `cfg.batch` indices. Blocks run in
//! parallel and their accumulators are merged by a fixed pairwise tree, so a
//! result never depends on the number of worker threads.

mod estimate;
mod rules;
mod sampler;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::BallPoint;

pub use estimate::{Accum, Estimate};
pub use rules::{gauss_legendre, gauss_legendre_unit, product_rule_ball3, product_rule_disk, product_rule_disk_value};
pub use sampler::{
    ball_dims, direction_dims, mix64, sample_ball, stream_key, unit_ball_point, unit_direction, SamplerConfig, Scheme,
    UniformSource,
};
pub(crate) use sampler::{clamp_interior, sample_ball_stream, sample_region};

/// Largest tolerated fraction of non-finite integrand values.
pub const NON_FINITE_LIMIT: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("{non_finite} of {total} integrand values were non-finite")]
    NonFinite { non_finite: u64, total: u64 },
    #[error("sample count must be at least 1")]
    EmptySample,
}

/// Runs `g` over `count` index-addressed uniform points of `[0,1)^udims`,
/// accumulating `k` complex outputs per point.
pub fn integrate_uniform_multi<G>(
    cfg: &SamplerConfig,
    stream: u64,
    udims: usize,
    count: usize,
    k: usize,
    g: G,
) -> Vec<Accum>
where
    G: Fn(u64, &[f64], &mut [Complex64]) + Sync,
{
    let src = UniformSource::new(cfg, stream, udims);
    let batch = cfg.batch();
    let blocks = count.div_ceil(batch);
    let parts: Vec<Vec<Accum>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * batch;
            let len = batch.min(count - start);
            let mut buf = Vec::with_capacity(len * udims);
            src.fill_block(start as u64, len, &mut buf);
            let mut acc = vec![Accum::default(); k];
            let mut out = vec![Complex64::new(0.0, 0.0); k];
            for (i, u) in buf.chunks_exact(udims.max(1)).enumerate().take(len) {
                out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
                g((start + i) as u64, u, &mut out);
                acc.iter_mut().zip(&out).for_each(|(a, &o)| a.push(o));
            }
            acc
        })
        .collect();
    (0..k)
        .map(|j| Accum::reduce(parts.iter().map(|p| p[j]).collect()))
        .collect()
}

/// Single-output form of [`integrate_uniform_multi`].
pub fn integrate_uniform<G>(cfg: &SamplerConfig, stream: u64, udims: usize, count: usize, g: G) -> Accum
where
    G: Fn(u64, &[f64]) -> Complex64 + Sync,
{
    integrate_uniform_multi(cfg, stream, udims, count, 1, |i, u, out| out[0] = g(i, u))[0]
}

/// Rejects accumulators whose non-finite fraction exceeds [`NON_FINITE_LIMIT`].
pub fn check_finite(acc: Accum) -> Result<Accum, QuadratureError> {
    let total = acc.total();
    if total == 0 {
        return Err(QuadratureError::EmptySample);
    }
    if acc.non_finite as f64 > NON_FINITE_LIMIT * total as f64 {
        return Err(QuadratureError::NonFinite {
            non_finite: acc.non_finite,
            total,
        });
    }
    Ok(acc)
}

fn ball_point(dim: usize, u: &[f64]) -> BallPoint {
    let mut c = vec![0.0; dim];
    unit_ball_point(dim, u, &mut c);
    clamp_interior(&mut c);
    BallPoint::from_interior(c)
}

/// `∫_𝔹ⁿ f dν` as the sample mean over the points of [`sample_ball`].
pub fn integrate<F>(f: F, cfg: &SamplerConfig, dim: usize, count: usize) -> Result<Estimate<Complex64>, QuadratureError>
where
    F: Fn(&BallPoint) -> Complex64 + Sync,
{
    if count == 0 {
        return Err(QuadratureError::EmptySample);
    }
    let acc = integrate_uniform(cfg, 0, ball_dims(dim), count, |_, u| f(&ball_point(dim, u)));
    Ok(check_finite(acc)?.estimate())
}

/// Result of [`integrate_region`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionEstimate {
    /// `∫ f χ_R dν`.
    pub integral: Estimate<Complex64>,
    /// `ν(R)`.
    pub measure: Estimate<f64>,
}

/// `∫_R f dν` and `ν(R)` on the same sample as [`integrate`].
pub fn integrate_region<F, M>(
    f: F,
    membership: M,
    cfg: &SamplerConfig,
    dim: usize,
    count: usize,
) -> Result<RegionEstimate, QuadratureError>
where
    F: Fn(&BallPoint) -> Complex64 + Sync,
    M: Fn(&BallPoint) -> bool + Sync,
{
    if count == 0 {
        return Err(QuadratureError::EmptySample);
    }
    let acc = integrate_uniform_multi(cfg, 0, ball_dims(dim), count, 2, |_, u, out| {
        let x = ball_point(dim, u);
        if membership(&x) {
            out[0] = f(&x);
            out[1] = Complex64::new(1.0, 0.0);
        }
    });
    Ok(RegionEstimate {
        integral: check_finite(acc[0])?.estimate(),
        measure: acc[1].estimate_re(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_integrand_is_exact() {
        let cfg = SamplerConfig::pseudo_random(3);
        let e = integrate(|_| Complex64::new(2.5, -1.0), &cfg, 3, 5000).unwrap();
        assert_eq!(e.value, Complex64::new(2.5, -1.0));
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.samples, 5000);
    }

    #[test]
    fn odd_and_quadratic_moments() {
        let cfg = SamplerConfig::pseudo_random(9);
        let e = integrate(|x| c(x.coords()[0]), &cfg, 2, 100_000).unwrap();
        assert!(e.within(c(0.0), 3.0, 0.0), "{e:?}");
        let e = integrate(|x| c(x.norm_sq()), &cfg, 2, 100_000).unwrap();
        assert!(e.within(c(0.5), 3.0, 0.0), "{e:?}");
    }

    #[test]
    fn result_is_independent_of_batch_size() {
        let base = SamplerConfig::pseudo_random(4);
        let f = |x: &BallPoint| c(x.coords()[0].exp());
        let a = integrate(f, &base, 2, 10_000).unwrap();
        let b = integrate(f, &SamplerConfig { batch: 10_000, ..base }, 2, 10_000).unwrap();
        assert!((a.value - b.value).norm() < 1e-14);
        let again = integrate(f, &base, 2, 10_000).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn region_examples() {
        let cfg = SamplerConfig::low_discrepancy(1);
        let all = integrate_region(|x| c(x.norm_sq()), |_| true, &cfg, 2, 4096).unwrap();
        let plain = integrate(|x| c(x.norm_sq()), &cfg, 2, 4096).unwrap();
        assert_eq!(all.integral.value, plain.value);
        assert_eq!(all.measure.value, 1.0);
        let none = integrate_region(|_| c(1.0), |_| false, &cfg, 2, 4096).unwrap();
        assert_eq!(none.integral.value, c(0.0));
        assert_eq!(none.measure.value, 0.0);
        let cfg = SamplerConfig::pseudo_random(1);
        let half = integrate_region(|_| c(1.0), |x| x.norm() < 0.5, &cfg, 3, 100_000).unwrap();
        assert!(half.measure.within(0.125, 3.0, 0.0), "{:?}", half.measure);
        assert!(half.integral.within(c(0.125), 3.0, 0.0));
    }

    #[test]
    fn non_finite_fraction_is_an_error() {
        let cfg = SamplerConfig::pseudo_random(2);
        let r = integrate(|x| c(if x.coords()[0] > 0.9 { f64::NAN } else { 1.0 }), &cfg, 2, 20_000);
        assert!(matches!(r, Err(QuadratureError::NonFinite { .. })));
        assert_eq!(integrate(|_| c(1.0), &cfg, 2, 0), Err(QuadratureError::EmptySample));
    }
}
