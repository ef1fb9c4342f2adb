//! Counter-based uniform sources and the maps that turn unit-cube points into
//! ν-uniform ball points.
//!
//! Every draw is a pure function of `(seed, stream, index)`, so parallel
//! schedules reproduce the serial stream exactly.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BallPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Randomly shifted Halton sequence.
    #[default]
    LowDiscrepancy,
    /// ChaCha8 addressed by word position.
    PseudoRandom,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::LowDiscrepancy => "low-discrepancy",
            Scheme::PseudoRandom => "pseudo-random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

fn default_batch() -> usize {
    1024
}

impl SamplerConfig {
    pub fn new(seed: u64, scheme: Scheme) -> Self {
        Self {
            seed,
            scheme,
            batch: default_batch(),
        }
    }

    pub fn low_discrepancy(seed: u64) -> Self {
        Self::new(seed, Scheme::LowDiscrepancy)
    }

    pub fn pseudo_random(seed: u64) -> Self {
        Self::new(seed, Scheme::PseudoRandom)
    }

    pub fn with_scheme(self, scheme: Scheme) -> Self {
        Self { scheme, ..self }
    }

    /// A configuration whose streams are independent of `self`'s.
    pub fn derive(self, label: u64) -> Self {
        Self {
            seed: mix64(self.seed ^ mix64(label.wrapping_add(0x632B_E59B_D9B4_E019))),
            ..self
        }
    }

    pub(crate) fn batch(&self) -> usize {
        self.batch.max(1)
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::low_discrepancy(0x5EED)
    }
}

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for a named sub-stream of a seed.
#[inline]
pub fn stream_key(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ stream.wrapping_mul(0xD134_2543_DE82_EF95))
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    acc
}

/// Source of points in `[0, 1)^dims` addressed by index.
#[derive(Clone, Debug)]
pub struct UniformSource {
    scheme: Scheme,
    key: u64,
    dims: usize,
    shifts: Vec<f64>,
}

impl UniformSource {
    pub fn new(cfg: &SamplerConfig, stream: u64, dims: usize) -> Self {
        assert!(dims <= PRIMES.len(), "at most {} uniform dimensions", PRIMES.len());
        let key = stream_key(cfg.seed, stream);
        let shifts = (0..dims as u64)
            .map(|d| (mix64(key ^ mix64(d + 1)) >> 11) as f64 / (1u64 << 53) as f64)
            .collect();
        Self {
            scheme: cfg.scheme,
            key,
            dims,
            shifts,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Writes points `start..start + count` into `out` (row-major, `dims` per point).
    pub fn fill_block(&self, start: u64, count: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(count * self.dims);
        match self.scheme {
            Scheme::LowDiscrepancy => {
                for i in 0..count as u64 {
                    let idx = start + i + 1;
                    for (d, &shift) in self.shifts.iter().enumerate() {
                        let u = radical_inverse(idx, PRIMES[d]) + shift;
                        out.push(if u >= 1.0 { u - 1.0 } else { u });
                    }
                }
            }
            Scheme::PseudoRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.key);
                // each f64 consumes two 32-bit words
                rng.set_word_pos(u128::from(start) * (2 * self.dims as u128));
                for _ in 0..count * self.dims {
                    out.push(rng.random::<f64>());
                }
            }
        }
    }

    pub fn point(&self, index: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims);
        self.fill_block(index, 1, &mut out);
        out
    }
}

/// Uniform coordinates consumed by [`unit_direction`].
pub fn direction_dims(n: usize) -> usize {
    match n {
        2 => 1,
        3 => 2,
        _ => 2 * n.div_ceil(2),
    }
}

/// Uniform coordinates consumed by [`unit_ball_point`].
pub fn ball_dims(n: usize) -> usize {
    1 + direction_dims(n)
}

/// Maps uniforms to a point on the unit sphere S^{n-1}.
pub fn unit_direction(n: usize, u: &[f64], out: &mut [f64]) {
    match n {
        2 => {
            let t = TAU * u[0];
            out[0] = t.cos();
            out[1] = t.sin();
        }
        3 => {
            let z = 1.0 - 2.0 * u[0];
            let s = (1.0 - z * z).max(0.0).sqrt();
            let t = TAU * u[1];
            out[0] = s * t.cos();
            out[1] = s * t.sin();
            out[2] = z;
        }
        _ => {
            // Box–Muller pairs, then normalize
            let mut norm_sq = 0.0;
            for k in 0..n {
                let pair = k / 2;
                let r = (-2.0 * (1.0 - u[2 * pair]).ln()).sqrt();
                let t = TAU * u[2 * pair + 1];
                out[k] = if k % 2 == 0 { r * t.cos() } else { r * t.sin() };
                norm_sq += out[k] * out[k];
            }
            let inv = if norm_sq > 0.0 { norm_sq.sqrt().recip() } else { 0.0 };
            if inv == 0.0 {
                out.iter_mut().for_each(|c| *c = 0.0);
                out[0] = 1.0;
            } else {
                out.iter_mut().for_each(|c| *c *= inv);
            }
        }
    }
}

/// Maps uniforms to a ν-uniform point of the closed unit ball, radius `u₀^{1/n}`.
pub fn unit_ball_point(n: usize, u: &[f64], out: &mut [f64]) {
    unit_direction(n, &u[1..], out);
    let r = match n {
        2 => u[0].sqrt(),
        3 => u[0].cbrt(),
        _ => u[0].powf(1.0 / n as f64),
    };
    out.iter_mut().for_each(|c| *c *= r);
}

/// Scales coordinates just inside the open ball when rounding lands them on the sphere.
pub(crate) fn clamp_interior(coords: &mut [f64]) {
    let nsq: f64 = coords.iter().map(|c| c * c).sum();
    if nsq >= 1.0 {
        let s = (1.0 - 1e-15) / nsq.sqrt();
        coords.iter_mut().for_each(|c| *c *= s);
    }
}

/// ν-uniform points of 𝔹ⁿ, deterministic per `(cfg.seed, index)`.
pub fn sample_ball(cfg: &SamplerConfig, dim: usize, count: usize) -> Vec<BallPoint> {
    sample_ball_stream(cfg, 0, dim, 0, count)
}

pub(crate) fn sample_ball_stream(
    cfg: &SamplerConfig,
    stream: u64,
    dim: usize,
    start: u64,
    count: usize,
) -> Vec<BallPoint> {
    let src = UniformSource::new(cfg, stream, ball_dims(dim));
    let mut buf = Vec::new();
    src.fill_block(start, count, &mut buf);
    buf.chunks_exact(src.dims())
        .map(|u| {
            let mut c = vec![0.0; dim];
            unit_ball_point(dim, u, &mut c);
            clamp_interior(&mut c);
            BallPoint::from_interior(c)
        })
        .collect()
}

/// Uniform points of the Euclidean ball `B(center, radius)` that fall inside 𝔹ⁿ,
/// paired with their sample index. Points outside 𝔹ⁿ are dropped.
pub(crate) fn sample_region(
    cfg: &SamplerConfig,
    stream: u64,
    center: &[f64],
    radius: f64,
    start: u64,
    count: usize,
) -> Vec<(u64, BallPoint)> {
    let dim = center.len();
    let src = UniformSource::new(cfg, stream, ball_dims(dim));
    let mut buf = Vec::new();
    src.fill_block(start, count, &mut buf);
    let mut unit = vec![0.0; dim];
    buf.chunks_exact(src.dims())
        .enumerate()
        .filter_map(|(i, u)| {
            unit_ball_point(dim, u, &mut unit);
            let c: Vec<f64> = center.iter().zip(&unit).map(|(c, v)| c + radius * v).collect();
            BallPoint::try_from_slice(&c).map(|p| (start + i as u64, p))
        })
        .collect()
}
