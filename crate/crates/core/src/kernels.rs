//! Reproducing kernels and empirical estimators for their size and
//! smoothness constants.
//!
//! A projection is `(Pf)(x) = ∫ f(y) K(x, y) dν(y)`. For the disk the kernel
//! is `K(z, w) = (1 − z w̄)^{-2}`. The harmonic ball kernel is the zonal
//! series `Σ_m (n+2m)/n · Z_m(x, y)`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dist_sq, dot, quasi_metric_sq, BallPoint, BOUNDARY_EPS};
use crate::quadrature::{
    ball_dims, check_finite, direction_dims, integrate_uniform, mix64, unit_ball_point, unit_direction, Estimate,
    QuadratureError, SamplerConfig, UniformSource,
};

/// `|x||y|` above which a truncated series must show a negligible last term.
pub const SERIES_GUARD: f64 = 0.999;
/// Largest last-term magnitude tolerated beyond [`SERIES_GUARD`].
pub const SERIES_TAIL_TOL: f64 = 1e-8;

/// Default radius cap for sampled pairs; closer to the sphere `1 − |x|²`
/// loses most of its digits.
pub const PAIR_RADIUS_LIMIT: f64 = 1.0 - 1e-6;

const STREAM_PAIRS: u64 = 0x7061_6972;
const STREAM_HORMANDER: u64 = 0x686F_726D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel `{0}` is not available")]
    Unsupported(String),
    #[error("kernel `{name}` works in dimension {expected}, got {found}")]
    DimensionMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("series truncated at M = {truncation} is not converged at |x||y| = {product} (last term {last_term:e})")]
    Truncation {
        truncation: usize,
        product: f64,
        last_term: f64,
    },
    #[error("non-finite kernel value at x = {x:?}, y = {y:?}")]
    NonFinite { x: Vec<f64>, y: Vec<f64> },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// `K(x, y)` on 𝔹ⁿ × 𝔹ⁿ with an optional analytic gradient in `x`.
pub trait Kernel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn eval(&self, x: &BallPoint, y: &BallPoint) -> Result<Complex64, KernelError>;

    /// `∇_x K(x, y)` as `n` complex partial derivatives, when known in closed form.
    fn grad_x(&self, _x: &BallPoint, _y: &BallPoint) -> Option<Result<Vec<Complex64>, KernelError>> {
        None
    }

    /// Series truncation `M`, for series kernels.
    fn truncation(&self) -> Option<usize> {
        None
    }

    fn is_real(&self) -> bool;

    /// Largest `|x|` the sup estimators sample.
    fn radius_limit(&self) -> f64 {
        PAIR_RADIUS_LIMIT
    }
}

fn check_dims(name: &str, dim: usize, x: &BallPoint, y: &BallPoint) -> Result<(), KernelError> {
    for p in [x, y] {
        if p.dim() != dim {
            return Err(KernelError::DimensionMismatch {
                name: name.to_string(),
                expected: dim,
                found: p.dim(),
            });
        }
    }
    Ok(())
}

fn complex(p: &BallPoint) -> Complex64 {
    Complex64::new(p.coords()[0], p.coords()[1])
}

/// Holomorphic Bergman kernel of the disk, `(1 − z w̄)^{-2}`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiskKernel;

impl Kernel for DiskKernel {
    fn name(&self) -> &str {
        "disk"
    }

    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &BallPoint, y: &BallPoint) -> Result<Complex64, KernelError> {
        check_dims("disk", 2, x, y)?;
        let d = Complex64::new(1.0, 0.0) - complex(x) * complex(y).conj();
        Ok((d * d).inv())
    }

    fn grad_x(&self, x: &BallPoint, y: &BallPoint) -> Option<Result<Vec<Complex64>, KernelError>> {
        Some(check_dims("disk", 2, x, y).map(|()| {
            let wb = complex(y).conj();
            let d = Complex64::new(1.0, 0.0) - complex(x) * wb;
            // holomorphic in z: ∂/∂x₁ = K′, ∂/∂x₂ = i K′
            let k = 2.0 * wb / (d * d * d);
            vec![k, Complex64::i() * k]
        }))
    }

    fn is_real(&self) -> bool {
        false
    }
}

/// Reproducing kernel of the harmonic Bergman space of 𝔹ⁿ, truncated after degree `M`.
#[derive(Clone, Debug)]
pub struct HarmonicBallKernel {
    dim: usize,
    truncation: usize,
    name: String,
}

/// Three-term recursion `P_m = α_m u P_{m−1} − β_m q P_{m−2}` for the
/// homogeneous zonal polynomials in `u = ⟨x, y⟩`, `q = |x|²|y|²`.
struct Series {
    p0: f64,
    p1u: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    weight: Vec<f64>,
}

impl HarmonicBallKernel {
    pub fn new(dim: usize, truncation: usize) -> Result<Self, KernelError> {
        if !(2..=5).contains(&dim) {
            return Err(KernelError::Invalid(format!(
                "harmonic ball kernel needs 2 ≤ n ≤ 5, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            truncation,
            name: format!("harmonic-ball(M={truncation})"),
        })
    }

    /// `c_m = (n + 2m)/n`, the inverse radial moment `1 / ∫ |x|^{2m} dν`.
    pub fn coefficient(&self, m: usize) -> f64 {
        (self.dim + 2 * m) as f64 / self.dim as f64
    }

    /// `dim H_m`, the sup of `|Z_m|` on the sphere.
    pub fn harmonic_dimension(&self, m: usize) -> f64 {
        let n = self.dim;
        if m == 0 {
            return 1.0;
        }
        if n == 2 {
            return 2.0;
        }
        // (n+2m−2)/(n−2) · C(m+n−3, m)
        let mut binom = 1.0;
        for i in 1..=m {
            binom *= (i + n - 3) as f64 / i as f64;
        }
        (n + 2 * m - 2) as f64 / (n - 2) as f64 * binom
    }

    /// Bound on the magnitude of the degree-`m` term at `|x||y| = product`.
    pub fn term_bound(&self, m: usize, product: f64) -> f64 {
        self.coefficient(m) * self.harmonic_dimension(m) * product.powi(m as i32)
    }

    fn series(&self) -> Series {
        let n = self.dim;
        let m_max = self.truncation;
        let mut s = Series {
            p0: 1.0,
            p1u: 0.0,
            alpha: vec![0.0; m_max + 1],
            beta: vec![0.0; m_max + 1],
            weight: vec![0.0; m_max + 1],
        };
        if n == 2 {
            // Chebyshev: ρ^m cos mθ, and Z_m = 2 ρ^m cos mθ for m ≥ 1
            s.p1u = 1.0;
            for m in 0..=m_max {
                s.alpha[m] = 2.0;
                s.beta[m] = 1.0;
                s.weight[m] = self.coefficient(m) * if m == 0 { 1.0 } else { 2.0 };
            }
        } else {
            // Gegenbauer C_m^λ with λ = (n−2)/2, and Z_m = (m+λ)/λ ρ^m C_m^λ(cos θ)
            let lambda = (n as f64 - 2.0) / 2.0;
            s.p1u = 2.0 * lambda;
            for m in 0..=m_max {
                let mf = m as f64;
                if m >= 2 {
                    s.alpha[m] = 2.0 * (mf + lambda - 1.0) / mf;
                    s.beta[m] = (mf + 2.0 * lambda - 2.0) / mf;
                }
                s.weight[m] = self.coefficient(m) * (mf + lambda) / lambda;
            }
        }
        s
    }

    fn guard(&self, x: &BallPoint, y: &BallPoint, last_term: f64) -> Result<(), KernelError> {
        let product = (x.norm_sq() * y.norm_sq()).sqrt();
        if product > SERIES_GUARD && last_term.abs() >= SERIES_TAIL_TOL {
            return Err(KernelError::Truncation {
                truncation: self.truncation,
                product,
                last_term,
            });
        }
        Ok(())
    }

    /// Value of the truncated series with its last term.
    fn value(&self, x: &BallPoint, y: &BallPoint) -> (f64, f64) {
        let u = dot(x.coords(), y.coords());
        let q = x.norm_sq() * y.norm_sq();
        let s = self.series();
        let (mut prev, mut cur) = (0.0, s.p0);
        let mut sum = s.weight[0] * cur;
        let mut last = sum;
        for m in 1..=self.truncation {
            let next = if m == 1 {
                s.p1u * u
            } else {
                s.alpha[m] * u * cur - s.beta[m] * q * prev
            };
            prev = cur;
            cur = next;
            last = s.weight[m] * cur;
            sum += last;
        }
        (sum, last)
    }
}

impl Kernel for HarmonicBallKernel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &BallPoint, y: &BallPoint) -> Result<Complex64, KernelError> {
        check_dims(&self.name, self.dim, x, y)?;
        if x.norm_sq() == 0.0 || y.norm_sq() == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let (v, last) = self.value(x, y);
        self.guard(x, y, last)?;
        Ok(Complex64::new(v, 0.0))
    }

    fn grad_x(&self, x: &BallPoint, y: &BallPoint) -> Option<Result<Vec<Complex64>, KernelError>> {
        if let Err(e) = check_dims(&self.name, self.dim, x, y) {
            return Some(Err(e));
        }
        let u = dot(x.coords(), y.coords());
        let q = x.norm_sq() * y.norm_sq();
        let s = self.series();
        // (P, ∂P/∂u, ∂P/∂q) for degrees m−2 and m−1
        let (mut prev, mut cur) = ((0.0, 0.0, 0.0), (s.p0, 0.0, 0.0));
        let (mut du, mut dq) = (0.0, 0.0);
        let mut last = s.weight[0];
        for m in 1..=self.truncation {
            let next = if m == 1 {
                (s.p1u * u, s.p1u, 0.0)
            } else {
                let (a, b) = (s.alpha[m], s.beta[m]);
                (
                    a * u * cur.0 - b * q * prev.0,
                    a * (cur.0 + u * cur.1) - b * q * prev.1,
                    a * u * cur.2 - b * (prev.0 + q * prev.2),
                )
            };
            prev = cur;
            cur = next;
            du += s.weight[m] * cur.1;
            dq += s.weight[m] * cur.2;
            last = s.weight[m] * cur.0;
        }
        if let Err(e) = self.guard(x, y, last) {
            return Some(Err(e));
        }
        let y2 = y.norm_sq();
        Some(Ok(x
            .coords()
            .iter()
            .zip(y.coords())
            .map(|(xi, yi)| Complex64::new(du * yi + dq * 2.0 * y2 * xi, 0.0))
            .collect()))
    }

    fn truncation(&self) -> Option<usize> {
        Some(self.truncation)
    }

    fn is_real(&self) -> bool {
        true
    }

    fn radius_limit(&self) -> f64 {
        SERIES_GUARD.sqrt() - 1e-12
    }
}

/// `K ≡ c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantKernel {
    pub dim: usize,
    pub value: f64,
}

impl Kernel for ConstantKernel {
    fn name(&self) -> &str {
        "constant"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &BallPoint, y: &BallPoint) -> Result<Complex64, KernelError> {
        check_dims("constant", self.dim, x, y)?;
        Ok(Complex64::new(self.value, 0.0))
    }

    fn grad_x(&self, x: &BallPoint, y: &BallPoint) -> Option<Result<Vec<Complex64>, KernelError>> {
        Some(check_dims("constant", self.dim, x, y).map(|()| vec![Complex64::new(0.0, 0.0); self.dim]))
    }

    fn is_real(&self) -> bool {
        true
    }
}

/// Surrogate `[x, y]^{-n}` with the size of the bound itself; not reproducing.
#[derive(Clone, Copy, Debug)]
pub struct QuasiMetricKernel {
    pub dim: usize,
}

impl Kernel for QuasiMetricKernel {
    fn name(&self) -> &str {
        "quasi-metric"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &BallPoint, y: &BallPoint) -> Result<Complex64, KernelError> {
        check_dims("quasi-metric", self.dim, x, y)?;
        let b2 = quasi_metric_sq(x, y);
        Ok(Complex64::new(b2.powf(-(self.dim as f64) / 2.0), 0.0))
    }

    fn grad_x(&self, x: &BallPoint, y: &BallPoint) -> Option<Result<Vec<Complex64>, KernelError>> {
        if let Err(e) = check_dims("quasi-metric", self.dim, x, y) {
            return Some(Err(e));
        }
        let n = self.dim as f64;
        let b2 = quasi_metric_sq(x, y);
        let scale = -n / 2.0 * b2.powf(-n / 2.0 - 1.0);
        let ty = 1.0 - y.norm_sq();
        Some(Ok(x
            .coords()
            .iter()
            .zip(y.coords())
            .map(|(xi, yi)| Complex64::new(scale * (2.0 * (xi - yi) - 2.0 * xi * ty), 0.0))
            .collect()))
    }

    fn is_real(&self) -> bool {
        true
    }
}

/// Kernel selection as stored in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Disk,
    HarmonicBall {
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    QuasiMetric,
    /// Slot for an externally supplied H-harmonic series; not built in.
    HHarmonicSeries,
}

fn default_truncation() -> usize {
    12
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self, dim: usize) -> Result<Arc<dyn Kernel>, KernelError> {
        Ok(match self {
            Self::Disk => {
                if dim != 2 {
                    return Err(KernelError::DimensionMismatch {
                        name: "disk".into(),
                        expected: 2,
                        found: dim,
                    });
                }
                Arc::new(DiskKernel)
            }
            Self::HarmonicBall { truncation } => Arc::new(HarmonicBallKernel::new(dim, *truncation)?),
            Self::Constant { value } => Arc::new(ConstantKernel { dim, value: *value }),
            Self::QuasiMetric => Arc::new(QuasiMetricKernel { dim }),
            Self::HHarmonicSeries => return Err(KernelError::Unsupported("h-harmonic-series".into())),
        })
    }
}

/// Looks a kernel up by name; `truncation` applies to series kernels.
pub fn by_name(name: &str, dim: usize, truncation: Option<usize>) -> Result<Arc<dyn Kernel>, KernelError> {
    let spec = match name {
        "disk" => KernelSpec::Disk,
        "harmonic-ball" => KernelSpec::HarmonicBall {
            truncation: truncation.unwrap_or_else(default_truncation),
        },
        "constant" => KernelSpec::Constant { value: 1.0 },
        "quasi-metric" => KernelSpec::QuasiMetric,
        "h-harmonic-series" => KernelSpec::HHarmonicSeries,
        other => return Err(KernelError::Unsupported(other.to_string())),
    };
    spec.build(dim)
}

/// Finite-difference step used by [`gradient`] at `x`.
pub fn fd_step(x: &BallPoint) -> f64 {
    1e-4f64.min((1.0 - x.norm()) / 10.0)
}

/// `∇_x K(x, y)`, analytic when available, else by central differences.
pub fn gradient(k: &dyn Kernel, x: &BallPoint, y: &BallPoint) -> Result<Vec<Complex64>, KernelError> {
    if let Some(g) = k.grad_x(x, y) {
        return g;
    }
    gradient_fd(k, x, y)
}

/// Central-difference `∇_x K(x, y)` with step [`fd_step`].
pub fn gradient_fd(k: &dyn Kernel, x: &BallPoint, y: &BallPoint) -> Result<Vec<Complex64>, KernelError> {
    let h = fd_step(x);
    let mut out = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let mut p = x.coords().to_vec();
        let mut m = x.coords().to_vec();
        p[i] += h;
        m[i] -= h;
        let kp = k.eval(&BallPoint::new(p).map_err(|e| KernelError::Invalid(e.to_string()))?, y)?;
        let km = k.eval(&BallPoint::new(m).map_err(|e| KernelError::Invalid(e.to_string()))?, y)?;
        out.push((kp - km) / (2.0 * h));
    }
    Ok(out)
}

/// Operator norm of the real Jacobian of `(Re K, Im K)` given its complex gradient.
pub fn gradient_norm(g: &[Complex64]) -> f64 {
    let a: f64 = g.iter().map(|c| c.re * c.re).sum();
    let b: f64 = g.iter().map(|c| c.im * c.im).sum();
    let c: f64 = g.iter().map(|c| c.re * c.im).sum();
    let half = (a - b) / 2.0;
    ((a + b) / 2.0 + half.hypot(c)).max(0.0).sqrt()
}

/// Boundary-biased pairs for sup estimates.
///
/// Radii are `min(1 − u², limit)`. Half of the pairs are independent; the
/// other half place `y` within `(1 − |x|)·s` of `x` for `s` log-uniform in
/// `[10⁻³, 2]`, so pairs with `[x, y] → 0` are well represented.
pub fn sample_pairs(
    sampler: &SamplerConfig,
    dim: usize,
    limit: f64,
    start: u64,
    count: usize,
) -> Vec<(BallPoint, BallPoint)> {
    let d = direction_dims(dim);
    let src = UniformSource::new(sampler, STREAM_PAIRS, 3 + 2 * d);
    let mut buf = Vec::new();
    src.fill_block(start, count, &mut buf);
    buf.chunks_exact(src.dims())
        .map(|u| {
            let mut x = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            unit_direction(dim, &u[1..1 + d], &mut x);
            unit_direction(dim, &u[2 + d..2 + 2 * d], &mut v);
            let rx = (1.0 - u[0] * u[0]).min(limit);
            x.iter_mut().for_each(|c| *c *= rx);
            let w = u[2 + 2 * d];
            let y: Vec<f64> = if w < 0.5 {
                let ry = (1.0 - u[1 + d] * u[1 + d]).min(limit);
                v.iter().map(|c| c * ry).collect()
            } else {
                let s = 1e-3 * 2000f64.powf(2.0 * w - 1.0);
                let len = (1.0 - rx) * s;
                let mut y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + len * b).collect();
                let ny = dot(&y, &y).sqrt();
                if ny > limit {
                    y.iter_mut().for_each(|c| *c *= limit / ny);
                }
                y
            };
            (interior(x), interior(y))
        })
        .collect()
}

fn interior(mut c: Vec<f64>) -> BallPoint {
    let n = dot(&c, &c).sqrt();
    let max = 1.0 - BOUNDARY_EPS;
    if n > max {
        c.iter_mut().for_each(|v| *v *= max / n);
    }
    BallPoint::new(c).expect("scaled inside the ball")
}

/// Outcome of a sup estimate over sampled pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub kernel: String,
    pub constant_estimate: f64,
    /// Best sampled value before the local ascent.
    pub sampled_estimate: f64,
    /// Estimate from the first half of the pairs.
    pub half_estimate: f64,
    pub sample_count: usize,
    /// `|full − half| / full`, the relative change at the last doubling.
    pub stability: f64,
    pub worst_pair: (Vec<f64>, Vec<f64>),
}

/// Pairs and scheme for the sup estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub pairs: usize,
    pub sampler: SamplerConfig,
    /// Evaluations of the local ascent started from the best sampled pair; 0 disables it.
    #[serde(default = "default_polish")]
    pub polish_steps: usize,
}

fn default_polish() -> usize {
    2000
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            pairs: 1_000_000,
            sampler: SamplerConfig::pseudo_random(0xB0D),
            polish_steps: default_polish(),
        }
    }
}

fn sup_over_pairs(
    k: &dyn Kernel,
    cfg: &BoundConfig,
    value: impl Fn(&BallPoint, &BallPoint) -> Result<f64, KernelError> + Sync,
) -> Result<BoundReport, KernelError> {
    if cfg.pairs < 2 {
        return Err(KernelError::Invalid("at least two pairs are needed".into()));
    }
    let block = cfg.sampler.batch.max(1);
    let blocks = cfg.pairs.div_ceil(block);
    let half = cfg.pairs / 2;
    // per block: (best over indices < half, best overall), as (value, index, pair)
    type Best = Option<(f64, usize, (Vec<f64>, Vec<f64>))>;
    let pick = |a: Best, b: Best| -> Best {
        match (a, b) {
            (Some(a), Some(b)) => Some(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
            (a, None) => a,
            (None, b) => b,
        }
    };
    let parts: Vec<(Best, Best)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let len = block.min(cfg.pairs - start);
            let pairs = sample_pairs(&cfg.sampler, k.dim(), k.radius_limit(), start as u64, len);
            let (mut lo, mut all): (Best, Best) = (None, None);
            for (i, (x, y)) in pairs.into_iter().enumerate() {
                let idx = start + i;
                let v = value(&x, &y)?;
                if !v.is_finite() {
                    return Err(KernelError::NonFinite {
                        x: x.into_coords(),
                        y: y.into_coords(),
                    });
                }
                let cand = Some((v, idx, (x.into_coords(), y.into_coords())));
                if idx < half {
                    lo = pick(lo, cand.clone());
                }
                all = pick(all, cand);
            }
            Ok((lo, all))
        })
        .collect::<Result<_, KernelError>>()?;
    let (lo, all) = parts
        .into_iter()
        .fold((None, None), |(l, a), (pl, pa)| (pick(l, pl), pick(a, pa)));
    let (sampled, _, worst) = all.expect("at least one pair");
    let (full, worst) = polish(k, cfg, &value, sampled, worst);
    let half_v = match lo {
        Some((v, _, pair)) => polish(k, cfg, &value, v, pair).0,
        None => 0.0,
    };
    Ok(BoundReport {
        kernel: k.name().to_string(),
        constant_estimate: full,
        sampled_estimate: sampled,
        half_estimate: half_v,
        sample_count: cfg.pairs,
        stability: if full > 0.0 { (full - half_v).abs() / full } else { 0.0 },
        worst_pair: worst,
    })
}

/// Random-perturbation ascent from `pair`, with the step halved after a run of
/// rejections. Seeded from the sampler, so the result is reproducible.
fn polish(
    k: &dyn Kernel,
    cfg: &BoundConfig,
    value: &(impl Fn(&BallPoint, &BallPoint) -> Result<f64, KernelError> + Sync),
    start: f64,
    pair: (Vec<f64>, Vec<f64>),
) -> (f64, (Vec<f64>, Vec<f64>)) {
    let n = k.dim();
    let limit = k.radius_limit();
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.sampler.seed ^ STREAM_PAIRS));
    let (mut best, mut cur) = (start, pair);
    let mut step = 0.05;
    let mut misses = 0;
    for _ in 0..cfg.polish_steps {
        let mut cand = cur.clone();
        for c in cand.0.iter_mut().chain(cand.1.iter_mut()) {
            *c += step * (2.0 * rng.random::<f64>() - 1.0);
        }
        let (x, y) = (capped(cand.0.clone(), limit), capped(cand.1.clone(), limit));
        match value(&x, &y) {
            Ok(v) if v.is_finite() && v > best => {
                best = v;
                cur = (x.into_coords(), y.into_coords());
                misses = 0;
            }
            _ => {
                misses += 1;
                if misses == 4 * n {
                    step *= 0.5;
                    misses = 0;
                }
            }
        }
        if step < 1e-12 {
            break;
        }
    }
    (best, cur)
}

fn capped(mut c: Vec<f64>, limit: f64) -> BallPoint {
    let r = dot(&c, &c).sqrt();
    if r > limit {
        c.iter_mut().for_each(|v| *v *= limit / r);
    }
    interior(c)
}

/// Empirical `Ĉ₂ = sup |K(x, y)| [x, y]ⁿ`.
pub fn kernel_size_constant(k: &dyn Kernel, cfg: &BoundConfig) -> Result<BoundReport, KernelError> {
    let n = k.dim() as f64;
    sup_over_pairs(k, cfg, |x, y| {
        Ok(k.eval(x, y)?.norm() * quasi_metric_sq(x, y).powf(n / 2.0))
    })
}

/// Empirical `sup |∇_x K(x, y)| [x, y]^{n+1}`.
pub fn kernel_gradient_constant(k: &dyn Kernel, cfg: &BoundConfig) -> Result<BoundReport, KernelError> {
    let n = k.dim() as f64;
    sup_over_pairs(k, cfg, |x, y| {
        Ok(gradient_norm(&gradient(k, x, y)?) * quasi_metric_sq(x, y).powf((n + 1.0) / 2.0))
    })
}

/// `∫_{𝔹ⁿ ∖ B(y_j, 2ρ)} |K(x, y) − K(x, y_j)| dν(x)` by Monte Carlo over 𝔹ⁿ.
pub fn hormander_integral(
    k: &dyn Kernel,
    center: &BallPoint,
    radius: f64,
    y: &BallPoint,
    sampler: &SamplerConfig,
    samples: usize,
) -> Result<Estimate, KernelError> {
    if !(radius > 0.0) {
        return Err(KernelError::Invalid(format!(
            "cube radius must be positive, got {radius}"
        )));
    }
    if samples == 0 {
        return Err(QuadratureError::EmptySample.into());
    }
    if y == center {
        return Ok(Estimate::new(0.0, 0.0, samples));
    }
    let n = k.dim();
    let stream = center
        .coords()
        .iter()
        .fold(STREAM_HORMANDER, |h, c| mix64(h ^ c.to_bits()));
    let r2 = 4.0 * radius * radius;
    let acc = integrate_uniform(sampler, stream, ball_dims(n), samples, |_, u| {
        let mut c = vec![0.0; n];
        unit_ball_point(n, u, &mut c);
        let Ok(x) = BallPoint::new(c) else {
            return Complex64::new(0.0, 0.0);
        };
        if dist_sq(x.coords(), center.coords()) < r2 {
            return Complex64::new(0.0, 0.0);
        }
        match (k.eval(&x, y), k.eval(&x, center)) {
            (Ok(a), Ok(b)) => Complex64::new((a - b).norm(), 0.0),
            _ => Complex64::new(f64::NAN, 0.0),
        }
    });
    Ok(check_finite(acc)?.estimate_re())
}

/// Closed form of `2^{n+1} d ∫_{|x−y_j| ≥ 2d} |x − y_j|^{-n-1} dν(x)` with the
/// radial integral cut at the diameter 2, which equals `2ⁿ n (1 − d)` for `0 < d < 1`.
pub fn tail_integral_bound(n: usize, d: f64) -> Result<f64, KernelError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(KernelError::Invalid(format!(
            "distance must be positive and finite, got {d}"
        )));
    }
    if d >= 1.0 {
        return Ok(0.0);
    }
    Ok(2f64.powi(n as i32) * n as f64 * (1.0 - d))
}
