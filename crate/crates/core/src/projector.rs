//! Numerical projections `Pf`, distribution functions and weak-type scans.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::czd::{
    decompose, good_bad_split, good_l2_bound_check, mean_zero_check, omega_prime, CzdError, DecomposeOptions,
};
use crate::dyadic::DyadicSystem;
use crate::functions::{ball_mean, IntegrableFunction, Support};
use crate::geometry::{dist_sq, BallPoint};
use crate::kernels::{hormander_integral, tail_integral_bound, Kernel, KernelError};
use crate::quadrature::{
    ball_dims, check_finite, gauss_legendre, gauss_legendre_unit, mix64, sample_ball, sample_region, unit_ball_point,
    unit_direction, Accum, Estimate, QuadratureError, SamplerConfig, UniformSource,
};

/// Smallest radius of the log-radial proposal around the evaluation point.
pub const RADIAL_CUTOFF: f64 = 1e-6;
/// `se(N) / se(N/2)` above which the sample count is quadrupled before declaring divergence.
pub const DIVERGENCE_RATIO: f64 = 0.95;
/// Share of `Σ |v|²` above which one draw is taken to dominate the sample.
pub const PEAK_SHARE: f64 = 0.25;
/// Largest angular node count of the adaptive disk rule.
pub const MAX_ANGULAR: usize = 1 << 16;

const STREAM_PROJECT: u64 = 0x7072_6F6A;
const STREAM_PB: u64 = 0x7062_0000;
const STREAM_PB_MEAN: u64 = 0x7062_6D00;
const STREAM_EDGE: u64 = 0x6564_6765;
const LABEL_OUTER: u64 = 0x6F75_7465;
const LABEL_GOOD: u64 = 0x676F_6F64;
const LABEL_OMEGA: u64 = 0x6F6D_6567;
const LABEL_HORMANDER: u64 = 0x686F_726D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectorError {
    #[error("kernel and function dimensions differ: {kernel} vs {function}")]
    DimensionMismatch { kernel: usize, function: usize },
    #[error("product rule is available for n = 2 and n = 3, not n = {0}")]
    UnsupportedRule(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ProjectorError>,
    },
    #[error(transparent)]
    Czd(#[from] CzdError),
}

fn staged<T, E: Into<ProjectorError>>(stage: &'static str, r: Result<T, E>) -> Result<T, ProjectorError> {
    r.map_err(|e| ProjectorError::Stage {
        stage,
        source: Box::new(e.into()),
    })
}

/// Quadrature used for `∫ f(y) K(x, y) dν(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Integrator {
    /// Importance sampling from a mixture of the support of `f` (or the whole
    /// ball) and a log-radial density `∝ |x − y|^{-n}` around `x`.
    MonteCarlo { samples: usize, sampler: SamplerConfig },
    /// Gauss–Legendre in the radius and trapezoid in angle, for n = 2 and n = 3.
    /// On the disk the angular count grows like `1/(1 − |x| r)` per ring.
    Product { radial: usize, angular: usize },
}

impl Integrator {
    pub fn monte_carlo(samples: usize, sampler: SamplerConfig) -> Self {
        Self::MonteCarlo { samples, sampler }
    }
}

/// Result of [`project`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Projection {
    Converged(Estimate<Complex64>),
    /// The standard error did not shrink when the sample count grew.
    Divergent {
        estimate: Estimate<Complex64>,
        stderr_ratio: f64,
    },
}

impl Projection {
    pub fn estimate(&self) -> Estimate<Complex64> {
        match self {
            Self::Converged(e) => *e,
            Self::Divergent { estimate, .. } => *estimate,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Self::Divergent { .. })
    }
}

/// `(Pf)(x) = ∫ f(y) K(x, y) dν(y)`.
pub fn project(
    k: &dyn Kernel,
    f: &IntegrableFunction,
    x: &BallPoint,
    integrator: &Integrator,
) -> Result<Projection, ProjectorError> {
    if k.dim() != f.dim() || x.dim() != k.dim() {
        return Err(ProjectorError::DimensionMismatch {
            kernel: k.dim(),
            function: f.dim(),
        });
    }
    match *integrator {
        Integrator::Product { radial, angular } => {
            if radial == 0 || angular == 0 {
                return Err(ProjectorError::Invalid(
                    "product rule needs positive node counts".into(),
                ));
            }
            let coarse = product(k, f, x, radial, angular)?;
            let fine = product(k, f, x, 2 * radial, 2 * angular)?;
            Ok(Projection::Converged(Estimate::new(
                coarse,
                (fine - coarse).norm(),
                radial * angular,
            )))
        }
        Integrator::MonteCarlo { samples, sampler } => {
            if samples < 2 {
                return Err(QuadratureError::EmptySample.into());
            }
            let mix = Mixture::new(f);
            let first = mix.run(k, f, x, &sampler, samples)?;
            if first.ratio(None) <= DIVERGENCE_RATIO {
                return Ok(Projection::Converged(first.full.estimate()));
            }
            // the rerun shares its first `samples` draws with the first pass
            let more = mix.run(k, f, x, &sampler, 4 * samples)?;
            let ratio = more.ratio(Some(&first));
            if ratio <= DIVERGENCE_RATIO {
                Ok(Projection::Converged(more.full.estimate()))
            } else {
                Ok(Projection::Divergent {
                    estimate: more.full.estimate(),
                    stderr_ratio: ratio,
                })
            }
        }
    }
}

fn ratio_of(se: f64, se_before: f64, value: Complex64) -> f64 {
    if se <= 1e-12 * (1.0 + value.norm()) || se_before == 0.0 {
        0.0
    } else {
        se / se_before
    }
}

fn product(
    k: &dyn Kernel,
    f: &IntegrableFunction,
    x: &BallPoint,
    radial: usize,
    angular: usize,
) -> Result<Complex64, ProjectorError> {
    let mut err = None;
    let mut integrand = |y: &BallPoint| -> Complex64 {
        let v = f.eval(y);
        if v == Complex64::new(0.0, 0.0) {
            return v;
        }
        match k.eval(x, y) {
            Ok(kv) => v * kv,
            Err(e) => {
                err.get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let total = match k.dim() {
        2 => {
            let (s, ws) = gauss_legendre_unit(radial);
            let rx = x.norm();
            let mut total = Complex64::new(0.0, 0.0);
            for (&sk, &wk) in s.iter().zip(&ws) {
                let r = sk.sqrt();
                let nodes = ((36.0 / (1.0 - rx * r)).ceil() as usize).clamp(angular, MAX_ANGULAR.max(angular));
                let mut ring = Complex64::new(0.0, 0.0);
                for j in 0..nodes {
                    let t = TAU * j as f64 / nodes as f64;
                    ring += integrand(&BallPoint::new(vec![r * t.cos(), r * t.sin()]).expect("interior node"));
                }
                total += ring * (wk / nodes as f64);
            }
            total
        }
        3 => {
            let (rs, wr) = gauss_legendre_unit(radial);
            let (z, wz) = gauss_legendre(radial);
            let mut total = Complex64::new(0.0, 0.0);
            for (&r, &wr) in rs.iter().zip(&wr) {
                for (&zl, &wl) in z.iter().zip(&wz) {
                    let s = (1.0 - zl * zl).max(0.0).sqrt();
                    let mut ring = Complex64::new(0.0, 0.0);
                    for j in 0..angular {
                        let t = TAU * j as f64 / angular as f64;
                        let p = vec![r * s * t.cos(), r * s * t.sin(), r * zl];
                        ring += integrand(&BallPoint::new(p).expect("interior node"));
                    }
                    total += ring * (3.0 * r * r * wr * 0.5 * wl / angular as f64);
                }
            }
            total
        }
        n => return Err(ProjectorError::UnsupportedRule(n)),
    };
    match err {
        Some(e) => Err(e.into()),
        None => Ok(total),
    }
}

/// Proposal for the Monte Carlo integrator.
struct Mixture {
    dim: usize,
    /// `(center, radius)` of the first component; the unit ball when `f` has no support.
    first: (Vec<f64>, f64),
    log_span: f64,
}

const FIRST_WEIGHT: f64 = 0.6;

impl Mixture {
    fn new(f: &IntegrableFunction) -> Self {
        let dim = f.dim();
        let first = match f.support() {
            Some(s) if s.radius < 1.0 => (s.center.clone(), s.radius),
            _ => (vec![0.0; dim], 1.0),
        };
        Self {
            dim,
            first,
            log_span: (2.0 / RADIAL_CUTOFF).ln(),
        }
    }

    fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim as i32;
        let (c, r) = (&self.first.0, self.first.1);
        let p1 = if dist_sq(c, y) < r * r { r.powi(-n) } else { 0.0 };
        let rho = dist_sq(x, y).sqrt();
        let p2 = if (RADIAL_CUTOFF..=2.0).contains(&rho) {
            1.0 / (self.dim as f64 * self.log_span * rho.powi(n))
        } else {
            0.0
        };
        FIRST_WEIGHT * p1 + (1.0 - FIRST_WEIGHT) * p2
    }

    fn draw(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.dim;
        if u[0] < FIRST_WEIGHT {
            unit_ball_point(n, &u[1..], out);
            out.iter_mut()
                .zip(&self.first.0)
                .for_each(|(o, c)| *o = c + self.first.1 * *o);
        } else {
            unit_direction(n, &u[2..], out);
            let rho = RADIAL_CUTOFF * (self.log_span * u[1]).exp();
            out.iter_mut().zip(x).for_each(|(o, c)| *o = c + rho * *o);
        }
    }

    /// Accumulators over `samples` draws and over the first half of them.
    fn run(
        &self,
        k: &dyn Kernel,
        f: &IntegrableFunction,
        x: &BallPoint,
        sampler: &SamplerConfig,
        samples: usize,
    ) -> Result<Pass, ProjectorError> {
        let dims = 1 + ball_dims(self.dim);
        let stream = x.coords().iter().fold(STREAM_PROJECT, |h, c| mix64(h ^ c.to_bits()));
        let src = UniformSource::new(sampler, stream, dims);
        let half_n = samples / 2;
        let (mut full, mut half) = (Accum::default(), Accum::default());
        let (mut peak, mut energy) = (0.0f64, 0.0f64);
        let mut buf = Vec::new();
        let mut y = vec![0.0; self.dim];
        let mut err = None;
        let batch = sampler.batch.max(1);
        let mut start = 0;
        while start < samples {
            let len = batch.min(samples - start);
            src.fill_block(start as u64, len, &mut buf);
            for (i, u) in buf.chunks_exact(dims).enumerate() {
                self.draw(x.coords(), u, &mut y);
                let v = match BallPoint::new(y.clone()) {
                    Ok(p) => {
                        let fv = f.eval(&p);
                        if fv == Complex64::new(0.0, 0.0) {
                            fv
                        } else {
                            match k.eval(x, &p) {
                                Ok(kv) => fv * kv / self.density(x.coords(), p.coords()),
                                Err(e) => {
                                    err.get_or_insert(e);
                                    Complex64::new(f64::NAN, 0.0)
                                }
                            }
                        }
                    }
                    Err(_) => Complex64::new(0.0, 0.0),
                };
                full.push(v);
                if v.re.is_finite() && v.im.is_finite() {
                    peak = peak.max(v.norm_sqr());
                    energy += v.norm_sqr();
                }
                if start + i < half_n {
                    half.push(v);
                }
            }
            start += len;
        }
        if let Some(e) = err {
            if check_finite(full).is_err() {
                return Err(e.into());
            }
        }
        Ok(Pass {
            full: check_finite(full)?,
            half,
            peak_share: if energy > 0.0 { peak / energy } else { 0.0 },
        })
    }
}

struct Pass {
    full: Accum,
    half: Accum,
    /// Largest single contribution to `Σ |v|²`.
    peak_share: f64,
}

impl Pass {
    /// Stderr ratio over the last doubling, with a single dominant draw
    /// counting as a stderr that cannot shrink. On a rerun the draw only
    /// counts if quadrupling the sample did not at least halve its share.
    fn ratio(&self, before: Option<&Pass>) -> f64 {
        let dominant = match before {
            Some(b) => self.peak_share > PEAK_SHARE && self.peak_share > 0.5 * b.peak_share,
            None => self.peak_share > PEAK_SHARE,
        };
        if dominant {
            return 1.0;
        }
        let value = self.full.estimate().value;
        let r = ratio_of(self.full.stderr(), self.half.stderr(), value);
        match before {
            Some(b) => r.max(ratio_of(self.full.stderr(), b.full.stderr(), value).sqrt()),
            None => r,
        }
    }
}

/// Super-level set measures `λ(t) = ν{|h| > t}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionProfile {
    pub thresholds: Vec<f64>,
    pub lambda: Vec<Estimate>,
    /// `∫ |h| dν`.
    pub l1_norm: Estimate,
    pub samples: usize,
}

impl DistributionProfile {
    /// Builds the profile from `|h|` at points drawn from `ν`; `λ` is
    /// non-increasing because every threshold uses the same points.
    pub fn from_values(abs_values: &[f64], thresholds: &[f64]) -> Result<Self, ProjectorError> {
        check_thresholds(thresholds)?;
        if abs_values.is_empty() {
            return Err(QuadratureError::EmptySample.into());
        }
        let n = abs_values.len() as f64;
        let mut sorted = abs_values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lambda = thresholds
            .iter()
            .map(|&t| {
                let above = sorted.len() - sorted.partition_point(|&v| v <= t);
                let q = above as f64 / n;
                Estimate::new(q, (q * (1.0 - q) / n).sqrt(), abs_values.len())
            })
            .collect();
        let mut acc = Accum::default();
        abs_values.iter().for_each(|&v| acc.push_re(v));
        Ok(Self {
            thresholds: thresholds.to_vec(),
            lambda,
            l1_norm: acc.estimate_re(),
            samples: abs_values.len(),
        })
    }

    /// `(sup_t t λ(t), argmax t)`, the first maximizer on ties.
    pub fn weak_sup(&self) -> (f64, f64) {
        self.thresholds
            .iter()
            .zip(&self.lambda)
            .map(|(&t, l)| (t * l.value, t))
            .fold((0.0, self.thresholds[0]), |a, b| if b.0 > a.0 { b } else { a })
    }
}

fn check_thresholds(t: &[f64]) -> Result<(), ProjectorError> {
    if t.is_empty() || t.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || t.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProjectorError::Invalid(
            "thresholds must be positive, finite and ascending".into(),
        ));
    }
    Ok(())
}

/// `λ_h(t)` for each threshold from `samples` points of `sampler`.
pub fn distribution_function(
    h: impl Fn(&BallPoint) -> f64 + Sync,
    dim: usize,
    thresholds: &[f64],
    sampler: &SamplerConfig,
    samples: usize,
) -> Result<DistributionProfile, ProjectorError> {
    check_thresholds(thresholds)?;
    let points = sample_ball(sampler, dim, samples);
    let values: Vec<f64> = points.par_iter().map(|x| h(x).abs()).collect();
    DistributionProfile::from_values(&values, thresholds)
}

/// Outer points and inner quadrature of a scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Points at which `Pf` is evaluated.
    pub outer: usize,
    pub sampler: SamplerConfig,
    pub integrator: Integrator,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            outer: 4096,
            sampler: SamplerConfig::low_discrepancy(0x5CA7),
            integrator: Integrator::monte_carlo(4096, SamplerConfig::low_discrepancy(0x1EE7)),
        }
    }
}

/// `Pf` at the outer points of `cfg`.
pub struct ProjectedSample {
    pub points: Vec<BallPoint>,
    pub values: Vec<Projection>,
}

impl ProjectedSample {
    pub fn divergent(&self) -> usize {
        self.values.iter().filter(|p| p.is_divergent()).count()
    }

    pub fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|p| p.estimate().value.norm()).collect()
    }

    /// Mean inner variance, the bias of `|Pf|²` estimated pointwise.
    pub fn mean_inner_variance(&self) -> f64 {
        let n = self.values.len().max(1) as f64;
        self.values.iter().map(|p| p.estimate().stderr.powi(2)).sum::<f64>() / n
    }
}

pub fn project_sample(
    k: &dyn Kernel,
    f: &IntegrableFunction,
    cfg: &ScanConfig,
) -> Result<ProjectedSample, ProjectorError> {
    let points = sample_ball(&cfg.sampler.derive(LABEL_OUTER), k.dim(), cfg.outer);
    let values = points
        .par_iter()
        .map(|x| project(k, f, x, &cfg.integrator))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProjectedSample { points, values })
}

/// One family member of a [`WeakTypeReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberReport {
    pub label: String,
    pub parameter: f64,
    pub l1_norm: f64,
    /// `sup_t t λ_{Pf}(t) / ‖f‖₁`.
    pub sup_ratio: f64,
    pub argmax_t: f64,
    pub profile: DistributionProfile,
    /// Inner integrals flagged divergent.
    pub divergent_points: usize,
    /// `λ(t) ≤ 1` on every grid `t ≤ ‖f‖₁`.
    pub small_t_ok: bool,
    /// Smallest `∫|Pf| + 3 se − t λ(t)` over the grid.
    pub markov_margin: f64,
}

impl MemberReport {
    pub fn finite(&self) -> bool {
        self.divergent_points == 0 && self.sup_ratio.is_finite()
    }
}

/// Result of [`weak_type_scan`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakTypeReport {
    pub family: String,
    pub kernel: String,
    pub members: Vec<MemberReport>,
    /// Last member's sup over the first's.
    pub trend: f64,
}

impl WeakTypeReport {
    pub fn all_finite(&self) -> bool {
        self.members.iter().all(MemberReport::finite)
    }
}

/// `sup_t t λ_{Pf}(t) / ‖f‖₁` for each member of `family`, with `parameters[i]` labelling member `i`.
pub fn weak_type_scan(
    k: &dyn Kernel,
    family_name: &str,
    family: &[(f64, IntegrableFunction)],
    t_grid: &[f64],
    cfg: &ScanConfig,
) -> Result<WeakTypeReport, ProjectorError> {
    check_thresholds(t_grid)?;
    let mut members = Vec::with_capacity(family.len());
    for (param, f) in family {
        let sample = project_sample(k, f, cfg)?;
        let profile = DistributionProfile::from_values(&sample.abs_values(), t_grid)?;
        let l1 = f.l1_norm().value;
        let (sup, argmax_t) = profile.weak_sup();
        let sup_ratio = if l1 > 0.0 {
            sup / l1
        } else if sup == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let small_t_ok = t_grid
            .iter()
            .zip(&profile.lambda)
            .filter(|(t, _)| **t <= l1)
            .all(|(_, l)| l.value <= 1.0);
        let markov_margin = t_grid
            .iter()
            .zip(&profile.lambda)
            .map(|(t, l)| profile.l1_norm.value + 3.0 * profile.l1_norm.stderr - t * l.value)
            .fold(f64::INFINITY, f64::min);
        members.push(MemberReport {
            label: f.label().to_string(),
            parameter: *param,
            l1_norm: l1,
            sup_ratio,
            argmax_t,
            divergent_points: sample.divergent(),
            profile,
            small_t_ok,
            markov_margin,
        });
    }
    let trend = match (members.first(), members.last()) {
        (Some(a), Some(b)) if a.sup_ratio > 0.0 => b.sup_ratio / a.sup_ratio,
        (Some(_), Some(b)) if b.sup_ratio == 0.0 => 1.0,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    };
    Ok(WeakTypeReport {
        family: family_name.to_string(),
        kernel: k.name().to_string(),
        members,
        trend,
    })
}

/// Result of [`weak22_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Weak22 {
    /// `‖f‖₂`.
    pub l2_in: Estimate,
    /// `‖Pf‖₂`.
    pub l2_out: Estimate,
    pub pass: bool,
}

fn sqrt_estimate(sq: Estimate) -> Estimate {
    let v = sq.value.max(0.0).sqrt();
    let se = if v > 0.0 {
        sq.stderr / (2.0 * v)
    } else {
        sq.stderr.sqrt()
    };
    Estimate::new(v, se, sq.samples)
}

/// `‖Pf‖₂ ≤ ‖f‖₂` within three standard errors.
pub fn weak22_check(
    k: &dyn Kernel,
    f: &IntegrableFunction,
    cfg: &ScanConfig,
    l2_samples: usize,
) -> Result<Weak22, ProjectorError> {
    let sq_in = ball_mean(f.dim(), f.support(), &cfg.sampler, l2_samples, |x| f.eval(x).norm_sqr())?;
    let sample = project_sample(k, f, cfg)?;
    let mut acc = Accum::default();
    sample
        .values
        .iter()
        .for_each(|p| acc.push_re(p.estimate().value.norm_sqr()));
    let raw = acc.estimate_re();
    let sq_out = Estimate::new(raw.value, raw.stderr + sample.mean_inner_variance(), raw.samples);
    let (l2_in, l2_out) = (sqrt_estimate(sq_in), sqrt_estimate(sq_out));
    Ok(Weak22 {
        l2_in,
        l2_out,
        pass: l2_out.value <= l2_in.value + 3.0 * l2_in.stderr.hypot(l2_out.stderr) + 1e-12,
    })
}

/// Budgets of [`cz_pipeline_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    pub decompose: DecomposeOptions,
    pub scan: ScanConfig,
    /// Samples for `‖g‖₂²`, `ν(Ω′)` and the mean-zero residuals.
    pub measure_samples: usize,
    /// Samples per stopping cube for `Pb_j`.
    pub cube_samples: usize,
    /// Samples per Hörmander integral.
    pub hormander_samples: usize,
    /// Points of each stopping cube at which the Hörmander integral is taken.
    pub hormander_points: usize,
    /// Stopping cubes entering `Ĉ₄`, largest first.
    pub hormander_cubes: usize,
    /// Gradient constant `Ĉ₂′`, used only for the reported chain bound on `Ĉ₄`.
    pub gradient_constant: Option<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            decompose: DecomposeOptions::default(),
            scan: ScanConfig {
                outer: 2048,
                ..ScanConfig::default()
            },
            measure_samples: 65_536,
            cube_samples: 4096,
            hormander_samples: 16_384,
            hormander_points: 4,
            hormander_cubes: 32,
            gradient_constant: None,
        }
    }
}

/// One inequality of the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage {
    pub stage: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Statistical allowance added to `rhs`.
    pub tolerance: f64,
    /// `rhs + tolerance − lhs`.
    pub margin: f64,
    pub pass: bool,
}

impl Stage {
    fn new(stage: &'static str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs + tolerance - lhs;
        Self {
            stage,
            lhs,
            rhs,
            tolerance,
            margin,
            pass: margin >= 0.0,
        }
    }
}

/// Empirical constants assembled by [`cz_pipeline_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConstants {
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    /// `Ĉ₂′ · 2ⁿ n`, when a gradient constant was supplied.
    pub c4_chain: Option<f64>,
    /// `4(Ĉ₁ + 1) + Ĉ₃ + 2Ĉ₄(1 + Ĉ₁)`.
    pub final_constant: f64,
}

/// Result of [`cz_pipeline_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub label: String,
    pub kernel: String,
    pub t: f64,
    pub l1_norm: f64,
    pub stopping_cubes: usize,
    pub omega_measure: Estimate,
    pub omega_prime_measure: Estimate,
    pub good_l2_sq: Estimate,
    pub pb_outside: Estimate,
    pub weak_ratio: f64,
    pub divergent_points: usize,
    pub constants: PipelineConstants,
    pub stages: Vec<Stage>,
}

impl PipelineReport {
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.pass) && self.divergent_points == 0
    }
}

/// Runs the good/bad argument for `Pf` at height `t` and checks each inequality.
pub fn cz_pipeline_check(
    k: &dyn Kernel,
    f: &IntegrableFunction,
    t: f64,
    system: &Arc<DyadicSystem>,
    opts: &PipelineOptions,
) -> Result<PipelineReport, ProjectorError> {
    let n = k.dim();
    if f.dim() != n {
        return Err(ProjectorError::DimensionMismatch {
            kernel: n,
            function: f.dim(),
        });
    }
    let sampler = opts.scan.sampler;
    let dec = staged("decompose", decompose(f, t, system, &opts.decompose))?;
    let split = staged("split", good_bad_split(&dec, f))?;
    let l1 = dec.l1_norm.value;
    let c1 = dec.c1_used;

    // ‖g‖₂² ≤ (Ĉ₁ + 1) t ‖f‖₁
    let l2 = staged(
        "good-l2",
        good_l2_bound_check(
            &split.good,
            l1,
            t,
            c1,
            &sampler.derive(LABEL_GOOD),
            opts.measure_samples,
        ),
    )?;
    let mut stages = vec![Stage::new("good-l2", l2.lhs.value, l2.rhs, 3.0 * l2.lhs.stderr)];

    // λ_{Pg}(t/2) ≤ 4‖g‖₂²/t²
    let pg = staged("weak22-g", project_sample(k, &split.good, &opts.scan))?;
    let pf = staged("weak11-final", project_sample(k, f, &opts.scan))?;
    let (tg, tf) = ([t / 2.0], [t]);
    let lam_g = staged("weak22-g", DistributionProfile::from_values(&pg.abs_values(), &tg))?.lambda[0];
    let lam_f = staged("weak11-final", DistributionProfile::from_values(&pf.abs_values(), &tf))?.lambda[0];
    let rhs_g = 4.0 * l2.lhs.value / (t * t);
    stages.push(Stage::new(
        "weak22-g",
        lam_g.value,
        rhs_g,
        3.0 * lam_g.stderr.hypot(4.0 * l2.lhs.stderr / (t * t)),
    ));

    // ν(Ω′) ≤ Ĉ₃ ‖f‖₁ / t
    let op = omega_prime(&dec, &sampler.derive(LABEL_OMEGA), opts.measure_samples);
    let c3 = op.c3_geometric;
    stages.push(Stage::new(
        "omega-prime",
        op.measure.value,
        c3 * l1 / t,
        3.0 * op.measure.stderr,
    ));

    // ∫_{𝔹∖Ω′} |Pb| ≤ Ĉ₄ (1 + Ĉ₁) ‖f‖₁
    let outside: Vec<usize> = (0..pf.points.len()).filter(|&i| !op.contains(&pf.points[i])).collect();
    let pb = staged("hormander-pb", bad_projection(k, &dec, f, &pf.points, &outside, opts))?;
    let residual = staged("hormander-pb", mean_zero_residual(k, &dec, &pf.points, &outside, opts))?;
    let pb_outside = Estimate::new(pb.value + residual, pb.stderr, pb.samples);
    let c4 = staged("hormander-pb", hormander_constant(k, &dec, opts))?;
    stages.push(Stage::new(
        "hormander-pb",
        pb_outside.value,
        c4 * (1.0 + c1) * l1,
        3.0 * pb_outside.stderr,
    ));

    // λ_{Pf}(t) ≤ λ_{Pg}(t/2) + ν(Ω′) + (2/t) ∫_{𝔹∖Ω′} |Pb|
    let split_rhs = lam_g.value + op.measure.value + 2.0 * pb_outside.value / t;
    let split_tol = 3.0
        * [
            lam_f.stderr,
            lam_g.stderr,
            op.measure.stderr,
            2.0 * pb_outside.stderr / t,
        ]
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    stages.push(Stage::new("split", lam_f.value, split_rhs, split_tol));

    // t λ_{Pf}(t) ≤ C ‖f‖₁
    let final_constant = 4.0 * (c1 + 1.0) + c3 + 2.0 * c4 * (1.0 + c1);
    let weak_ratio = if l1 > 0.0 { t * lam_f.value / l1 } else { 0.0 };
    let weak_tol = if l1 > 0.0 { 3.0 * t * lam_f.stderr / l1 } else { 0.0 };
    stages.push(Stage::new("weak11-final", weak_ratio, final_constant, weak_tol));

    Ok(PipelineReport {
        label: f.label().to_string(),
        kernel: k.name().to_string(),
        t,
        l1_norm: l1,
        stopping_cubes: dec.stopping.len(),
        omega_measure: dec.omega_measure,
        omega_prime_measure: op.measure,
        good_l2_sq: l2.lhs,
        pb_outside,
        weak_ratio,
        divergent_points: pg.divergent() + pf.divergent(),
        constants: PipelineConstants {
            c1,
            c3,
            c4,
            c4_chain: opts.gradient_constant.map(|g| g * 2f64.powi(n as i32) * n as f64),
            final_constant,
        },
        stages,
    })
}

fn kernel_or_nan(k: &dyn Kernel, x: &BallPoint, y: &BallPoint) -> Complex64 {
    k.eval(x, y).unwrap_or(Complex64::new(f64::NAN, 0.0))
}

/// `∫_{𝔹∖Ω′} |Σ_j ∫_{Q_j} b_j(y)(K(x, y) − K(x, y_j)) dν(y)| dν(x)` over the outer points.
///
/// Each `b_j` integrates to zero, so subtracting `K(x, y_j)` leaves the
/// integral unchanged; [`mean_zero_residual`] accounts for the estimated means.
fn bad_projection(
    k: &dyn Kernel,
    dec: &crate::czd::CZDecomposition,
    f: &IntegrableFunction,
    points: &[BallPoint],
    outside: &[usize],
    opts: &PipelineOptions,
) -> Result<Estimate, ProjectorError> {
    let sys = dec.system();
    let m = outside.len();
    let mut total = vec![Complex64::new(0.0, 0.0); m];
    let mut var = vec![0.0; m];
    let sampler = opts.scan.sampler;
    for s in &dec.stopping {
        let info = sys.cube_info(s.stats.id).map_err(CzdError::from)?;
        let yj = info.center.clone();
        let kj: Vec<Complex64> = outside.iter().map(|&i| kernel_or_nan(k, &points[i], &yj)).collect();
        let mean = s.mean.value;
        let narrow = f.support().filter(|sp| sp.radius < info.sampling_radius);
        let mut parts = Vec::new();
        match narrow {
            Some(sp) => {
                let fpart = sys
                    .integrate_cube(
                        s.stats.id,
                        Some((&sp.center, sp.radius)),
                        opts.cube_samples,
                        &sampler,
                        STREAM_PB,
                        m,
                        |y, out| {
                            let v = f.eval(y);
                            if v != Complex64::new(0.0, 0.0) {
                                for (o, (&i, kv)) in out.iter_mut().zip(outside.iter().zip(&kj)) {
                                    *o = v * (kernel_or_nan(k, &points[i], y) - kv);
                                }
                            }
                        },
                    )
                    .map_err(CzdError::from)?;
                let mpart = sys
                    .integrate_cube(
                        s.stats.id,
                        None,
                        opts.cube_samples,
                        &sampler,
                        STREAM_PB_MEAN,
                        m,
                        |y, out| {
                            for (o, (&i, kv)) in out.iter_mut().zip(outside.iter().zip(&kj)) {
                                *o = -mean * (kernel_or_nan(k, &points[i], y) - kv);
                            }
                        },
                    )
                    .map_err(CzdError::from)?;
                parts.push(fpart);
                parts.push(mpart);
            }
            None => {
                parts.push(
                    sys.integrate_cube(s.stats.id, None, opts.cube_samples, &sampler, STREAM_PB, m, |y, out| {
                        let v = f.eval(y) - mean;
                        for (o, (&i, kv)) in out.iter_mut().zip(outside.iter().zip(&kj)) {
                            *o = v * (kernel_or_nan(k, &points[i], y) - kv);
                        }
                    })
                    .map_err(CzdError::from)?,
                );
            }
        }
        for part in parts {
            for (i, e) in part.values.iter().enumerate() {
                total[i] += e.value;
                var[i] += e.stderr * e.stderr;
            }
        }
    }
    let count = points.len();
    let mut acc = Accum::default();
    for v in &total {
        acc.push_re(v.norm());
    }
    // points inside Ω′ contribute zero
    let acc = Accum::merge(
        acc,
        Accum {
            count: (count - m) as u64,
            ..Accum::default()
        },
    );
    let outer = acc.estimate_re();
    let inner_se = var.iter().map(|v| v.sqrt()).sum::<f64>() / count.max(1) as f64;
    Ok(Estimate::new(outer.value, outer.stderr + inner_se, count))
}

/// `∫_{𝔹∖Ω′} Σ_j |K(x, y_j)| |∫ b_j| dν(x)`, with `|∫ b_j|` widened by three standard errors.
fn mean_zero_residual(
    k: &dyn Kernel,
    dec: &crate::czd::CZDecomposition,
    points: &[BallPoint],
    outside: &[usize],
    opts: &PipelineOptions,
) -> Result<f64, ProjectorError> {
    if dec.stopping.is_empty() || outside.is_empty() {
        return Ok(0.0);
    }
    let (_, rows) = mean_zero_check(dec, opts.cube_samples, 3.0)?;
    let mut total = 0.0;
    for (s, row) in dec.stopping.iter().zip(&rows) {
        let yj = BallPoint::new(s.stats.center.clone()).map_err(|e| ProjectorError::Invalid(e.to_string()))?;
        let w = row.integral.value.norm() + 3.0 * row.combined_stderr;
        let kbar: f64 = outside
            .iter()
            .map(|&i| kernel_or_nan(k, &points[i], &yj).norm())
            .sum::<f64>();
        total += w * kbar;
    }
    Ok(total / points.len() as f64)
}

/// `Ĉ₄`: the largest Hörmander integral over the largest stopping cubes, taken at
/// the sampled cube points farthest from the center.
fn hormander_constant(
    k: &dyn Kernel,
    dec: &crate::czd::CZDecomposition,
    opts: &PipelineOptions,
) -> Result<f64, ProjectorError> {
    let sys = dec.system();
    let cfg = sys.config();
    let mut order: Vec<usize> = (0..dec.stopping.len()).collect();
    order.sort_by(|&a, &b| {
        dec.stopping[b]
            .stats
            .measure
            .value
            .total_cmp(&dec.stopping[a].stats.measure.value)
            .then(a.cmp(&b))
    });
    order.truncate(opts.hormander_cubes);
    let sampler = opts.scan.sampler.derive(LABEL_HORMANDER);
    let mut best = 0.0f64;
    for j in order {
        let id = dec.stopping[j].stats.id;
        let info = sys.cube_info(id).map_err(CzdError::from)?;
        let rho = cfg.outer_radius(id.level);
        for y in edge_points(sys, id, opts.hormander_points, &sampler)? {
            let h = hormander_integral(k, &info.center, rho, &y, &sampler, opts.hormander_samples)?;
            best = best.max(h.value);
        }
    }
    Ok(best)
}

/// Up to `count` sampled points of cube `id`, farthest from its center first.
pub fn edge_points(
    sys: &DyadicSystem,
    id: crate::dyadic::CubeId,
    count: usize,
    sampler: &SamplerConfig,
) -> Result<Vec<BallPoint>, ProjectorError> {
    let info = sys.cube_info(id).map_err(CzdError::from)?;
    let c = info.center.coords().to_vec();
    let stream = STREAM_EDGE ^ mix64(u64::from(id.level) << 32 | u64::from(id.index));
    let mut pts: Vec<BallPoint> = sample_region(sampler, stream, &c, info.sampling_radius, 0, 512)
        .into_iter()
        .map(|(_, p)| p)
        .filter(|p| sys.contains(id, p).unwrap_or(false))
        .collect();
    pts.sort_by(|a, b| dist_sq(b.coords(), &c).total_cmp(&dist_sq(a.coords(), &c)));
    pts.truncate(count);
    Ok(pts)
}

/// Row of [`hormander_domination`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HormanderRow {
    pub cube: crate::dyadic::CubeId,
    pub distance: f64,
    pub integral: Estimate,
    /// `Ĉ₂′ · tail(n, |y − y_j|)`.
    pub bound: f64,
    pub pass: bool,
}

/// `hormander_integral ≤ Ĉ₂′ · tail_integral_bound(n, |y − y_j|)` within three
/// standard errors, at the farthest sampled point of each cube.
pub fn hormander_domination(
    k: &dyn Kernel,
    sys: &DyadicSystem,
    cubes: &[crate::dyadic::CubeId],
    gradient_constant: f64,
    sampler: &SamplerConfig,
    samples: usize,
) -> Result<Vec<HormanderRow>, ProjectorError> {
    let cfg = sys.config();
    cubes
        .iter()
        .map(|&id| {
            let info = sys.cube_info(id).map_err(CzdError::from)?;
            let Some(y) = edge_points(sys, id, 1, sampler)?.pop() else {
                return Err(ProjectorError::Invalid(format!("no sampled point in cube {id:?}")));
            };
            let d = y.dist(&info.center);
            let integral = hormander_integral(k, &info.center, cfg.outer_radius(id.level), &y, sampler, samples)?;
            let bound = if d > 0.0 {
                gradient_constant * tail_integral_bound(k.dim(), d)?
            } else {
                0.0
            };
            Ok(HormanderRow {
                cube: id,
                distance: d,
                integral,
                bound,
                pass: integral.value <= bound + 3.0 * integral.stderr,
            })
        })
        .collect()
}

/// Geometric grid `t₀ · 2^{i/steps}` for `i = 0..count`.
pub fn geometric_grid(t0: f64, steps_per_octave: usize, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| t0 * 2f64.powf(i as f64 / steps_per_octave.max(1) as f64))
        .collect()
}

/// Ball `B(center, radius)` as a [`Support`].
pub fn support(center: &[f64], radius: f64) -> Support {
    Support {
        center: center.to_vec(),
        radius,
    }
}
