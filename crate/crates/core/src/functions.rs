//! Integrable test functions on 𝔹ⁿ and a serializable description of them.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dist_sq, BallPoint, ScalarField};
use crate::quadrature::{
    ball_dims, check_finite, gauss_legendre_unit, integrate_uniform, unit_ball_point, Estimate, QuadratureError,
    SamplerConfig, Scheme,
};

/// Samples used when an `L¹` norm has no closed form.
pub const L1_SAMPLES: usize = 200_000;

const STREAM_L1: u64 = 0x6C31_0000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("invalid function: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// A closed Euclidean ball `B(center, radius)` outside of which a function vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Support {
    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(&self.center, x) <= self.radius * self.radius
    }

    /// Whether the open ball `B(center, radius)` meets this support.
    pub fn meets(&self, center: &[f64], radius: f64) -> bool {
        dist_sq(&self.center, center).sqrt() < self.radius + radius
    }

    /// Distance from `x` to the support ball, zero inside.
    pub fn distance(&self, x: &[f64]) -> f64 {
        (dist_sq(&self.center, x).sqrt() - self.radius).max(0.0)
    }
}

/// How an `L¹` norm was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum L1Source {
    Supplied,
    Estimated { scheme: Scheme, seed: u64, samples: usize },
}

/// A function in `L¹(𝔹ⁿ, dν)` with its norm.
///
/// The optional support ball and sup bound are hints that let the
/// decomposition skip cubes where nothing can happen.
#[derive(Clone)]
pub struct IntegrableFunction {
    value: ScalarField,
    dim: usize,
    l1_norm: Estimate,
    l1_source: L1Source,
    support: Option<Support>,
    sup_bound: Option<f64>,
    label: String,
}

impl fmt::Debug for IntegrableFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegrableFunction")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("l1_norm", &self.l1_norm)
            .field("support", &self.support)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl IntegrableFunction {
    /// A function with a known `L¹` norm.
    pub fn new(
        dim: usize,
        l1_norm: f64,
        value: impl Fn(&BallPoint) -> Complex64 + Send + Sync + 'static,
    ) -> Result<Self, FunctionError> {
        if !(l1_norm >= 0.0 && l1_norm.is_finite()) {
            return Err(FunctionError::Invalid(format!(
                "L1 norm {l1_norm} must be finite and non-negative"
            )));
        }
        Ok(Self {
            value: Arc::new(value),
            dim,
            l1_norm: Estimate::exact(l1_norm),
            l1_source: L1Source::Supplied,
            support: None,
            sup_bound: None,
            label: String::new(),
        })
    }

    /// A function whose `L¹` norm is estimated by Monte Carlo over 𝔹ⁿ.
    pub fn estimated(
        dim: usize,
        value: impl Fn(&BallPoint) -> Complex64 + Send + Sync + 'static,
        sampler: &SamplerConfig,
        samples: usize,
    ) -> Result<Self, FunctionError> {
        let mut f = Self::new(dim, 0.0, value)?;
        f.l1_norm = ball_mean(dim, None, sampler, samples, |x| (f.value)(x).norm())?;
        f.l1_source = L1Source::Estimated {
            scheme: sampler.scheme,
            seed: sampler.seed,
            samples,
        };
        Ok(f)
    }

    /// Declares that the function vanishes outside `support`. When the norm was
    /// estimated it is re-estimated on the support ball.
    pub fn with_support(mut self, support: Support) -> Result<Self, FunctionError> {
        if support.center.len() != self.dim || !(support.radius > 0.0) {
            return Err(FunctionError::Invalid(
                "support ball must match the dimension and have positive radius".into(),
            ));
        }
        if let L1Source::Estimated { scheme, seed, samples } = self.l1_source.clone() {
            let sampler = SamplerConfig::new(seed, scheme);
            let value = self.value.clone();
            self.l1_norm = ball_mean(self.dim, Some(&support), &sampler, samples, |x| value(x).norm())?;
        }
        self.support = Some(support);
        Ok(self)
    }

    pub fn with_sup_bound(mut self, sup: f64) -> Self {
        self.sup_bound = Some(sup);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    #[inline]
    pub fn eval(&self, x: &BallPoint) -> Complex64 {
        (self.value)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn l1_norm(&self) -> Estimate {
        self.l1_norm
    }

    pub fn l1_source(&self) -> &L1Source {
        &self.l1_source
    }

    pub fn support(&self) -> Option<&Support> {
        self.support.as_ref()
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn field(&self) -> ScalarField {
        self.value.clone()
    }

    /// Whether both handles evaluate the same closure.
    pub fn same_function(&self, other: &IntegrableFunction) -> bool {
        Arc::ptr_eq(&self.value, &other.value)
    }

    pub(crate) fn with_l1(mut self, l1_norm: Estimate) -> Self {
        self.l1_norm = l1_norm;
        self
    }
}

/// `∫ g dν` over 𝔹ⁿ, or over `support ∩ 𝔹ⁿ` when given.
pub(crate) fn ball_mean(
    dim: usize,
    support: Option<&Support>,
    sampler: &SamplerConfig,
    samples: usize,
    g: impl Fn(&BallPoint) -> f64 + Sync,
) -> Result<Estimate, QuadratureError> {
    if samples == 0 {
        return Err(QuadratureError::EmptySample);
    }
    let (center, radius) = match support {
        Some(s) => (s.center.clone(), s.radius),
        None => (vec![0.0; dim], 1.0),
    };
    let acc = integrate_uniform(sampler, STREAM_L1, ball_dims(dim), samples, |_, u| {
        let mut c = vec![0.0; dim];
        unit_ball_point(dim, u, &mut c);
        c.iter_mut().zip(&center).for_each(|(c, o)| *c = o + radius * *c);
        match BallPoint::new(c) {
            Ok(p) => Complex64::new(g(&p), 0.0),
            Err(_) => Complex64::new(0.0, 0.0),
        }
    });
    Ok(check_finite(acc)?.estimate_re().scale(radius.powi(dim as i32)))
}

/// One indicator bump `height · χ_{B(center, radius)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spike {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
}

/// Serializable description of a test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Zero,
    Constant {
        value: f64,
    },
    Spike(Spike),
    SumOfSpikes {
        spikes: Vec<Spike>,
    },
    /// `height · (1 - |x-c|²/r²)²` inside `B(c, r)`.
    SmoothBump {
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
    /// Radial, piecewise linear in `|x|` through `(radii[i], values[i])`, zero past the last radius.
    Table {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
    /// `χ_{B(c, ε)} / ν(B(c, ε))`, so `‖f‖₁ = 1`.
    Concentrating {
        center: Vec<f64>,
        epsilon: f64,
    },
    /// `w^k` or `w̄^k` on the disk.
    Monomial {
        degree: u32,
        #[serde(default)]
        conjugate: bool,
    },
}

impl FunctionSpec {
    /// Family parameter used to order scan members.
    pub fn parameter(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::Spike(s) => s.radius,
            Self::SumOfSpikes { spikes } => spikes.len() as f64,
            Self::SmoothBump { radius, .. } => *radius,
            Self::Table { radii, .. } => radii.last().copied().unwrap_or(0.0),
            Self::Concentrating { epsilon, .. } => *epsilon,
            Self::Monomial { degree, .. } => f64::from(*degree),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Constant { .. } => "constant",
            Self::Spike(_) => "spike",
            Self::SumOfSpikes { .. } => "sum-of-spikes",
            Self::SmoothBump { .. } => "smooth-bump",
            Self::Table { .. } => "table",
            Self::Concentrating { .. } => "concentrating",
            Self::Monomial { .. } => "monomial",
        }
    }

    /// Builds the function on 𝔹ⁿ. Norms without a closed form are estimated with `sampler`.
    pub fn build(&self, dim: usize, sampler: &SamplerConfig) -> Result<IntegrableFunction, FunctionError> {
        let check_center = |c: &[f64]| {
            if c.len() != dim {
                return Err(FunctionError::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) || dist_sq(c, &vec![0.0; dim]) >= 1.0 {
                return Err(FunctionError::Invalid(format!("center {c:?} must lie inside the ball")));
            }
            Ok(())
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(FunctionError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let label = format!("{}:{}", self.kind(), self.parameter());
        let f = match self {
            Self::Zero => IntegrableFunction::new(dim, 0.0, |_| Complex64::new(0.0, 0.0))?.with_sup_bound(0.0),
            Self::Constant { value } => {
                let v = *value;
                IntegrableFunction::new(dim, v.abs(), move |_| Complex64::new(v, 0.0))?.with_sup_bound(v.abs())
            }
            Self::Spike(s) => {
                check_center(&s.center)?;
                positive("spike radius", s.radius)?;
                spikes(dim, std::slice::from_ref(s), sampler)?
            }
            Self::SumOfSpikes { spikes: list } => {
                if list.is_empty() {
                    return Err(FunctionError::Invalid("sum-of-spikes needs at least one spike".into()));
                }
                for s in list {
                    check_center(&s.center)?;
                    positive("spike radius", s.radius)?;
                }
                spikes(dim, list, sampler)?
            }
            Self::SmoothBump { center, radius, height } => {
                check_center(center)?;
                positive("bump radius", *radius)?;
                let (c, r, h) = (center.clone(), *radius, *height);
                let value = move |x: &BallPoint| {
                    let s = dist_sq(x.coords(), &c) / (r * r);
                    Complex64::new(if s < 1.0 { h * (1.0 - s) * (1.0 - s) } else { 0.0 }, 0.0)
                };
                let support = Support {
                    center: center.clone(),
                    radius: r,
                };
                let inside = center.iter().map(|v| v * v).sum::<f64>().sqrt() + r <= 1.0;
                let f = if inside {
                    let n = dim as f64;
                    let l1 = h.abs() * r.powi(dim as i32) * n * (1.0 / n - 2.0 / (n + 2.0) + 1.0 / (n + 4.0));
                    IntegrableFunction::new(dim, l1, value)?.with_support(support)?
                } else {
                    IntegrableFunction::estimated(dim, value, sampler, L1_SAMPLES)?.with_support(support)?
                };
                f.with_sup_bound(h.abs())
            }
            Self::Table { radii, values } => table(dim, radii, values)?,
            Self::Concentrating { center, epsilon } => {
                check_center(center)?;
                positive("epsilon", *epsilon)?;
                let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm + epsilon > 1.0 {
                    return Err(FunctionError::Invalid(format!(
                        "B({center:?}, {epsilon}) must lie inside the ball"
                    )));
                }
                let (c, e) = (center.clone(), *epsilon);
                let height = e.powi(-(dim as i32));
                let value = move |x: &BallPoint| {
                    Complex64::new(if dist_sq(x.coords(), &c) < e * e { height } else { 0.0 }, 0.0)
                };
                IntegrableFunction::new(dim, 1.0, value)?
                    .with_support(Support {
                        center: center.clone(),
                        radius: e,
                    })?
                    .with_sup_bound(height)
            }
            Self::Monomial { degree, conjugate } => {
                if dim != 2 {
                    return Err(FunctionError::Invalid("monomials are defined on the disk only".into()));
                }
                let (k, conj) = (*degree as i32, *conjugate);
                let value = move |x: &BallPoint| {
                    let w = Complex64::new(x.coords()[0], x.coords()[1]);
                    let p = w.powi(k);
                    if conj {
                        p.conj()
                    } else {
                        p
                    }
                };
                IntegrableFunction::new(dim, 2.0 / (f64::from(*degree) + 2.0), value)?.with_sup_bound(1.0)
            }
        };
        Ok(f.with_label(label))
    }
}

fn spikes(dim: usize, list: &[Spike], sampler: &SamplerConfig) -> Result<IntegrableFunction, FunctionError> {
    let owned: Vec<Spike> = list.to_vec();
    let value = move |x: &BallPoint| {
        let v: f64 = owned
            .iter()
            .filter(|s| dist_sq(x.coords(), &s.center) < s.radius * s.radius)
            .map(|s| s.height)
            .sum();
        Complex64::new(v, 0.0)
    };
    let norm = |c: &[f64]| c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let inside = list.iter().all(|s| norm(&s.center) + s.radius <= 1.0);
    let disjoint = list.iter().enumerate().all(|(i, a)| {
        list[i + 1..]
            .iter()
            .all(|b| dist_sq(&a.center, &b.center).sqrt() >= a.radius + b.radius)
    });
    // bounding ball of all spikes, centered on the first
    let center = list[0].center.clone();
    let radius = list
        .iter()
        .map(|s| dist_sq(&s.center, &center).sqrt() + s.radius)
        .fold(0.0, f64::max);
    let support = Support { center, radius };
    let f = if inside && disjoint {
        let l1 = list.iter().map(|s| s.height.abs() * s.radius.powi(dim as i32)).sum();
        IntegrableFunction::new(dim, l1, value)?.with_support(support)?
    } else {
        IntegrableFunction::estimated(dim, value, sampler, L1_SAMPLES)?.with_support(support)?
    };
    let sup = if disjoint {
        list.iter().map(|s| s.height.abs()).fold(0.0, f64::max)
    } else {
        list.iter().map(|s| s.height.abs()).sum()
    };
    Ok(f.with_sup_bound(sup))
}

fn table(dim: usize, radii: &[f64], values: &[f64]) -> Result<IntegrableFunction, FunctionError> {
    if radii.is_empty() || radii.len() != values.len() {
        return Err(FunctionError::Invalid(
            "table needs matching, non-empty radii and values".into(),
        ));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] < 0.0 || radii[radii.len() - 1] > 1.0 {
        return Err(FunctionError::Invalid("table radii must increase within [0, 1]".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FunctionError::Invalid("table values must be finite".into()));
    }
    // ∫ |f| dν = ∫₀¹ |f(r)| n r^{n-1} dr, exact per linear piece once split at sign changes
    let (nodes, weights) = gauss_legendre_unit(dim.div_ceil(2) + 2);
    let n = dim as f64;
    let mut l1 = 0.0;
    for i in 0..radii.len() - 1 {
        let (a, b, fa, fb) = (radii[i], radii[i + 1], values[i], values[i + 1]);
        let mut cuts = vec![a, b];
        if fa * fb < 0.0 {
            cuts.insert(1, a + (b - a) * fa / (fa - fb));
        }
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for (x, wt) in nodes.iter().zip(&weights) {
                let r = lo + (hi - lo) * x;
                let f = fa + (fb - fa) * (r - a) / (b - a);
                l1 += wt * (hi - lo) * f.abs() * n * r.powi(dim as i32 - 1);
            }
        }
    }
    let (r, v) = (radii.to_vec(), values.to_vec());
    let value = move |x: &BallPoint| {
        let t = x.norm();
        let f = match r.iter().position(|&ri| ri > t) {
            None => {
                if t == r[r.len() - 1] {
                    v[v.len() - 1]
                } else {
                    0.0
                }
            }
            Some(0) => v[0],
            Some(j) => v[j - 1] + (v[j] - v[j - 1]) * (t - r[j - 1]) / (r[j] - r[j - 1]),
        };
        Complex64::new(f, 0.0)
    };
    let sup = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let f = IntegrableFunction::new(dim, l1, value)?.with_sup_bound(sup);
    let last = radii[radii.len() - 1];
    if last < 1.0 {
        f.with_support(Support {
            center: vec![0.0; dim],
            radius: last,
        })
    } else {
        Ok(f)
    }
}
