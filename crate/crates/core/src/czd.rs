//! Calderón–Zygmund decomposition of `f ∈ L¹(𝔹ⁿ, dν)` at height `t`.
//!
//! The stopping time starts at the virtual root `Q₀ = 𝔹ⁿ`, whose average is
//! `‖f‖₁ ≤ t`, and descends through the dyadic system. A cube stops as soon
//! as its estimated average of `|f|` exceeds `t` by more than `σ` standard
//! errors. Cube averages that straddle `t` are re-estimated with doubled
//! samples up to a cap and then treated as not stopping.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::{CubeId, DyadicError, DyadicSystem};
use crate::functions::{ball_mean, FunctionError, IntegrableFunction, Support};
use crate::geometry::{dist_sq, BallPoint};
use crate::quadrature::{mix64, sample_region, Estimate, QuadratureError, SamplerConfig};

const LABEL_MEASURE: u64 = 0x6E75_0000;
const LABEL_VALUE: u64 = 0x6676_0000;
const LABEL_CHECK_MEASURE: u64 = 0x636E_0000;
const LABEL_CHECK_VALUE: u64 = 0x6366_0000;
const STREAM_OMEGA: u64 = 0x6F6D_0000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CzdError {
    #[error("threshold t = {t} is below ‖f‖₁ = {l1}")]
    ThresholdBelowNorm { t: f64, l1: f64 },
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("function has dimension {found}, dyadic system has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("decomposition was computed from a different function")]
    FunctionMismatch,
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Tuning of the stopping-time estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeOptions {
    /// Initial samples per cube.
    pub samples: usize,
    /// Cap for sample doubling on undecided cubes.
    pub max_samples: usize,
    /// Width of the decision band in standard errors.
    pub sigma: f64,
    pub sampler: SamplerConfig,
    /// Deepest level visited; `None` uses the system's `max_level`.
    pub max_level: Option<u32>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            samples: 4096,
            max_samples: 16_384,
            sigma: 3.0,
            sampler: SamplerConfig::pseudo_random(0xC2D),
            max_level: None,
        }
    }
}

/// Integrals of `f` over one cube.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubeStats {
    pub id: CubeId,
    pub center: Vec<f64>,
    /// `ν(Q)`.
    pub measure: Estimate,
    /// `∫_Q |f| dν`.
    pub abs_integral: Estimate,
    /// `∫_Q f dν`.
    pub integral: Estimate<Complex64>,
    /// `∫_Q |f|² dν`.
    pub sq_integral: Estimate,
    /// `(1/ν(Q)) ∫_Q |f| dν`.
    pub average: Estimate,
    pub samples: usize,
}

impl CubeStats {
    /// `(1/ν(Q)) ∫_Q f dν`.
    pub fn mean(&self) -> Estimate<Complex64> {
        let nu = self.measure.value;
        if nu <= 0.0 {
            return Estimate::new(Complex64::new(0.0, 0.0), f64::INFINITY, self.samples);
        }
        let m = self.integral.value / nu;
        let se = self.integral.stderr.hypot(m.norm() * self.measure.stderr) / nu;
        Estimate::new(m, se, self.samples)
    }
}

/// A maximal cube whose average exceeds `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingCube {
    pub stats: CubeStats,
    /// `m_j`, the value of `g` on the cube.
    pub mean: Estimate<Complex64>,
    pub parent: CubeId,
    pub parent_measure: Estimate,
    pub parent_average: Estimate,
}

/// Cubes left undecided at the deepest level.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Truncation {
    pub leaves: usize,
    /// `∫ |f| dν` over the leaves.
    pub mass: Estimate,
    /// `ν` of the leaves.
    pub measure: Estimate,
}

/// Result of [`decompose`].
#[derive(Clone, Debug)]
pub struct CZDecomposition {
    pub t: f64,
    pub l1_norm: Estimate,
    pub stopping: Vec<StoppingCube>,
    /// `ν(Ω) = Σ ν(Q_j)`.
    pub omega_measure: Estimate,
    /// Largest `ν(parent)/ν(child)` over the explored pairs, root included.
    pub c1_used: f64,
    pub c1_pair: (CubeId, CubeId),
    pub truncation: Truncation,
    /// Cubes whose statistics were estimated.
    pub explored: usize,
    /// Cubes still undecided after sample doubling.
    pub ambiguous: usize,
    pub max_level: u32,
    pub options: DecomposeOptions,
    function: IntegrableFunction,
    lookup: Arc<Lookup>,
}

#[derive(Debug)]
struct Lookup {
    system: Arc<DyadicSystem>,
    stops: HashMap<CubeId, usize>,
    means: Vec<Complex64>,
    max_level: u32,
}

impl Lookup {
    fn stop_of(&self, x: &BallPoint) -> Option<usize> {
        if self.stops.is_empty() {
            return None;
        }
        self.system
            .realized_path(x, self.max_level)
            .iter()
            .find_map(|id| self.stops.get(id).copied())
    }
}

fn ratio(num: Estimate, den: Estimate) -> Estimate {
    if den.value <= 0.0 {
        let v = if num.value == 0.0 { 0.0 } else { f64::INFINITY };
        return Estimate::new(v, f64::INFINITY, num.samples);
    }
    let r = num.value / den.value;
    Estimate::new(r, num.stderr.hypot(r * den.stderr) / den.value, num.samples)
}

fn sum(items: impl Iterator<Item = Estimate>) -> Estimate {
    let (mut v, mut var, mut n) = (0.0, 0.0, 0);
    for e in items {
        v += e.value;
        var += e.stderr * e.stderr;
        n += e.samples;
    }
    Estimate::new(v, var.sqrt(), n)
}

fn zero() -> Estimate {
    Estimate::exact(0.0)
}

fn cube_stats(
    sys: &DyadicSystem,
    f: &IntegrableFunction,
    id: CubeId,
    samples: usize,
    sampler: &SamplerConfig,
    labels: (u64, u64),
) -> Result<CubeStats, CzdError> {
    let info = sys.cube_info(id)?;
    let measure = sys
        .integrate_cube(id, None, samples, sampler, labels.0, 1, |_, out| {
            out[0] = Complex64::new(1.0, 0.0)
        })?
        .values[0]
        .re();
    let support = f.support();
    let mut stats = CubeStats {
        id,
        center: info.center.coords().to_vec(),
        measure,
        abs_integral: zero(),
        integral: Estimate::exact(Complex64::new(0.0, 0.0)),
        sq_integral: zero(),
        average: zero(),
        samples,
    };
    if support.is_some_and(|s| !s.meets(info.center.coords(), info.sampling_radius)) {
        return Ok(stats);
    }
    let ball = support
        .filter(|s| s.radius < info.sampling_radius)
        .map(|s| (s.center.as_slice(), s.radius));
    let r = sys.integrate_cube(id, ball, samples, sampler, labels.1, 3, |x, out| {
        let v = f.eval(x);
        out[0] = Complex64::new(v.norm(), 0.0);
        out[1] = v;
        out[2] = Complex64::new(v.norm_sqr(), 0.0);
    })?;
    stats.abs_integral = r.values[0].re();
    stats.integral = r.values[1];
    stats.sq_integral = r.values[2].re();
    stats.average = ratio(stats.abs_integral, stats.measure);
    Ok(stats)
}

enum Decision {
    Stop,
    Continue,
    /// Nothing below can stop.
    Settled,
}

/// Runs the stopping time for `f` at height `t` over `system`.
pub fn decompose(
    f: &IntegrableFunction,
    t: f64,
    system: &Arc<DyadicSystem>,
    opts: &DecomposeOptions,
) -> Result<CZDecomposition, CzdError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(CzdError::InvalidThreshold(t));
    }
    if f.dim() != system.dim() {
        return Err(CzdError::DimensionMismatch {
            expected: system.dim(),
            found: f.dim(),
        });
    }
    let l1 = f.l1_norm();
    // closed-form norms such as 25 · 0.2² land a few ulps away from the exact value
    if t < l1.value * (1.0 - 8.0 * f64::EPSILON) {
        return Err(CzdError::ThresholdBelowNorm { t, l1: l1.value });
    }
    let cfg = system.config();
    let max_level = opts.max_level.unwrap_or(cfg.max_level).clamp(1, cfg.max_level);
    let samples = opts.samples.max(16);
    let cap = opts.max_samples.max(samples);
    let sigma = opts.sigma;

    let root = CubeStats {
        id: CubeId::ROOT,
        center: vec![0.0; cfg.dim],
        measure: Estimate::exact(1.0),
        abs_integral: l1,
        integral: Estimate::exact(Complex64::new(0.0, 0.0)),
        sq_integral: zero(),
        average: l1,
        samples: 0,
    };
    let mut stopping = Vec::new();
    let mut leaves = Vec::new();
    let mut c1 = (1.0, (CubeId::ROOT, CubeId::ROOT));
    let mut explored = 0;
    let mut ambiguous = 0;
    let nothing_stops = f.sup_bound().is_some_and(|s| s <= t) || l1.value == 0.0;
    let mut frontier = if nothing_stops { Vec::new() } else { vec![root] };

    for level in 1..=max_level {
        let mut jobs = Vec::new();
        for (p, parent) in frontier.iter().enumerate() {
            for child in system.refine(parent.id)? {
                jobs.push((p, child));
            }
        }
        let results: Vec<(CubeStats, Decision, bool)> = jobs
            .par_iter()
            .map(|&(_, id)| {
                let mut n = samples;
                loop {
                    let s = cube_stats(system, f, id, n, &opts.sampler, (LABEL_MEASURE, LABEL_VALUE))?;
                    if s.abs_integral.value == 0.0 && s.abs_integral.stderr == 0.0 {
                        return Ok((s, Decision::Settled, false));
                    }
                    let avg = s.average;
                    if avg.value - sigma * avg.stderr > t {
                        return Ok((s, Decision::Stop, false));
                    }
                    if avg.value + sigma * avg.stderr <= t {
                        return Ok((s, Decision::Continue, false));
                    }
                    if n * 2 > cap {
                        return Ok((s, Decision::Continue, true));
                    }
                    n *= 2;
                }
            })
            .collect::<Result<_, CzdError>>()?;

        let mut next = Vec::new();
        for ((p, _), (stats, decision, undecided)) in jobs.iter().zip(results) {
            let parent = &frontier[*p];
            explored += 1;
            ambiguous += usize::from(undecided);
            if stats.measure.value > 0.0 {
                let r = parent.measure.value / stats.measure.value;
                if r > c1.0 {
                    c1 = (r, (parent.id, stats.id));
                }
            }
            match decision {
                Decision::Stop => stopping.push(StoppingCube {
                    mean: stats.mean(),
                    parent: parent.id,
                    parent_measure: parent.measure,
                    parent_average: parent.average,
                    stats,
                }),
                Decision::Continue if level < max_level => next.push(stats),
                Decision::Continue => leaves.push(stats),
                Decision::Settled => {}
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    let truncation = Truncation {
        leaves: leaves.len(),
        mass: sum(leaves.iter().map(|s| s.abs_integral)),
        measure: sum(leaves.iter().map(|s| s.measure)),
    };
    let omega_measure = sum(stopping.iter().map(|s| s.stats.measure));
    let lookup = Lookup {
        system: system.clone(),
        stops: stopping.iter().enumerate().map(|(j, s)| (s.stats.id, j)).collect(),
        means: stopping.iter().map(|s| s.mean.value).collect(),
        max_level,
    };
    Ok(CZDecomposition {
        t,
        l1_norm: l1,
        stopping,
        omega_measure,
        c1_used: c1.0,
        c1_pair: c1.1,
        truncation,
        explored,
        ambiguous,
        max_level,
        options: opts.clone(),
        function: f.clone(),
        lookup: Arc::new(lookup),
    })
}

impl CZDecomposition {
    pub fn system(&self) -> &Arc<DyadicSystem> {
        &self.lookup.system
    }

    pub fn function(&self) -> &IntegrableFunction {
        &self.function
    }

    /// Index of the stopping cube containing `x`, if `x ∈ Ω`.
    pub fn stopping_index(&self, x: &BallPoint) -> Option<usize> {
        self.lookup.stop_of(x)
    }

    pub fn in_omega(&self, x: &BallPoint) -> bool {
        self.stopping_index(x).is_some()
    }

    /// `g(x)`: `f(x)` on `F`, the cube mean on each stopping cube.
    pub fn good_value(&self, x: &BallPoint) -> Complex64 {
        match self.stopping_index(x) {
            Some(j) => self.lookup.means[j],
            None => self.function.eval(x),
        }
    }

    /// `‖g‖₁ = ∫_F |f| + Σ |m_j| ν(Q_j)`.
    fn good_l1(&self) -> Estimate {
        let inside = sum(self.stopping.iter().map(|s| s.stats.abs_integral));
        let means = sum(self.stopping.iter().map(|s| {
            let m = s.mean.value.norm();
            Estimate::new(
                m * s.stats.measure.value,
                (s.mean.stderr * s.stats.measure.value).hypot(m * s.stats.measure.stderr),
                0,
            )
        }));
        Estimate::new(
            (self.l1_norm.value - inside.value).max(0.0) + means.value,
            self.l1_norm.stderr.hypot(inside.stderr).hypot(means.stderr),
            self.l1_norm.samples,
        )
    }

    /// A ball containing the supports of `f` and of every stopping cube.
    fn good_support(&self) -> Option<Support> {
        let s = self.function.support()?;
        let sys = self.system();
        let mut radius = s.radius;
        for c in &self.stopping {
            let r = sys.cube_info(c.stats.id).map(|i| i.sampling_radius).unwrap_or(2.0);
            radius = radius.max(dist_sq(&s.center, &c.stats.center).sqrt() + r);
        }
        Some(Support {
            center: s.center.clone(),
            radius,
        })
    }
}

/// `b_j = (f − m_j) χ_{Q_j}`.
#[derive(Clone)]
pub struct BadPart {
    pub index: usize,
    pub id: CubeId,
    pub mean: Complex64,
    function: IntegrableFunction,
    lookup: Arc<Lookup>,
}

impl std::fmt::Debug for BadPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BadPart")
            .field("id", &self.id)
            .field("mean", &self.mean)
            .finish()
    }
}

impl BadPart {
    pub fn eval(&self, x: &BallPoint) -> Complex64 {
        if self.lookup.system.contains(self.id, x).unwrap_or(false) {
            self.function.eval(x) - self.mean
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// `g` and the bad parts `b_j`, with `f = g + Σ b_j`.
#[derive(Clone, Debug)]
pub struct GoodBadSplit {
    pub good: IntegrableFunction,
    pub bad: Vec<BadPart>,
}

impl GoodBadSplit {
    /// `Σ_j b_j(x)`; at most one term is nonzero.
    pub fn bad_value(&self, x: &BallPoint) -> Complex64 {
        self.bad.iter().map(|b| b.eval(x)).sum()
    }
}

/// Splits `f` into `g` and the `b_j` of `dec`.
pub fn good_bad_split(dec: &CZDecomposition, f: &IntegrableFunction) -> Result<GoodBadSplit, CzdError> {
    if !dec.function.same_function(f) {
        return Err(CzdError::FunctionMismatch);
    }
    let bad = dec
        .stopping
        .iter()
        .enumerate()
        .map(|(j, s)| BadPart {
            index: j,
            id: s.stats.id,
            mean: s.mean.value,
            function: f.clone(),
            lookup: dec.lookup.clone(),
        })
        .collect();
    if dec.stopping.is_empty() {
        return Ok(GoodBadSplit { good: f.clone(), bad });
    }
    let lookup = dec.lookup.clone();
    let fv = f.clone();
    let mut good = IntegrableFunction::new(f.dim(), 0.0, move |x| match lookup.stop_of(x) {
        Some(j) => lookup.means[j],
        None => fv.eval(x),
    })?
    .with_l1(dec.good_l1())
    .with_label(format!("good({})", f.label()));
    if let Some(s) = dec.good_support() {
        good = good.with_support(s)?;
    }
    if let Some(sup) = f.sup_bound() {
        good = good.with_sup_bound(sup);
    }
    Ok(GoodBadSplit { good, bad })
}

/// Outcome of one verification over many items.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClauseCheck {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `allowed − observed` over the items; negative on failure.
    pub worst_margin: f64,
    pub detail: String,
}

impl ClauseCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn from_margins(name: &str, items: impl Iterator<Item = (f64, String)>) -> Self {
        let mut check = Self {
            name: name.to_string(),
            checked: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            detail: String::new(),
        };
        for (margin, what) in items {
            check.checked += 1;
            if margin < check.worst_margin {
                check.worst_margin = margin;
            }
            if !(margin >= 0.0) {
                check.violations += 1;
                if check.detail.is_empty() {
                    check.detail = what;
                }
            }
        }
        check
    }
}

/// `t < avg ≤ Ĉ₁ t` for every stopping cube, within `k` standard errors.
pub fn clause_iii_check(dec: &CZDecomposition, k: f64) -> ClauseCheck {
    let (t, c1) = (dec.t, dec.c1_used);
    ClauseCheck::from_margins(
        "clause-iii",
        dec.stopping.iter().map(|s| {
            let a = s.stats.average;
            let lower = a.value + k * a.stderr - t;
            let upper = c1 * t - (a.value - k * a.stderr);
            (
                lower.min(upper),
                format!("{}: average {a:?} outside ({t}, {}]", s.stats.id, c1 * t),
            )
        }),
    )
}

/// No stopping cube has a stopping ancestor, and every parent average is `≤ t`.
pub fn maximality_check(dec: &CZDecomposition, k: f64) -> ClauseCheck {
    let sys = dec.system();
    let stops = &dec.lookup.stops;
    ClauseCheck::from_margins(
        "maximality",
        dec.stopping.iter().map(|s| {
            let mut cur = Some(s.parent);
            while let Some(id) = cur.filter(|id| id.level > 0) {
                if stops.contains_key(&id) {
                    return (-1.0, format!("{} lies inside stopping cube {id}", s.stats.id));
                }
                cur = sys.parent(id).ok().flatten();
            }
            let a = s.parent_average;
            (
                dec.t - (a.value - k * a.stderr),
                format!("parent {} of {} has average {a:?} > {}", s.parent, s.stats.id, dec.t),
            )
        }),
    )
}

/// `ν(Ω) ≤ ‖f‖₁ / t` within `k` combined standard errors.
pub fn mass_check(dec: &CZDecomposition, k: f64) -> ClauseCheck {
    let om = dec.omega_measure;
    let bound = dec.l1_norm.value / dec.t;
    let se = om.stderr.hypot(dec.l1_norm.stderr / dec.t);
    ClauseCheck::from_margins(
        "mass",
        std::iter::once((
            bound + k * se - om.value,
            format!("ν(Ω) = {om:?} exceeds ‖f‖₁/t = {bound}"),
        )),
    )
}

/// `ν({x ∈ F : |f(x)| > t})`, which must fit inside the truncated leaves.
pub fn clause_ii_check(
    dec: &CZDecomposition,
    sampler: &SamplerConfig,
    samples: usize,
    k: f64,
) -> Result<ClauseCheck, CzdError> {
    let f = &dec.function;
    let t = dec.t;
    let excess = ball_mean(f.dim(), f.support(), sampler, samples, |x| {
        if f.eval(x).norm() > t && !dec.in_omega(x) {
            1.0
        } else {
            0.0
        }
    })?;
    let allowed = dec.truncation.measure;
    let se = excess.stderr.hypot(allowed.stderr);
    let mut check = ClauseCheck::from_margins(
        "clause-ii",
        std::iter::once((
            allowed.value + k * se - excess.value,
            format!("ν(|f| > t on F) = {excess:?} exceeds the truncated measure {allowed:?}"),
        )),
    );
    check.checked = samples;
    Ok(check)
}

/// Result of [`mean_zero_check`] for one cube.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanZeroRow {
    pub id: CubeId,
    /// Independent estimate of `∫_{Q_j} b_j dν`.
    pub integral: Estimate<Complex64>,
    /// Combined standard error, including the uncertainty of `m_j`.
    pub combined_stderr: f64,
}

/// Re-estimates `∫_{Q_j} b_j dν` on samples independent of the decomposition.
pub fn mean_zero_check(
    dec: &CZDecomposition,
    samples: usize,
    k: f64,
) -> Result<(ClauseCheck, Vec<MeanZeroRow>), CzdError> {
    let sys = dec.system();
    let f = &dec.function;
    let sampler = dec.options.sampler.derive(1);
    let rows: Vec<MeanZeroRow> = dec
        .stopping
        .par_iter()
        .map(|s| {
            let id = s.stats.id;
            let m = s.mean.value;
            let info = sys.cube_info(id)?;
            let support = f.support().filter(|sp| sp.radius < info.sampling_radius);
            let integral = match support {
                Some(sp) => {
                    let fi = sys.integrate_cube(
                        id,
                        Some((&sp.center, sp.radius)),
                        samples,
                        &sampler,
                        LABEL_CHECK_VALUE,
                        1,
                        |x, out| out[0] = f.eval(x),
                    )?;
                    let nu = sys.integrate_cube(id, None, samples, &sampler, LABEL_CHECK_MEASURE, 1, |_, out| {
                        out[0] = Complex64::new(1.0, 0.0)
                    })?;
                    let (fi, nu) = (fi.values[0], nu.values[0]);
                    Estimate::new(fi.value - m * nu.value, fi.stderr.hypot(m.norm() * nu.stderr), samples)
                }
                None => {
                    sys.integrate_cube(id, None, samples, &sampler, LABEL_CHECK_VALUE, 1, |x, out| {
                        out[0] = f.eval(x) - m
                    })?
                    .values[0]
                }
            };
            Ok(MeanZeroRow {
                id,
                integral,
                combined_stderr: integral.stderr.hypot(s.stats.measure.value * s.mean.stderr),
            })
        })
        .collect::<Result<_, CzdError>>()?;
    let check = ClauseCheck::from_margins(
        "mean-zero",
        rows.iter().map(|r| {
            (
                k * r.combined_stderr - r.integral.value.norm(),
                format!(
                    "{}: ∫ b_j = {:?} (stderr {})",
                    r.id, r.integral.value, r.combined_stderr
                ),
            )
        }),
    );
    Ok((check, rows))
}

/// `f(x) = g(x) + Σ_j b_j(x)` at every point, up to one rounding of `f − m_j`.
pub fn reconstruction_check(split: &GoodBadSplit, f: &IntegrableFunction, points: &[BallPoint]) -> ClauseCheck {
    ClauseCheck::from_margins(
        "reconstruction",
        points
            .par_iter()
            .map(|x| {
                let fx = f.eval(x);
                let g = split.good.eval(x);
                let diff = (fx - (g + split.bad_value(x))).norm();
                let tol = 4.0 * f64::EPSILON * (fx.norm() + g.norm());
                (tol - diff, format!("{x:?}: f − (g + b) = {diff}"))
            })
            .collect::<Vec<_>>()
            .into_iter(),
    )
}

/// Result of [`good_l2_bound_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct L2Bound {
    /// `‖g‖₂²`.
    pub lhs: Estimate,
    /// `(Ĉ₁ + 1) t ‖f‖₁`.
    pub rhs: f64,
    pub pass: bool,
}

/// `‖g‖₂² ≤ (c₁ + 1) t ‖f‖₁`, the left side by quadrature over the support of `g`.
pub fn good_l2_bound_check(
    g: &IntegrableFunction,
    f_l1: f64,
    t: f64,
    c1: f64,
    sampler: &SamplerConfig,
    samples: usize,
) -> Result<L2Bound, CzdError> {
    let lhs = ball_mean(g.dim(), g.support(), sampler, samples, |x| g.eval(x).norm_sqr())?;
    let rhs = (c1 + 1.0) * t * f_l1;
    Ok(L2Bound {
        lhs,
        rhs,
        pass: lhs.value <= rhs + 3.0 * lhs.stderr,
    })
}

/// `Ω′ = ⋃_j B(x_j, 2κ₁η^{k_j})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmegaPrime {
    pub balls: Vec<Support>,
    /// `ν(Ω′)`.
    pub measure: Estimate,
    /// `t ν(Ω′) / ‖f‖₁`.
    pub c3_empirical: f64,
    /// `max_j ν(B_j) / ν(Q_j)` with `ν(B_j)` bounded by `(2κ₁η^{k_j})ⁿ`.
    pub c3_geometric: f64,
}

impl OmegaPrime {
    pub fn contains(&self, x: &BallPoint) -> bool {
        self.balls
            .iter()
            .any(|b| dist_sq(&b.center, x.coords()) < b.radius * b.radius)
    }
}

/// Builds `Ω′` and estimates its measure as `Σ_j ν(B_j ∖ ⋃_{i<j} B_i)`.
pub fn omega_prime(dec: &CZDecomposition, sampler: &SamplerConfig, samples: usize) -> OmegaPrime {
    let cfg = dec.system().config();
    let n = cfg.dim as i32;
    let balls: Vec<Support> = dec
        .stopping
        .iter()
        .map(|s| Support {
            center: s.stats.center.clone(),
            radius: 2.0 * cfg.outer_radius(s.stats.id.level),
        })
        .collect();
    let c3_geometric = dec
        .stopping
        .iter()
        .zip(&balls)
        .map(|(s, b)| b.radius.min(2.0).powi(n) / s.stats.measure.value)
        .fold(0.0, f64::max);
    let parts: Vec<Estimate> = balls
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            // sample whichever of B_j and the unit ball is smaller
            let (center, radius) = if b.radius >= 1.0 {
                (vec![0.0; cfg.dim], 1.0)
            } else {
                (b.center.clone(), b.radius)
            };
            let pts = sample_region(sampler, STREAM_OMEGA ^ mix64(j as u64), &center, radius, 0, samples);
            let hits = pts
                .iter()
                .filter(|(_, p)| {
                    dist_sq(&b.center, p.coords()) < b.radius * b.radius
                        && balls[..j]
                            .iter()
                            .all(|o| dist_sq(&o.center, p.coords()) >= o.radius * o.radius)
                })
                .count() as f64;
            let q = hits / samples as f64;
            let vol = radius.powi(n);
            Estimate::new(vol * q, vol * (q * (1.0 - q) / samples as f64).sqrt(), samples)
        })
        .collect();
    let measure = sum(parts.into_iter());
    let l1 = dec.l1_norm.value;
    OmegaPrime {
        balls,
        measure,
        c3_empirical: if l1 > 0.0 { dec.t * measure.value / l1 } else { 0.0 },
        c3_geometric,
    }
}
