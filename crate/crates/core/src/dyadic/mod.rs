//! A lazily realized dyadic system on (𝔹ⁿ, |·|) with parameters `(η, κ₀, κ₁)`.
//!
//! Level 0 is the whole ball. The children of a cube are a greedy
//! `η^{k+1}`-separated net drawn from a low-discrepancy sample of the cube,
//! and the first child always reuses the parent's center. A point belongs to
//! the level-`k` cube reached by descending from the root and picking the
//! closest child center at every step (smallest index on ties), so every cube
//! is the intersection of 𝔹ⁿ with finitely many half-spaces.
//!
//! Candidates for child centers must lie at least `max(κ₀, ½)·η^{k+1}` inside
//! every ancestor half-space. This makes the centers of each level globally
//! `η^{k+1}`-separated and puts `B(x_{k,i}, κ₀ηᵏ) ∩ 𝔹ⁿ` inside `Q_{k,i}`.
//! The outer radius is only checked empirically (see [`run_suites`]).

mod checks;
mod grid;
mod snapshot;

use std::fmt;
use std::sync::{RwLock, RwLockReadGuard};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dist_sq, BallPoint, GeometryError};
use num_complex::Complex64;

use crate::quadrature::{
    check_finite, mix64, sample_ball_stream, sample_region, Accum, Estimate, QuadratureError, SamplerConfig,
};

pub use checks::{check_points, points_in_cubes, realize_paths, run_suites, separation_suite, SuiteReport};
use grid::Grid;

/// Children lists longer than this get a spatial grid.
const GRID_THRESHOLD: usize = 32;
/// Upper bound on candidates drawn for one refinement.
const MAX_CANDIDATES: usize = 4_000_000;
/// Cap on the level-1 covering verification sample.
const MAX_COVER_CHECK: usize = 200_000;

const STREAM_NET: u64 = 0x6E65_7400;
const STREAM_COVER: u64 = 0x636F_7600;
const STREAM_MEASURE: u64 = 0x6D65_6100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DyadicError {
    #[error("invalid dyadic configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "net_resolution too low: a sample point lies {radius:.6} from every level-1 center (allowed {allowed:.6})"
    )]
    Uncovered { radius: f64, allowed: f64 },
    #[error("level {level} exceeds max_level {max_level}")]
    DepthExceeded { level: u32, max_level: u32 },
    #[error("cube {0} is not realized")]
    UnknownCube(CubeId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("estimation failed on cube {0}: {1}")]
    Estimation(CubeId, QuadratureError),
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicConfig {
    pub dim: usize,
    pub eta: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub max_level: u32,
    /// Candidate points per child-cell volume `η^{n(k+1)}`.
    pub net_resolution: usize,
    pub seed: u64,
}

impl DyadicConfig {
    /// `(η, κ₀, κ₁) = (1/2, 1/12, 4)`, depth 6.
    pub fn practical(dim: usize) -> Self {
        Self {
            dim,
            eta: 0.5,
            kappa0: 1.0 / 12.0,
            kappa1: 4.0,
            max_level: 6,
            net_resolution: 32,
            seed: 1,
        }
    }

    /// `(η, κ₀, κ₁) = (1/96, 1/12, 4)`, depth 2.
    pub fn reference(dim: usize) -> Self {
        Self {
            dim,
            eta: 1.0 / 96.0,
            kappa0: 1.0 / 12.0,
            kappa1: 4.0,
            max_level: 2,
            net_resolution: 8,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), DyadicError> {
        let bad = |m: String| Err(DyadicError::InvalidConfig(m));
        if !(2..=5).contains(&self.dim) {
            return bad(format!("dimension {} outside 2..=5", self.dim));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta = {} must lie in (0, 1)", self.eta));
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) || !(self.kappa1 > 0.0 && self.kappa1.is_finite()) {
            return bad("kappa0 and kappa1 must be positive".into());
        }
        if self.kappa0 * self.eta > self.kappa1 {
            return bad(format!(
                "kappa0 * eta = {} exceeds kappa1 = {}",
                self.kappa0 * self.eta,
                self.kappa1
            ));
        }
        if self.max_level == 0 {
            return bad("max_level must be at least 1".into());
        }
        if self.net_resolution == 0 {
            return bad("net_resolution must be positive".into());
        }
        Ok(())
    }

    /// `ηᵏ`, the separation of level-`k` centers.
    pub fn spacing(&self, level: u32) -> f64 {
        self.eta.powi(level as i32)
    }

    pub fn inner_radius(&self, level: u32) -> f64 {
        self.kappa0 * self.spacing(level)
    }

    pub fn outer_radius(&self, level: u32) -> f64 {
        self.kappa1 * self.spacing(level)
    }

    /// Required depth of a level-`k` center inside its ancestors' half-spaces.
    fn depth_threshold(&self, level: u32) -> f64 {
        self.kappa0.max(0.5) * self.spacing(level)
    }
}

/// `Q_{k,i}`: level `k ≥ 0`, 1-based index `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeId {
    pub level: u32,
    pub index: u32,
}

impl CubeId {
    pub const ROOT: CubeId = CubeId { level: 0, index: 1 };

    pub fn new(level: u32, index: u32) -> Self {
        Self { level, index }
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.level, self.index)
    }
}

#[derive(Clone, Debug)]
struct Children {
    ids: Vec<u32>,
    grid: Option<Grid>,
}

#[derive(Clone, Debug)]
struct Cube {
    center: BallPoint,
    /// Index of the parent at the previous level; 0 for the root.
    parent: u32,
    /// Largest distance from the center of a net candidate assigned to this cube.
    observed_radius: f64,
    children: Option<Children>,
}

/// Read-only view of one realized cube.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeInfo {
    pub id: CubeId,
    pub center: BallPoint,
    pub parent: Option<CubeId>,
    pub observed_radius: f64,
    /// Radius of the ball sampled when refining or measuring the cube.
    pub sampling_radius: f64,
    pub children: Option<Vec<CubeId>>,
}

/// Result of [`DyadicSystem::cube_measure`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub hits: usize,
    pub warning: Option<String>,
}

/// Result of [`DyadicSystem::integrate_cube`].
#[derive(Clone, Debug, PartialEq)]
pub struct CubeIntegral {
    pub values: Vec<Estimate<Complex64>>,
    /// Sample points that fell in the cube.
    pub hits: usize,
    pub samples: usize,
    /// `ν` of the sampled ball, ignoring the boundary of 𝔹ⁿ.
    pub ball_measure: f64,
}

/// Result of [`DyadicSystem::child_ratio_constant`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    /// Empirical `Ĉ₁ = max ν(parent) / ν(child)`.
    pub c1: f64,
    pub stderr: f64,
    pub pairs: usize,
    pub worst_parent: CubeId,
    pub worst_child: CubeId,
    pub samples_per_cube: usize,
    pub warnings: Vec<String>,
}

struct Inner {
    cfg: DyadicConfig,
    levels: Vec<Vec<Cube>>,
}

fn cube_stream(level: u32, center: &BallPoint) -> u64 {
    center
        .coords()
        .iter()
        .fold(mix64(u64::from(level)), |h, c| mix64(h ^ c.to_bits()))
}

impl Inner {
    fn new(cfg: DyadicConfig) -> Self {
        let root = Cube {
            center: BallPoint::origin(cfg.dim),
            parent: 0,
            observed_radius: 1.0,
            children: None,
        };
        Self {
            cfg,
            levels: vec![vec![root]],
        }
    }

    fn cube(&self, id: CubeId) -> Result<&Cube, DyadicError> {
        (id.index >= 1)
            .then(|| self.levels.get(id.level as usize)?.get(id.index as usize - 1))
            .flatten()
            .ok_or(DyadicError::UnknownCube(id))
    }

    fn center_of(&self, level: u32, index: u32) -> &[f64] {
        self.levels[level as usize][index as usize - 1].center.coords()
    }

    fn sampling_radius(&self, id: CubeId, cube: &Cube) -> f64 {
        if id.level == 0 {
            return 1.0;
        }
        let s = self.cfg.spacing(id.level);
        (1.25 * cube.observed_radius + 1.5 * s).min(self.cfg.kappa1 * s)
    }

    /// Closest child of `cube` (at `level`) to `x`; `None` if unrealized.
    fn nearest_child(&self, level: u32, cube: &Cube, x: &[f64]) -> Option<u32> {
        let ch = cube.children.as_ref()?;
        let next = level + 1;
        if let Some(grid) = &ch.grid {
            return grid.nearest(x, |id| self.center_of(next, id)).map(|(id, _)| id);
        }
        Some(self.nearest_linear(next, &ch.ids, x))
    }

    fn nearest_linear(&self, level: u32, ids: &[u32], x: &[f64]) -> u32 {
        let mut best = (ids[0], f64::INFINITY);
        for &id in ids {
            let d = dist_sq(self.center_of(level, id), x);
            if d < best.1 {
                best = (id, d);
            }
        }
        best.0
    }

    /// Descends to level `k`; returns the first unrealized cube on the way as `Err`.
    fn descend(&self, x: &[f64], k: u32) -> Result<CubeId, CubeId> {
        let mut cur = 1;
        for level in 0..k {
            let cube = &self.levels[level as usize][cur as usize - 1];
            cur = self.nearest_child(level, cube, x).ok_or(CubeId::new(level, cur))?;
        }
        Ok(CubeId::new(k, cur))
    }

    /// Realized cubes containing `x` from the root down to level `k` at most.
    fn path_of(&self, x: &[f64], k: u32) -> Vec<CubeId> {
        let mut path = vec![CubeId::ROOT];
        let mut cur = 1;
        for level in 0..k {
            let cube = &self.levels[level as usize][cur as usize - 1];
            match self.nearest_child(level, cube, x) {
                Some(next) => cur = next,
                None => break,
            }
            path.push(CubeId::new(level + 1, cur));
        }
        path
    }

    /// Same as [`Inner::descend`] with linear scans only.
    fn descend_linear(&self, x: &[f64], k: u32) -> Option<CubeId> {
        let mut cur = 1;
        for level in 0..k {
            let cube = &self.levels[level as usize][cur as usize - 1];
            cur = self.nearest_linear(level + 1, &cube.children.as_ref()?.ids, x);
        }
        Some(CubeId::new(k, cur))
    }

    /// Indices of `id` and its ancestors, root first.
    fn ancestry(&self, id: CubeId) -> Vec<u32> {
        let mut path = vec![id.index];
        let mut cur = id;
        while cur.level > 0 {
            let p = self.levels[cur.level as usize][cur.index as usize - 1].parent;
            cur = CubeId::new(cur.level - 1, p);
            path.push(p);
        }
        path.reverse();
        path
    }

    fn contains_with(&self, path: &[u32], x: &[f64]) -> bool {
        for level in 1..path.len() {
            let parent = &self.levels[level - 1][path[level - 1] as usize - 1];
            if self.nearest_child(level as u32 - 1, parent, x) != Some(path[level]) {
                return false;
            }
        }
        true
    }

    fn contains(&self, id: CubeId, x: &[f64]) -> bool {
        self.contains_with(&self.ancestry(id), x)
    }

    /// Realizes the children of `id`; no-op when already realized.
    fn realize(&mut self, id: CubeId) -> Result<(), DyadicError> {
        let cfg = self.cfg.clone();
        if id.level >= cfg.max_level {
            return Err(DyadicError::DepthExceeded {
                level: id.level + 1,
                max_level: cfg.max_level,
            });
        }
        let cube = self.cube(id)?;
        if cube.children.is_some() {
            return Ok(());
        }
        let n = cfg.dim;
        let next = id.level + 1;
        let s = cfg.spacing(next);
        let threshold = cfg.depth_threshold(next);
        let center = cube.center.clone();
        let radius = self.sampling_radius(id, cube);
        let path = self.ancestry(id);

        let wanted = (cfg.net_resolution as f64 * (radius / s).powi(n as i32)).ceil();
        let count = (wanted as usize).clamp(cfg.net_resolution, MAX_CANDIDATES);
        let sampler = SamplerConfig::low_discrepancy(cfg.seed);
        let stream = STREAM_NET ^ cube_stream(id.level, &center);
        let candidates: Vec<BallPoint> = sample_region(&sampler, stream, center.coords(), radius, 0, count)
            .into_par_iter()
            .map(|(_, p)| p)
            .filter(|p| self.contains_with(&path, p.coords()))
            .collect();

        // half-spaces that can come within `threshold` of the sampling ball
        let mut faces: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        for level in 1..path.len() {
            let own = self.center_of(level as u32, path[level]);
            let reach = dist_sq(own, center.coords()).sqrt() + radius;
            let parent = &self.levels[level - 1][path[level - 1] as usize - 1];
            for &sib in &parent.children.as_ref().expect("ancestor realized").ids {
                if sib == path[level] {
                    continue;
                }
                let other = self.center_of(level as u32, sib);
                if dist_sq(other, center.coords()).sqrt() < reach + 2.0 * threshold + radius {
                    faces.push((own.to_vec(), other.to_vec(), dist_sq(own, other).sqrt()));
                }
            }
        }
        let depth = |z: &[f64]| {
            faces
                .iter()
                .map(|(c, o, len)| (dist_sq(z, o) - dist_sq(z, c)) / (2.0 * len))
                .fold(f64::INFINITY, f64::min)
        };

        let mut chosen = vec![center.clone()];
        let mut net = Grid::new(n, s);
        net.insert(0, center.coords());
        for z in &candidates {
            if net.any_within(z.coords(), s, |i| chosen[i as usize].coords()) {
                continue;
            }
            if depth(z.coords()) < threshold {
                continue;
            }
            net.insert(chosen.len() as u32, z.coords());
            chosen.push(z.clone());
        }

        let mut observed = vec![0.0f64; chosen.len()];
        for z in &candidates {
            let (k, d2) = if chosen.len() > GRID_THRESHOLD {
                net.nearest(z.coords(), |i| chosen[i as usize].coords())
                    .expect("net is non-empty")
            } else {
                let mut best = (0u32, f64::INFINITY);
                for (i, c) in chosen.iter().enumerate() {
                    let d = c.dist_sq(z);
                    if d < best.1 {
                        best = (i as u32, d);
                    }
                }
                best
            };
            observed[k as usize] = observed[k as usize].max(d2.sqrt());
        }

        if self.levels.len() <= next as usize {
            self.levels.push(Vec::new());
        }
        let first = self.levels[next as usize].len() as u32 + 1;
        let ids: Vec<u32> = (first..first + chosen.len() as u32).collect();
        for (c, r) in chosen.into_iter().zip(observed) {
            self.levels[next as usize].push(Cube {
                center: c,
                parent: id.index,
                observed_radius: r,
                children: None,
            });
        }
        let children = self.children_entry(next, ids);
        self.levels[id.level as usize][id.index as usize - 1].children = Some(children);
        Ok(())
    }

    fn children_entry(&self, level: u32, ids: Vec<u32>) -> Children {
        let grid = (ids.len() > GRID_THRESHOLD).then(|| {
            let mut g = Grid::new(self.cfg.dim, self.cfg.spacing(level));
            for &i in &ids {
                g.insert(i, self.center_of(level, i));
            }
            g
        });
        Children { ids, grid }
    }

    fn info(&self, id: CubeId) -> Result<CubeInfo, DyadicError> {
        let cube = self.cube(id)?;
        Ok(CubeInfo {
            id,
            center: cube.center.clone(),
            parent: (id.level > 0).then(|| CubeId::new(id.level - 1, cube.parent)),
            observed_radius: cube.observed_radius,
            sampling_radius: self.sampling_radius(id, cube),
            children: cube
                .children
                .as_ref()
                .map(|c| c.ids.iter().map(|&i| CubeId::new(id.level + 1, i)).collect()),
        })
    }

    fn measure(&self, id: CubeId, samples: usize, sampler: &SamplerConfig) -> Result<MeasureEstimate, DyadicError> {
        let cube = self.cube(id)?;
        if id.level == 0 {
            return Ok(MeasureEstimate {
                estimate: 1.0,
                stderr: 0.0,
                samples,
                hits: samples,
                warning: None,
            });
        }
        let radius = self.sampling_radius(id, cube);
        let path = self.ancestry(id);
        let stream = STREAM_MEASURE ^ cube_stream(id.level, &cube.center);
        let hits = sample_region(sampler, stream, cube.center.coords(), radius, 0, samples)
            .par_iter()
            .filter(|(_, p)| self.contains_with(&path, p.coords()))
            .count();
        let vol = radius.powi(self.cfg.dim as i32);
        let p = hits as f64 / samples.max(1) as f64;
        Ok(MeasureEstimate {
            estimate: vol * p,
            stderr: vol * (p * (1.0 - p) / samples.max(1) as f64).sqrt(),
            samples,
            hits,
            warning: (hits == 0).then(|| format!("cube {id} received no hits in {samples} samples")),
        })
    }
}

/// Hierarchy of realized cubes behind a read/write lock.
///
/// `locate` realizes missing cubes on demand. Concurrent calls are allowed;
/// refinements are serialized by the lock. Cube indices follow realization
/// order, so bit-identical indices need identical call sequences. Cube
/// geometry does not depend on the order.
pub struct DyadicSystem {
    inner: RwLock<Inner>,
}

impl fmt::Debug for DyadicSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DyadicSystem")
            .field("config", &self.config())
            .field("realized", &self.realized_counts())
            .finish()
    }
}

/// Builds the system with level 1 realized and checks that it covers 𝔹ⁿ.
pub fn build_system(cfg: DyadicConfig) -> Result<DyadicSystem, DyadicError> {
    DyadicSystem::build(cfg)
}

impl DyadicSystem {
    pub fn build(cfg: DyadicConfig) -> Result<Self, DyadicError> {
        cfg.validate()?;
        let mut inner = Inner::new(cfg.clone());
        inner.realize(CubeId::ROOT)?;

        let level1 = inner.levels[1].len() as f64;
        let checks = ((16 * cfg.net_resolution) as f64 * level1).min(MAX_COVER_CHECK as f64) as usize;
        let sampler = SamplerConfig::low_discrepancy(cfg.seed);
        let allowed = cfg.outer_radius(1);
        let worst = sample_ball_stream(&sampler, STREAM_COVER, cfg.dim, 0, checks.max(1024))
            .par_iter()
            .map(|x| {
                let k = inner.descend(x.coords(), 1).expect("root realized");
                inner.levels[1][k.index as usize - 1].center.dist(x)
            })
            .reduce(|| 0.0, f64::max);
        if worst > allowed {
            return Err(DyadicError::Uncovered { radius: worst, allowed });
        }
        Ok(Self {
            inner: RwLock::new(inner),
        })
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn config(&self) -> DyadicConfig {
        self.read().cfg.clone()
    }

    pub fn dim(&self) -> usize {
        self.read().cfg.dim
    }

    /// Realized cube counts `M(k)` for `k = 0, 1, …`.
    pub fn realized_counts(&self) -> Vec<usize> {
        self.read().levels.iter().map(Vec::len).collect()
    }

    /// Deepest level holding at least one cube.
    pub fn realized_levels(&self) -> u32 {
        self.read().levels.iter().rposition(|l| !l.is_empty()).unwrap_or(0) as u32
    }

    /// Realizes and returns the children of `cube`.
    pub fn refine(&self, cube: CubeId) -> Result<Vec<CubeId>, DyadicError> {
        {
            let inner = self.read();
            if let Some(ch) = &inner.cube(cube)?.children {
                return Ok(ch.ids.iter().map(|&i| CubeId::new(cube.level + 1, i)).collect());
            }
        }
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        inner.realize(cube)?;
        let ch = inner.cube(cube)?.children.as_ref().expect("just realized");
        Ok(ch.ids.iter().map(|&i| CubeId::new(cube.level + 1, i)).collect())
    }

    fn check_level(&self, x: &BallPoint, level: u32) -> Result<(), DyadicError> {
        let inner = self.read();
        x.check_dim(inner.cfg.dim)?;
        if level > inner.cfg.max_level {
            return Err(DyadicError::DepthExceeded {
                level,
                max_level: inner.cfg.max_level,
            });
        }
        Ok(())
    }

    /// The level-`level` cube containing `x`, realizing cubes along the way.
    pub fn locate(&self, x: &BallPoint, level: u32) -> Result<CubeId, DyadicError> {
        self.check_level(x, level)?;
        loop {
            let missing = match self.read().descend(x.coords(), level) {
                Ok(id) => return Ok(id),
                Err(missing) => missing,
            };
            self.inner.write().unwrap_or_else(|e| e.into_inner()).realize(missing)?;
        }
    }

    /// `locate` without realization; `None` when the path is not realized.
    pub fn locate_realized(&self, x: &BallPoint, level: u32) -> Option<CubeId> {
        self.read().descend(x.coords(), level).ok()
    }

    /// `locate` using linear scans only; cross-checks the spatial index.
    pub fn locate_brute_force(&self, x: &BallPoint, level: u32) -> Option<CubeId> {
        self.read().descend_linear(x.coords(), level)
    }

    /// Whether `x` belongs to the realized cube `id`.
    pub fn contains(&self, id: CubeId, x: &BallPoint) -> Result<bool, DyadicError> {
        let inner = self.read();
        inner.cube(id)?;
        Ok(inner.contains(id, x.coords()))
    }

    pub fn center(&self, id: CubeId) -> Result<BallPoint, DyadicError> {
        Ok(self.read().cube(id)?.center.clone())
    }

    pub fn parent(&self, id: CubeId) -> Result<Option<CubeId>, DyadicError> {
        Ok(self.read().info(id)?.parent)
    }

    pub fn children(&self, id: CubeId) -> Result<Option<Vec<CubeId>>, DyadicError> {
        Ok(self.read().info(id)?.children)
    }

    pub fn cube_info(&self, id: CubeId) -> Result<CubeInfo, DyadicError> {
        self.read().info(id)
    }

    /// All realized cubes of `level`.
    pub fn cubes_at(&self, level: u32) -> Vec<CubeId> {
        let inner = self.read();
        let count = inner.levels.get(level as usize).map_or(0, Vec::len) as u32;
        (1..=count).map(|i| CubeId::new(level, i)).collect()
    }

    /// Monte Carlo estimate of `ν(Q)` from uniform points of the cube's sampling ball.
    pub fn cube_measure(
        &self,
        id: CubeId,
        samples: usize,
        sampler: &SamplerConfig,
    ) -> Result<MeasureEstimate, DyadicError> {
        self.read().measure(id, samples, sampler)
    }

    /// Realized cubes containing `x`, root first, down to `level` at most.
    /// Nothing is realized.
    pub fn realized_path(&self, x: &BallPoint, level: u32) -> Vec<CubeId> {
        self.read().path_of(x.coords(), level)
    }

    /// `∫_Q g dν` for the `k` outputs of `g` over the realized cube `Q`.
    ///
    /// Points are drawn uniformly from `ball`, which must contain the part of
    /// `Q` where `g` is nonzero; `None` selects the cube's sampling ball.
    /// `g` is called only at points of `Q`. The stream depends on `label` and
    /// the cube's level and center, not on its index.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate_cube<G>(
        &self,
        id: CubeId,
        ball: Option<(&[f64], f64)>,
        samples: usize,
        sampler: &SamplerConfig,
        label: u64,
        k: usize,
        g: G,
    ) -> Result<CubeIntegral, DyadicError>
    where
        G: Fn(&BallPoint, &mut [Complex64]) + Sync,
    {
        let inner = self.read();
        let cube = inner.cube(id)?;
        let (center, radius) = match ball {
            Some((c, r)) => (c.to_vec(), r),
            None => (cube.center.coords().to_vec(), inner.sampling_radius(id, cube)),
        };
        let path = inner.ancestry(id);
        let stream = label ^ cube_stream(id.level, &cube.center);
        let points = sample_region(sampler, stream, &center, radius, 0, samples);
        let parts: Vec<(Vec<Accum>, usize)> = points
            .par_chunks(sampler.batch())
            .map(|chunk| {
                let mut acc = vec![Accum::default(); k];
                let mut out = vec![Complex64::new(0.0, 0.0); k];
                let mut hits = 0;
                for (_, p) in chunk {
                    out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
                    if inner.contains_with(&path, p.coords()) {
                        hits += 1;
                        g(p, &mut out);
                    }
                    acc.iter_mut().zip(&out).for_each(|(a, &o)| a.push(o));
                }
                (acc, hits)
            })
            .collect();
        let outside = Accum {
            count: (samples - points.len()) as u64,
            ..Accum::default()
        };
        let vol = radius.powi(inner.cfg.dim as i32);
        let mut values = Vec::with_capacity(k);
        for j in 0..k {
            let acc = Accum::merge(Accum::reduce(parts.iter().map(|p| p.0[j]).collect()), outside);
            let acc = check_finite(acc).map_err(|e| DyadicError::Estimation(id, e))?;
            values.push(acc.estimate().scale(vol));
        }
        Ok(CubeIntegral {
            values,
            hits: parts.iter().map(|p| p.1).sum(),
            samples,
            ball_measure: vol,
        })
    }

    /// `Ĉ₁` over realized parent/child pairs with the child at level `≤ depth`,
    /// the root included as a parent.
    pub fn child_ratio_constant(
        &self,
        depth: u32,
        samples: usize,
        sampler: &SamplerConfig,
    ) -> Result<RatioReport, DyadicError> {
        let inner = self.read();
        let mut pairs = Vec::new();
        for level in 0..depth.min(inner.levels.len() as u32) {
            for (i, cube) in inner.levels[level as usize].iter().enumerate() {
                if let Some(ch) = &cube.children {
                    let parent = CubeId::new(level, i as u32 + 1);
                    pairs.extend(ch.ids.iter().map(|&c| (parent, CubeId::new(level + 1, c))));
                }
            }
        }
        let mut cubes: Vec<CubeId> = pairs.iter().flat_map(|&(p, c)| [p, c]).collect();
        cubes.sort_unstable();
        cubes.dedup();
        let measures: Vec<MeasureEstimate> = cubes
            .par_iter()
            .map(|&id| inner.measure(id, samples, sampler))
            .collect::<Result<_, _>>()?;
        let lookup = |id: CubeId| &measures[cubes.binary_search(&id).expect("measured")];

        let mut report = RatioReport {
            c1: 1.0,
            stderr: 0.0,
            pairs: pairs.len(),
            worst_parent: CubeId::ROOT,
            worst_child: CubeId::ROOT,
            samples_per_cube: samples,
            warnings: measures.iter().filter_map(|m| m.warning.clone()).collect(),
        };
        let mut best = f64::NEG_INFINITY;
        for &(p, c) in &pairs {
            let (mp, mc) = (lookup(p), lookup(c));
            let ratio = mp.estimate / mc.estimate;
            if ratio > best {
                best = ratio;
                let rel = |m: &MeasureEstimate| if m.estimate > 0.0 { m.stderr / m.estimate } else { 0.0 };
                report.c1 = ratio;
                report.stderr = ratio * (rel(mp).powi(2) + rel(mc).powi(2)).sqrt();
                report.worst_parent = p;
                report.worst_child = c;
            }
        }
        Ok(report)
    }

    /// Text snapshot with 17 significant digits per coordinate.
    pub fn snapshot(&self) -> String {
        snapshot::write(&self.read())
    }

    pub fn from_snapshot(text: &str) -> Result<Self, DyadicError> {
        Ok(Self {
            inner: RwLock::new(snapshot::read(text)?),
        })
    }
}
