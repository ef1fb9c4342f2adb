//! Sampled verification of the partition, nesting, separation and sandwich
//! properties.

use rayon::prelude::*;
use serde::Serialize;

use super::grid::Grid;
use super::{cube_stream, CubeId, DyadicError, DyadicSystem, Inner};
use crate::geometry::{dist_sq, BallPoint};
use crate::quadrature::{sample_ball_stream, sample_region, SamplerConfig};

const STREAM_CHECK: u64 = 0x6368_6B00;
const STREAM_PROBE: u64 = 0x7072_6F00;
const STREAM_SELECT: u64 = 0x7365_6C00;

/// Inner-ball probes per cube.
const PROBES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub level: u32,
    pub checked: usize,
    pub violations: usize,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn new(suite: &str, level: u32, checked: usize, failures: Vec<String>) -> Self {
        Self {
            suite: suite.to_string(),
            level,
            checked,
            violations: failures.len(),
            detail: failures.into_iter().next().unwrap_or_default(),
        }
    }
}

/// Low-discrepancy verification points, independent of the net samples.
pub fn check_points(dim: usize, count: usize, seed: u64) -> Vec<BallPoint> {
    sample_ball_stream(&SamplerConfig::low_discrepancy(seed), STREAM_CHECK, dim, 0, count)
}

/// Realizes the level-`depth` path of every point, in order.
pub fn realize_paths(sys: &DyadicSystem, points: &[BallPoint], depth: u32) -> Result<(), DyadicError> {
    for x in points {
        sys.locate(x, depth)?;
    }
    Ok(())
}

/// About `per_cube` points spread over each listed cube.
pub fn points_in_cubes(
    sys: &DyadicSystem,
    cubes: &[CubeId],
    per_cube: usize,
    seed: u64,
) -> Result<Vec<BallPoint>, DyadicError> {
    let inner = sys.read();
    let sampler = SamplerConfig::low_discrepancy(seed);
    let mut out = Vec::new();
    for &id in cubes {
        let cube = inner.cube(id)?;
        let radius = inner.sampling_radius(id, cube);
        let path = inner.ancestry(id);
        let stream = STREAM_SELECT ^ cube_stream(id.level, &cube.center);
        out.extend(
            sample_region(&sampler, stream, cube.center.coords(), radius, 0, per_cube)
                .into_iter()
                .map(|(_, p)| p)
                .filter(|p| inner.contains_with(&path, p.coords())),
        );
    }
    Ok(out)
}

fn collect_failures<T: Sync>(items: &[T], check: impl Fn(&T) -> Option<String> + Sync + Send) -> Vec<String> {
    items.par_iter().filter_map(check).collect()
}

fn partition(inner: &Inner, points: &[BallPoint], level: u32) -> SuiteReport {
    let cfg = &inner.cfg;
    let reach = cfg.outer_radius(level);
    let mut grid = Grid::new(cfg.dim, reach);
    for (i, c) in inner.levels[level as usize].iter().enumerate() {
        grid.insert(i as u32 + 1, c.center.coords());
    }
    let failures = collect_failures(points, |x| {
        let fast = inner.descend(x.coords(), level).ok();
        let brute = inner.descend_linear(x.coords(), level);
        if fast.is_none() || fast != brute {
            return Some(format!("{x:?}: located {fast:?}, brute force {brute:?}"));
        }
        let mut owners = 0;
        grid.for_each_near(x.coords(), reach, |i| {
            let id = CubeId::new(level, i);
            if dist_sq(inner.center_of(level, i), x.coords()) <= reach * reach && inner.contains(id, x.coords()) {
                owners += 1;
            }
        });
        (owners != 1).then(|| format!("{x:?} belongs to {owners} cubes within the outer radius"))
    });
    SuiteReport::new("partition", level, points.len(), failures)
}

fn nesting(inner: &Inner, points: &[BallPoint], level: u32, deepest: bool) -> SuiteReport {
    let mut failures = Vec::new();
    if !deepest {
        failures = collect_failures(points, |x| {
            let here = inner.descend(x.coords(), level).ok()?;
            let below = inner.descend(x.coords(), level + 1).ok()?;
            let parent = inner.levels[below.level as usize][below.index as usize - 1].parent;
            (parent != here.index).then(|| format!("{x:?}: {below} has parent index {parent}, expected {here}"))
        });
    }
    let cubes: Vec<u32> = (1..=inner.levels[level as usize].len() as u32).collect();
    failures.extend(collect_failures(&cubes, |&i| {
        let cube = &inner.levels[level as usize][i as usize - 1];
        let id = CubeId::new(level, i);
        let own = inner.descend(cube.center.coords(), level).ok();
        let up = inner.descend(cube.center.coords(), level - 1).ok();
        if own != Some(id) {
            Some(format!("center of {id} locates to {own:?}"))
        } else if up != Some(CubeId::new(level - 1, cube.parent)) {
            Some(format!(
                "center of {id} locates to {up:?} one level up, recorded parent index {}",
                cube.parent
            ))
        } else {
            None
        }
    }));
    let checked = if deepest { 0 } else { points.len() } + cubes.len();
    SuiteReport::new("nesting", level, checked, failures)
}

/// Exact pairwise check that level-`level` centers are `ηᵏ`-separated.
pub fn separation_suite(sys: &DyadicSystem, level: u32) -> SuiteReport {
    separation(&sys.read(), level)
}

fn separation(inner: &Inner, level: u32) -> SuiteReport {
    let s = inner.cfg.spacing(level);
    let cubes = inner.levels.get(level as usize).map_or(&[][..], Vec::as_slice);
    let idx: Vec<usize> = (0..cubes.len()).collect();
    let failures = collect_failures(&idx, |&i| {
        let a = cubes[i].center.coords();
        cubes[i + 1..].iter().enumerate().find_map(|(j, b)| {
            let d2 = dist_sq(a, b.center.coords());
            (d2 < s * s).then(|| format!("centers {} and {} are {} apart", i + 1, i + j + 2, d2.sqrt()))
        })
    });
    SuiteReport::new(
        "separation",
        level,
        cubes.len() * cubes.len().saturating_sub(1) / 2,
        failures,
    )
}

fn sandwich(inner: &Inner, points: &[BallPoint], level: u32) -> SuiteReport {
    let cfg = &inner.cfg;
    let outer = cfg.outer_radius(level);
    let inner_r = cfg.inner_radius(level);
    let mut failures = collect_failures(points, |x| {
        let id = inner.descend(x.coords(), level).ok()?;
        let cube = &inner.levels[level as usize][id.index as usize - 1];
        let d = cube.center.dist(x);
        let sampling = inner.sampling_radius(id, cube);
        if d > outer {
            Some(format!("{x:?} in {id} lies {d} from its center (outer radius {outer})"))
        } else if d > sampling {
            Some(format!(
                "{x:?} in {id} lies {d} from its center (sampling radius {sampling})"
            ))
        } else {
            None
        }
    });
    let cubes: Vec<u32> = (1..=inner.levels[level as usize].len() as u32).collect();
    let probe_cfg = SamplerConfig::low_discrepancy(cfg.seed);
    failures.extend(collect_failures(&cubes, |&i| {
        let id = CubeId::new(level, i);
        let cube = &inner.levels[level as usize][i as usize - 1];
        let path = inner.ancestry(id);
        let stream = STREAM_PROBE ^ cube_stream(level, &cube.center);
        let probes = sample_region(&probe_cfg, stream, cube.center.coords(), inner_r, 0, PROBES);
        std::iter::once(cube.center.clone())
            .chain(probes.into_iter().map(|(_, p)| p))
            .find(|p| !inner.contains_with(&path, p.coords()))
            .map(|p| format!("{p:?} within {inner_r} of the center of {id} lies outside it"))
    }));
    SuiteReport::new("sandwich", level, points.len() + cubes.len() * (PROBES + 1), failures)
}

/// Realizes the paths of `points` to `depth`, then runs every suite on levels `1..=depth`.
pub fn run_suites(sys: &DyadicSystem, points: &[BallPoint], depth: u32) -> Result<Vec<SuiteReport>, DyadicError> {
    realize_paths(sys, points, depth)?;
    let inner = sys.read();
    let mut reports = Vec::new();
    for level in 1..=depth {
        reports.push(partition(&inner, points, level));
        reports.push(nesting(&inner, points, level, level == depth));
        reports.push(separation(&inner, level));
        reports.push(sandwich(&inner, points, level));
    }
    Ok(reports)
}
