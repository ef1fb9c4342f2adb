//! Run configuration, stored as TOML.
//!
//! Every section has defaults, so an empty file is a valid configuration.
//! Seeds of the individual estimators are derived from the top-level `seed`.

use std::path::{Path, PathBuf};

use hball_core::functions::Spike;
use hball_core::projector::geometric_grid;
use hball_core::quadrature::Scheme;
use hball_core::{DyadicConfig, FunctionSpec, Integrator, KernelSpec, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    /// Master seed; must fit in a signed 64-bit integer.
    pub seed: u64,
    pub scheme: Scheme,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out: PathBuf,
    pub dyadic: DyadicSection,
    pub kernel: KernelSpec,
    pub family: FamilySection,
    pub czd: CzdSection,
    pub kernel_bounds: BoundsSection,
    pub weaktype: WeakTypeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: 2,
            seed: 1,
            scheme: Scheme::LowDiscrepancy,
            workers: 0,
            out: PathBuf::from("hball-out"),
            dyadic: DyadicSection::default(),
            kernel: KernelSpec::Disk,
            family: FamilySection::default(),
            czd: CzdSection::default(),
            kernel_bounds: BoundsSection::default(),
            weaktype: WeakTypeSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `(1/2, 1/12, 4)`, depth 6.
    #[default]
    Practical,
    /// `(1/96, 1/12, 4)`, depth 2.
    Reference,
}

/// Dyadic system and its verification budget. Unset triple fields come from `preset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DyadicSection {
    pub preset: Preset,
    pub eta: Option<f64>,
    pub kappa0: Option<f64>,
    pub kappa1: Option<f64>,
    pub max_level: Option<u32>,
    pub net_resolution: Option<usize>,
    /// Deepest level checked; defaults to `max_level`.
    pub depth: Option<u32>,
    pub check_points: usize,
    /// When positive, only this many cubes one level above `depth` are refined,
    /// and the check points are drawn inside them.
    pub selected_cubes: usize,
    /// Load this snapshot instead of building the system.
    pub snapshot: Option<PathBuf>,
}

impl Default for DyadicSection {
    fn default() -> Self {
        Self {
            preset: Preset::Practical,
            eta: None,
            kappa0: None,
            kappa1: None,
            max_level: None,
            net_resolution: None,
            depth: None,
            check_points: 100_000,
            selected_cubes: 0,
            snapshot: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub name: String,
    pub members: Vec<FunctionSpec>,
}

impl Default for FamilySection {
    fn default() -> Self {
        let spike = |c: [f64; 2], radius: f64, height: f64| {
            FunctionSpec::Spike(Spike {
                center: c.to_vec(),
                radius,
                height,
            })
        };
        Self {
            name: "spikes".into(),
            members: vec![
                spike([0.0, 0.0], 1.0 / 8f64.sqrt(), 8.0),
                spike([0.3, -0.2], 0.2, 25.0),
                spike([-0.5, 0.4], 0.1, 100.0),
                spike([0.6, 0.1], 0.05, 400.0),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CzdSection {
    pub thresholds: Vec<f64>,
    /// Initial and maximal samples per cube of the stopping-time estimates.
    pub samples: usize,
    pub max_samples: usize,
    /// Decision band and check tolerance, in standard errors.
    pub sigma: f64,
    pub clause_samples: usize,
    pub measure_samples: usize,
    pub mean_zero_samples: usize,
    pub reconstruction_points: usize,
}

impl Default for CzdSection {
    fn default() -> Self {
        Self {
            thresholds: vec![1.0, 2.0, 4.0, 8.0],
            samples: 4096,
            max_samples: 16_384,
            sigma: 3.0,
            clause_samples: 100_000,
            measure_samples: 65_536,
            mean_zero_samples: 8192,
            reconstruction_points: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub pairs: usize,
    pub polish_steps: usize,
    /// Largest accepted relative change of a sup estimate under sample doubling.
    pub max_drift: f64,
    /// Extra truncations of the harmonic kernel to report alongside the configured one.
    pub truncations: Vec<usize>,
    pub hormander_cubes: usize,
    pub hormander_levels: (u32, u32),
    pub hormander_samples: usize,
    /// Distances at which the tail bound is tabulated.
    pub tail_distances: Vec<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            pairs: 1_000_000,
            polish_steps: 2000,
            max_drift: 0.05,
            truncations: Vec::new(),
            hormander_cubes: 50,
            hormander_levels: (4, 6),
            hormander_samples: 16_384,
            tail_distances: vec![0.01, 0.05, 0.1, 0.25, 0.5],
        }
    }
}

/// Thresholds as an explicit list or a geometric grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Geometric {
        t0: f64,
        steps_per_octave: usize,
        count: usize,
    },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Geometric {
                t0,
                steps_per_octave,
                count,
            } => geometric_grid(*t0, *steps_per_octave, *count),
        }
    }
}

/// Inner quadrature of `Pf`; the Monte Carlo seed is derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnerRule {
    MonteCarlo { samples: usize },
    Product { radial: usize, angular: usize },
}

impl InnerRule {
    pub fn integrator(&self, sampler: SamplerConfig) -> Integrator {
        match *self {
            Self::MonteCarlo { samples } => Integrator::monte_carlo(samples, sampler),
            Self::Product { radial, angular } => Integrator::Product { radial, angular },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakTypeSection {
    pub t_grid: Grid,
    /// Points at which `Pf` is evaluated.
    pub outer: usize,
    pub inner: InnerRule,
    /// Largest accepted ratio of the last member's sup to the first's.
    pub max_trend: f64,
    /// Heights of the good/bad pipeline, applied to every member.
    pub pipeline_thresholds: Vec<f64>,
    pub pipeline_outer: usize,
    pub decompose_samples: usize,
    pub measure_samples: usize,
    pub cube_samples: usize,
    pub hormander_samples: usize,
    pub hormander_points: usize,
    pub hormander_cubes: usize,
    /// Pairs for the gradient constant behind the chain bound on `Ĉ₄`; 0 skips it.
    pub gradient_pairs: usize,
}

impl Default for WeakTypeSection {
    fn default() -> Self {
        Self {
            t_grid: Grid::Geometric {
                t0: 0.125,
                steps_per_octave: 2,
                count: 30,
            },
            outer: 4096,
            inner: InnerRule::MonteCarlo { samples: 4096 },
            max_trend: 2.0,
            pipeline_thresholds: vec![2.0, 32.0],
            pipeline_outer: 2048,
            decompose_samples: 4096,
            measure_samples: 65_536,
            cube_samples: 4096,
            hormander_samples: 16_384,
            hormander_points: 4,
            hormander_cubes: 32,
            gradient_pairs: 200_000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills preset-derived fields, so the result is self-contained.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let base = self.preset_dyadic();
        let d = &mut self.dyadic;
        d.eta.get_or_insert(base.eta);
        d.kappa0.get_or_insert(base.kappa0);
        d.kappa1.get_or_insert(base.kappa1);
        d.max_level.get_or_insert(base.max_level);
        d.net_resolution.get_or_insert(base.net_resolution);
        let max_level = d.max_level.unwrap_or(base.max_level);
        d.depth.get_or_insert(max_level);
        self.validate()?;
        Ok(self)
    }

    fn preset_dyadic(&self) -> DyadicConfig {
        match self.dyadic.preset {
            Preset::Practical => DyadicConfig::practical(self.dimension),
            Preset::Reference => DyadicConfig::reference(self.dimension),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer".into());
        }
        self.dyadic_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let depth = self.dyadic.depth.unwrap_or(1);
        if depth == 0 || depth > self.dyadic_config().max_level {
            return bad(format!("dyadic.depth = {depth} must lie in 1..=max_level"));
        }
        self.kernel
            .build(self.dimension)
            .map_err(|e| CliError::Config(format!("kernel: {e}")))?;
        if self.family.members.is_empty() {
            return bad("family.members is empty".into());
        }
        let check_grid = |name: &str, v: &[f64]| {
            if v.is_empty() || v.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return bad(format!("{name} needs positive finite thresholds"));
            }
            Ok(())
        };
        check_grid("czd.thresholds", &self.czd.thresholds)?;
        check_grid("weaktype.t_grid", &self.weaktype.t_grid.values())?;
        check_grid("weaktype.pipeline_thresholds", &self.weaktype.pipeline_thresholds)?;
        let (lo, hi) = self.kernel_bounds.hormander_levels;
        if lo == 0 || lo > hi {
            return bad(format!(
                "kernel_bounds.hormander_levels = ({lo}, {hi}) is not a level range"
            ));
        }
        Ok(())
    }

    pub fn dyadic_config(&self) -> DyadicConfig {
        let base = self.preset_dyadic();
        let d = &self.dyadic;
        DyadicConfig {
            dim: self.dimension,
            eta: d.eta.unwrap_or(base.eta),
            kappa0: d.kappa0.unwrap_or(base.kappa0),
            kappa1: d.kappa1.unwrap_or(base.kappa1),
            max_level: d.max_level.unwrap_or(base.max_level),
            net_resolution: d.net_resolution.unwrap_or(base.net_resolution),
            seed: self.seed,
        }
    }

    /// Sampler for the estimator labelled `label`.
    pub fn sampler(&self, label: u64) -> SamplerConfig {
        SamplerConfig::new(self.seed, self.scheme).derive(label)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))
    }
}
