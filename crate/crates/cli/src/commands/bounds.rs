//! Size and gradient constants, Hörmander integrals and the tail bound.

use std::collections::BTreeSet;

use hball_core::dyadic::check_points;
use hball_core::kernels::{kernel_gradient_constant, kernel_size_constant, tail_integral_bound};
use hball_core::projector::hormander_domination;
use hball_core::{BoundConfig, BoundReport, DyadicSystem, Kernel, KernelSpec, SamplerConfig};
use serde_json::json;

use crate::report::{num, Report, Table};
use crate::{CliError, RunConfig};

const LABEL_PAIRS: u64 = 0xB0D;
const LABEL_HORMANDER: u64 = 0x40;
const CUBE_SEED: u64 = 0xC0BE;

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = &cfg.kernel_bounds;
    let bound_cfg = BoundConfig {
        pairs: b.pairs,
        sampler: SamplerConfig::pseudo_random(cfg.seed).derive(LABEL_PAIRS),
        polish_steps: b.polish_steps,
    };
    let mut specs = vec![cfg.kernel.clone()];
    if let KernelSpec::HarmonicBall { truncation } = cfg.kernel {
        specs.extend(
            b.truncations
                .iter()
                .filter(|&&m| m != truncation)
                .map(|&m| KernelSpec::HarmonicBall { truncation: m }),
        );
    }

    let mut table = Table::new(
        "kernel_bounds",
        &[
            "seed",
            "kernel",
            "truncation",
            "quantity",
            "constant",
            "sampled",
            "half",
            "samples",
            "stability",
            "pass",
            "worst_x",
            "worst_y",
        ],
    );
    let mut passed = true;
    let mut constants = Vec::new();
    let mut main_gradient = 0.0;
    for (i, spec) in specs.iter().enumerate() {
        let k = spec.build(cfg.dimension).map_err(|e| CliError::Config(e.to_string()))?;
        let size = kernel_size_constant(k.as_ref(), &bound_cfg).map_err(hball_core::Error::from)?;
        let grad = kernel_gradient_constant(k.as_ref(), &bound_cfg).map_err(hball_core::Error::from)?;
        for (quantity, r) in [("size", &size), ("gradient", &grad)] {
            let ok = stable(r, b.max_drift);
            passed &= ok;
            table.push(vec![
                cfg.seed.to_string(),
                r.kernel.clone(),
                k.truncation().map_or(String::new(), |m| m.to_string()),
                quantity.into(),
                num(r.constant_estimate),
                num(r.sampled_estimate),
                num(r.half_estimate),
                r.sample_count.to_string(),
                num(r.stability),
                ok.to_string(),
                coords(&r.worst_pair.0),
                coords(&r.worst_pair.1),
            ]);
        }
        if i == 0 {
            main_gradient = grad.constant_estimate;
        }
        constants.push(json!({
            "kernel": size.kernel,
            "truncation": k.truncation(),
            "size": size.constant_estimate,
            "size_stability": size.stability,
            "gradient": grad.constant_estimate,
            "gradient_stability": grad.stability,
        }));
    }

    let k = cfg
        .kernel
        .build(cfg.dimension)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (hormander, hormander_pass) = hormander_rows(cfg, k.as_ref(), main_gradient)?;
    passed &= hormander_pass;

    let mut tail = Table::new("tail_bound", &["n", "distance", "bound"]);
    for &d in &b.tail_distances {
        let v = tail_integral_bound(cfg.dimension, d).map_err(|e| CliError::Config(e.to_string()))?;
        tail.push(vec![cfg.dimension.to_string(), num(d), num(v)]);
    }

    let summary = json!({
        "kernel": k.name(),
        "pairs": b.pairs,
        "max_drift": b.max_drift,
        "constants": constants,
        "hormander_cubes": hormander.len(),
        "hormander_pass": hormander_pass,
    });
    Ok(Report {
        command: "kernel-bounds",
        passed,
        numerical_failure: false,
        tables: vec![table, hormander, tail],
        summary,
        files: Vec::new(),
    })
}

fn stable(r: &BoundReport, max_drift: f64) -> bool {
    r.constant_estimate.is_finite() && r.stability <= max_drift
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|c| num(*c)).collect::<Vec<_>>().join(" ")
}

/// Hörmander integrals on cubes spread over the configured level range.
fn hormander_rows(cfg: &RunConfig, k: &dyn Kernel, gradient: f64) -> Result<(Table, bool), CliError> {
    let b = &cfg.kernel_bounds;
    let mut table = Table::new(
        "hormander",
        &[
            "seed", "level", "index", "distance", "integral", "stderr", "bound", "samples", "pass",
        ],
    );
    if b.hormander_cubes == 0 {
        return Ok((table, true));
    }
    let (lo, hi) = b.hormander_levels;
    let dcfg = cfg.dyadic_config();
    if hi > dcfg.max_level {
        return Err(CliError::Config(format!(
            "kernel_bounds.hormander_levels reaches {hi} beyond dyadic max_level {}",
            dcfg.max_level
        )));
    }
    let sys = DyadicSystem::build(dcfg).map_err(|e| CliError::Config(e.to_string()))?;
    let span = hi - lo + 1;
    let mut cubes = Vec::new();
    let mut seen = BTreeSet::new();
    // a few spare points cover collisions
    for (i, x) in check_points(cfg.dimension, 4 * b.hormander_cubes, cfg.seed ^ CUBE_SEED)
        .iter()
        .enumerate()
    {
        let level = lo + i as u32 % span;
        let id = sys.locate(x, level).map_err(|e| CliError::Numerical(e.to_string()))?;
        if seen.insert(id) {
            cubes.push(id);
        }
        if cubes.len() == b.hormander_cubes {
            break;
        }
    }
    let rows = hormander_domination(
        k,
        &sys,
        &cubes,
        gradient,
        &cfg.sampler(LABEL_HORMANDER),
        b.hormander_samples,
    )
    .map_err(hball_core::Error::from)?;
    let mut pass = true;
    for r in &rows {
        pass &= r.pass;
        table.push(vec![
            cfg.seed.to_string(),
            r.cube.level.to_string(),
            r.cube.index.to_string(),
            num(r.distance),
            num(r.integral.value),
            num(r.integral.stderr),
            num(r.bound),
            r.integral.samples.to_string(),
            r.pass.to_string(),
        ]);
    }
    Ok((table, pass))
}
