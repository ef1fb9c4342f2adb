//! Builds (or reloads) a dyadic system and runs the structural suites.

use std::collections::BTreeSet;

use hball_core::dyadic::{check_points, points_in_cubes, run_suites, DyadicError};
use hball_core::DyadicSystem;
use serde_json::json;

use crate::report::{num, Report, Table};
use crate::{CliError, RunConfig};

const SELECT_SEED: u64 = 0x005E_1EC7;

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let (sys, source) = match &cfg.dyadic.snapshot {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read snapshot {}: {e}", path.display())))?;
            match DyadicSystem::from_snapshot(&text) {
                Ok(sys) => (sys, path.display().to_string()),
                Err(e) => return Ok(rejected(cfg, &e)),
            }
        }
        None => (
            DyadicSystem::build(cfg.dyadic_config()).map_err(config)?,
            "built".to_string(),
        ),
    };
    let dcfg = sys.config();
    let dim = dcfg.dim;
    let depth = cfg.dyadic.depth.unwrap_or(dcfg.max_level).min(dcfg.max_level);

    let points = if cfg.dyadic.selected_cubes > 0 {
        // refine a few cubes one level up and check points inside them only
        let mut selected = BTreeSet::new();
        for x in check_points(dim, cfg.dyadic.selected_cubes, cfg.seed ^ SELECT_SEED) {
            selected.insert(sys.locate(&x, depth - 1).map_err(numerical)?);
        }
        let selected: Vec<_> = selected.into_iter().collect();
        if depth > 1 {
            for &id in &selected {
                sys.refine(id).map_err(numerical)?;
            }
        }
        let per_cube = cfg.dyadic.check_points.div_ceil(selected.len());
        points_in_cubes(&sys, &selected, per_cube, cfg.seed).map_err(numerical)?
    } else {
        check_points(dim, cfg.dyadic.check_points, cfg.seed)
    };
    let suites = run_suites(&sys, &points, depth).map_err(numerical)?;

    let mut table = Table::new(
        "dyadic_suites",
        &[
            "seed",
            "points",
            "suite",
            "level",
            "checked",
            "violations",
            "pass",
            "detail",
        ],
    );
    for r in &suites {
        table.push(vec![
            cfg.seed.to_string(),
            points.len().to_string(),
            r.suite.clone(),
            r.level.to_string(),
            r.checked.to_string(),
            r.violations.to_string(),
            r.passed().to_string(),
            r.detail.clone(),
        ]);
    }
    let counts = sys.realized_counts();
    let mut levels = Table::new(
        "dyadic_levels",
        &["seed", "level", "cubes", "spacing", "inner_radius", "outer_radius"],
    );
    for (k, m) in counts.iter().enumerate() {
        let k32 = k as u32;
        levels.push(vec![
            cfg.seed.to_string(),
            k.to_string(),
            m.to_string(),
            num(dcfg.spacing(k32)),
            num(dcfg.inner_radius(k32)),
            num(dcfg.outer_radius(k32)),
        ]);
    }
    let passed = suites.iter().all(|r| r.passed());
    let failed: Vec<String> = suites
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}@{}", r.suite, r.level))
        .collect();
    let summary = json!({
        "source": source,
        "config": dcfg,
        "depth": depth,
        "points": points.len(),
        "realized_counts": counts,
        "suites": suites.len(),
        "failed_suites": failed,
    });
    Ok(Report {
        command: "dyadic",
        passed,
        numerical_failure: false,
        tables: vec![table, levels],
        summary,
        files: vec![("dyadic.snapshot".into(), sys.snapshot())],
    })
}

/// A snapshot that does not parse is a failed invariant of the stored system.
fn rejected(cfg: &RunConfig, e: &DyadicError) -> Report {
    let mut table = Table::new(
        "dyadic_suites",
        &[
            "seed",
            "points",
            "suite",
            "level",
            "checked",
            "violations",
            "pass",
            "detail",
        ],
    );
    table.push(vec![
        cfg.seed.to_string(),
        "0".into(),
        "snapshot".into(),
        "0".into(),
        "1".into(),
        "1".into(),
        "false".into(),
        e.to_string(),
    ]);
    Report {
        command: "dyadic",
        passed: false,
        numerical_failure: false,
        tables: vec![table],
        summary: json!({ "source": "snapshot", "error": e.to_string() }),
        files: Vec::new(),
    }
}

fn config(e: DyadicError) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical(e: DyadicError) -> CliError {
    match e {
        DyadicError::InvalidConfig(_) | DyadicError::DepthExceeded { .. } => CliError::Config(e.to_string()),
        e => CliError::Numerical(e.to_string()),
    }
}
