//! Weak-type scan of the family plus the good/bad pipeline per member.

use std::sync::Arc;

use hball_core::kernels::kernel_gradient_constant;
use hball_core::{
    cz_pipeline_check, weak_type_scan, BoundConfig, DecomposeOptions, DyadicSystem, PipelineOptions, PipelineReport,
    SamplerConfig, ScanConfig,
};
use serde_json::json;

use super::build_family;
use crate::report::{num, to_value, Report, Table};
use crate::{CliError, RunConfig};

const LABEL_OUTER: u64 = 0x0E;
const LABEL_INNER: u64 = 0x1E;
const LABEL_PIPELINE_OUTER: u64 = 0x2E;
const LABEL_PIPELINE_INNER: u64 = 0x3E;
const LABEL_DECOMPOSE: u64 = 0x4E;
const LABEL_GRADIENT: u64 = 0x5E;

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let w = &cfg.weaktype;
    let k = cfg
        .kernel
        .build(cfg.dimension)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let family = build_family(cfg)?;
    let t_grid = w.t_grid.values();
    let scan_cfg = ScanConfig {
        outer: w.outer,
        sampler: cfg.sampler(LABEL_OUTER),
        integrator: w.inner.integrator(cfg.sampler(LABEL_INNER)),
    };
    let members: Vec<_> = family.iter().map(|(s, f)| (s.parameter(), f.clone())).collect();
    let scan =
        weak_type_scan(k.as_ref(), &cfg.family.name, &members, &t_grid, &scan_cfg).map_err(hball_core::Error::from)?;

    let gradient = if w.gradient_pairs > 0 {
        let bc = BoundConfig {
            pairs: w.gradient_pairs,
            sampler: SamplerConfig::pseudo_random(cfg.seed).derive(LABEL_GRADIENT),
            ..BoundConfig::default()
        };
        Some(
            kernel_gradient_constant(k.as_ref(), &bc)
                .map_err(hball_core::Error::from)?
                .constant_estimate,
        )
    } else {
        None
    };
    let opts = PipelineOptions {
        decompose: DecomposeOptions {
            samples: w.decompose_samples,
            max_samples: 4 * w.decompose_samples,
            sampler: cfg.sampler(LABEL_DECOMPOSE),
            ..DecomposeOptions::default()
        },
        scan: ScanConfig {
            outer: w.pipeline_outer,
            sampler: cfg.sampler(LABEL_PIPELINE_OUTER),
            integrator: w.inner.integrator(cfg.sampler(LABEL_PIPELINE_INNER)),
        },
        measure_samples: w.measure_samples,
        cube_samples: w.cube_samples,
        hormander_samples: w.hormander_samples,
        hormander_points: w.hormander_points,
        hormander_cubes: w.hormander_cubes,
        gradient_constant: gradient,
    };
    let sys = Arc::new(DyadicSystem::build(cfg.dyadic_config()).map_err(|e| CliError::Config(e.to_string()))?);
    let mut pipelines: Vec<(usize, PipelineReport)> = Vec::new();
    let mut skipped = Vec::new();
    for (m, (_, f)) in family.iter().enumerate() {
        for &t in &w.pipeline_thresholds {
            if t < f.l1_norm().value {
                // trivial branch: λ(t) ≤ 1 ≤ ‖f‖₁/t
                skipped.push(json!({ "member": m, "t": t }));
                continue;
            }
            let r = cz_pipeline_check(k.as_ref(), f, t, &sys, &opts).map_err(hball_core::Error::from)?;
            pipelines.push((m, r));
        }
    }

    let mut profiles = Table::new(
        "weaktype_profiles",
        &[
            "seed",
            "member",
            "parameter",
            "t",
            "lambda",
            "stderr",
            "t_lambda",
            "outer",
            "inner",
        ],
    );
    let inner_label = match w.inner {
        crate::config::InnerRule::MonteCarlo { samples } => format!("mc{samples}"),
        crate::config::InnerRule::Product { radial, angular } => format!("product{radial}x{angular}"),
    };
    let mut members_table = Table::new(
        "weaktype_members",
        &[
            "seed",
            "member",
            "parameter",
            "l1_norm",
            "sup_ratio",
            "argmax_t",
            "divergent_points",
            "small_t_ok",
            "markov_margin",
            "outer",
        ],
    );
    for (m, r) in scan.members.iter().enumerate() {
        for (t, l) in r.profile.thresholds.iter().zip(&r.profile.lambda) {
            profiles.push(vec![
                cfg.seed.to_string(),
                m.to_string(),
                num(r.parameter),
                num(*t),
                num(l.value),
                num(l.stderr),
                num(t * l.value),
                w.outer.to_string(),
                inner_label.clone(),
            ]);
        }
        members_table.push(vec![
            cfg.seed.to_string(),
            m.to_string(),
            num(r.parameter),
            num(r.l1_norm),
            num(r.sup_ratio),
            num(r.argmax_t),
            r.divergent_points.to_string(),
            r.small_t_ok.to_string(),
            num(r.markov_margin),
            w.outer.to_string(),
        ]);
    }
    let mut stages = Table::new(
        "pipeline_stages",
        &[
            "seed",
            "member",
            "t",
            "stage",
            "lhs",
            "rhs",
            "tolerance",
            "margin",
            "pass",
            "outer",
        ],
    );
    for (m, r) in &pipelines {
        for s in &r.stages {
            stages.push(vec![
                cfg.seed.to_string(),
                m.to_string(),
                num(r.t),
                s.stage.into(),
                num(s.lhs),
                num(s.rhs),
                num(s.tolerance),
                num(s.margin),
                s.pass.to_string(),
                w.pipeline_outer.to_string(),
            ]);
        }
    }

    let divergent = scan.members.iter().map(|m| m.divergent_points).sum::<usize>()
        + pipelines.iter().map(|(_, r)| r.divergent_points).sum::<usize>();
    let scan_ok = scan.all_finite()
        && scan.members.iter().all(|m| m.small_t_ok)
        && scan.trend.is_finite()
        && scan.trend < w.max_trend;
    let pipelines_ok = pipelines.iter().all(|(_, r)| r.passed());
    let summary = json!({
        "family": scan.family,
        "kernel": scan.kernel,
        "t_grid": t_grid,
        "trend": to_value(&scan.trend),
        "max_trend": w.max_trend,
        "gradient_constant": gradient,
        "members": scan.members.iter().map(|m| json!({
            "label": m.label,
            "parameter": m.parameter,
            "l1_norm": m.l1_norm,
            "sup_ratio": to_value(&m.sup_ratio),
            "argmax_t": m.argmax_t,
            "divergent_points": m.divergent_points,
            "small_t_ok": m.small_t_ok,
            "markov_margin": m.markov_margin,
        })).collect::<Vec<_>>(),
        "pipelines": pipelines.iter().map(|(m, r)| json!({
            "member": m,
            "t": r.t,
            "stopping_cubes": r.stopping_cubes,
            "omega_measure": r.omega_measure,
            "omega_prime_measure": r.omega_prime_measure,
            "good_l2_sq": r.good_l2_sq,
            "pb_outside": r.pb_outside,
            "weak_ratio": r.weak_ratio,
            "divergent_points": r.divergent_points,
            "constants": r.constants,
            "stages": r.stages,
            "passed": r.passed(),
        })).collect::<Vec<_>>(),
        "skipped_pipelines": skipped,
        "scan_passed": scan_ok,
        "pipelines_passed": pipelines_ok,
    });
    Ok(Report {
        command: "weaktype",
        passed: scan_ok && pipelines_ok,
        numerical_failure: divergent > 0,
        tables: vec![profiles, members_table, stages],
        summary,
        files: Vec::new(),
    })
}
