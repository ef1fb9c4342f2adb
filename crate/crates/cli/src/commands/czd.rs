//! Calderón–Zygmund decomposition of every family member at every threshold.

use std::sync::Arc;

use hball_core::czd::{
    clause_ii_check, clause_iii_check, good_l2_bound_check, mass_check, maximality_check, mean_zero_check, omega_prime,
    reconstruction_check, ClauseCheck,
};
use hball_core::dyadic::check_points;
use hball_core::{decompose, CzdError, DecomposeOptions, DyadicSystem};
use serde_json::json;

use super::build_family;
use crate::report::{num, Report, Table};
use crate::{CliError, RunConfig};

const LABEL_DECOMPOSE: u64 = 1;
const LABEL_CLAUSE: u64 = 2;
const LABEL_L2: u64 = 3;
const LABEL_OMEGA: u64 = 4;

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let sys = Arc::new(DyadicSystem::build(cfg.dyadic_config()).map_err(|e| CliError::Config(e.to_string()))?);
    let family = build_family(cfg)?;
    let c = &cfg.czd;
    let opts = DecomposeOptions {
        samples: c.samples,
        max_samples: c.max_samples,
        sigma: c.sigma,
        sampler: cfg.sampler(LABEL_DECOMPOSE),
        max_level: None,
    };
    let pts = check_points(cfg.dimension, c.reconstruction_points, cfg.seed);

    let mut checks = Table::new(
        "czd_checks",
        &[
            "seed",
            "member",
            "kind",
            "parameter",
            "t",
            "samples",
            "check",
            "checked",
            "violations",
            "worst_margin",
            "pass",
            "detail",
        ],
    );
    let mut cubes = Table::new(
        "czd_cubes",
        &[
            "seed",
            "member",
            "t",
            "level",
            "index",
            "measure",
            "average",
            "average_stderr",
            "bad_integral",
            "bad_stderr",
        ],
    );
    let mut runs = Vec::new();
    let mut passed = true;
    for (m, (spec, f)) in family.iter().enumerate() {
        for &t in &c.thresholds {
            let mut row = |check: &ClauseCheck, samples: usize| {
                checks.push(vec![
                    cfg.seed.to_string(),
                    m.to_string(),
                    spec.kind().into(),
                    num(spec.parameter()),
                    num(t),
                    samples.to_string(),
                    check.name.clone(),
                    check.checked.to_string(),
                    check.violations.to_string(),
                    num(check.worst_margin),
                    check.passed().to_string(),
                    check.detail.clone(),
                ]);
            };
            let dec = match decompose(f, t, &sys, &opts) {
                Ok(d) => d,
                Err(CzdError::ThresholdBelowNorm { l1, .. }) => {
                    // λ(t) ≤ 1 ≤ ‖f‖₁/t needs no decomposition
                    let note = ClauseCheck {
                        name: "below-norm".into(),
                        checked: 0,
                        violations: 0,
                        worst_margin: l1 - t,
                        detail: format!("t = {t} < ‖f‖₁ = {l1}; rejected"),
                    };
                    row(&note, 0);
                    runs.push(json!({ "member": m, "t": t, "rejected": note.detail }));
                    continue;
                }
                Err(e) => return Err(hball_core::Error::from(e).into()),
            };
            let split = hball_core::czd::good_bad_split(&dec, f).map_err(hball_core::Error::from)?;
            let clause_ii = clause_ii_check(&dec, &cfg.sampler(LABEL_CLAUSE), c.clause_samples, c.sigma)
                .map_err(hball_core::Error::from)?;
            let (mean_zero, rows) =
                mean_zero_check(&dec, c.mean_zero_samples, c.sigma).map_err(hball_core::Error::from)?;
            let l2 = good_l2_bound_check(
                &split.good,
                dec.l1_norm.value,
                t,
                dec.c1_used,
                &cfg.sampler(LABEL_L2),
                c.measure_samples,
            )
            .map_err(hball_core::Error::from)?;
            let l2_check = ClauseCheck {
                name: "good-l2".into(),
                checked: 1,
                violations: usize::from(!(l2.pass && l2.lhs.value < l2.rhs)),
                worst_margin: l2.rhs - l2.lhs.value,
                detail: format!("‖g‖₂² = {:?}, bound {}", l2.lhs, l2.rhs),
            };
            let op = omega_prime(&dec, &cfg.sampler(LABEL_OMEGA), c.measure_samples);
            let results = [
                (clause_iii_check(&dec, c.sigma), c.samples),
                (maximality_check(&dec, c.sigma), c.samples),
                (mass_check(&dec, c.sigma), c.samples),
                (clause_ii, c.clause_samples),
                (mean_zero, c.mean_zero_samples),
                (reconstruction_check(&split, f, &pts), pts.len()),
                (l2_check, c.measure_samples),
            ];
            for (check, samples) in &results {
                row(check, *samples);
                passed &= check.passed();
            }
            for (s, z) in dec.stopping.iter().zip(&rows) {
                cubes.push(vec![
                    cfg.seed.to_string(),
                    m.to_string(),
                    num(t),
                    s.stats.id.level.to_string(),
                    s.stats.id.index.to_string(),
                    num(s.stats.measure.value),
                    num(s.stats.average.value),
                    num(s.stats.average.stderr),
                    num(z.integral.value.norm()),
                    num(z.combined_stderr),
                ]);
            }
            runs.push(json!({
                "member": m,
                "kind": spec.kind(),
                "t": t,
                "l1_norm": dec.l1_norm.value,
                "stopping_cubes": dec.stopping.len(),
                "omega_measure": dec.omega_measure,
                "omega_prime_measure": op.measure,
                "c1": dec.c1_used,
                "c3_empirical": op.c3_empirical,
                "c3_geometric": op.c3_geometric,
                "good_l2": { "lhs": l2.lhs, "rhs": l2.rhs },
                "ambiguous": dec.ambiguous,
                "failed": results.iter().filter(|(c, _)| !c.passed()).map(|(c, _)| c.name.clone()).collect::<Vec<_>>(),
            }));
        }
    }
    Ok(Report {
        command: "czd",
        passed,
        numerical_failure: false,
        tables: vec![checks, cubes],
        summary: json!({ "family": cfg.family.name, "runs": runs }),
        files: Vec::new(),
    })
}
