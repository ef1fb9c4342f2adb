pub mod bounds;
pub mod czd;
pub mod dyadic;
pub mod weaktype;

use hball_core::{FunctionSpec, IntegrableFunction};

use crate::{CliError, RunConfig};

const LABEL_FUNCTIONS: u64 = 0xF0;

/// Builds every family member, labelled by kind and position.
pub(crate) fn build_family(cfg: &RunConfig) -> Result<Vec<(FunctionSpec, IntegrableFunction)>, CliError> {
    cfg.family
        .members
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let f = spec
                .build(cfg.dimension, &cfg.sampler(LABEL_FUNCTIONS))
                .map_err(|e| CliError::Config(format!("family member {i}: {e}")))?;
            Ok((spec.clone(), f.with_label(format!("{}-{i}", spec.kind()))))
        })
        .collect()
}
