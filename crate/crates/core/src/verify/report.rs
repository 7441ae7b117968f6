//! BAR residuals, Palm identities and residual-moment bounds from one set of replicas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bar::{BarObserver, BarResidual, TestFunction};
use super::moments::{moment_bounds, ResidualObserver};
use super::palm::{palm_identities, IdentityCheck};
use crate::des::{run_stationary_with, RunSettings, StationaryOutput};
use crate::error::Result;
use crate::model::PrelimitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarLine {
    pub function: String,
    pub residual: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n: u64,
    pub events: u64,
    pub replicas: u32,
    pub bar: Vec<BarLine>,
    pub palm: Vec<IdentityCheck>,
    pub moments: Vec<IdentityCheck>,
    pub passed: bool,
}

/// Default `y` grid for the residual tail bounds.
pub const TAIL_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Runs `replicas` copies with BAR and residual observers attached; every
/// check allows 3 standard errors.
pub fn identity_report(
    cfg: &PrelimitConfig,
    settings: &RunSettings,
    replicas: u32,
    functions: &[TestFunction],
) -> Result<IdentityReport> {
    let parts: Vec<(StationaryOutput, BarObserver, ResidualObserver)> = (0..replicas.max(1))
        .into_par_iter()
        .map(|r| {
            let s = RunSettings {
                replica: settings.replica + r,
                ..*settings
            };
            let mut obs = (
                BarObserver::new(cfg.partition().clone(), functions.to_vec()),
                ResidualObserver::new(TAIL_GRID.to_vec()),
            );
            let out = run_stationary_with(cfg, &s, &mut obs)?;
            Ok((out, obs.0, obs.1))
        })
        .collect::<Result<_>>()?;
    let mut outputs = Vec::with_capacity(parts.len());
    let mut bar: Option<BarObserver> = None;
    let mut res: Option<ResidualObserver> = None;
    for (out, b, r) in parts {
        outputs.push(out);
        match bar.as_mut() {
            Some(m) => m.absorb(b),
            None => bar = Some(b),
        }
        match res.as_mut() {
            Some(m) => m.absorb(r),
            None => res = Some(r),
        }
    }
    let merged = StationaryOutput::merge(&outputs)?;
    let palm = merged.palm();
    let bar: Vec<BarLine> = bar
        .expect("at least one replica")
        .finish()
        .iter()
        .map(|r: &BarResidual| BarLine {
            function: r.function.to_string(),
            residual: r.residual.value,
            std_error: r.residual.std_error,
            z_score: r.z_score,
            passed: r.within(3.0),
        })
        .collect();
    let palm_checks = palm_identities(&palm, cfg);
    let moments = moment_bounds(cfg, palm.alpha_e, &res.expect("at least one replica"));
    let passed = bar.iter().all(|b| b.passed)
        && palm_checks.iter().all(|c| c.passed)
        && moments.iter().all(|c| c.passed);
    Ok(IdentityReport {
        n: cfg.n(),
        events: merged.summary.events,
        replicas: replicas.max(1),
        bar,
        palm: palm_checks,
        moments,
        passed,
    })
}
