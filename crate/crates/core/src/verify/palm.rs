//! Rate and boundary identities between the two Palm laws.

use serde::{Deserialize, Serialize};

use crate::des::PalmEstimates;
use crate::model::PrelimitConfig;
use crate::stats::Estimate;

/// Outcome of one identity or inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub passed: bool,
}

impl IdentityCheck {
    /// Two-sided: `|value - target| <= k · se`.
    pub fn equality(name: impl Into<String>, estimate: Estimate, target: f64, k: f64) -> Self {
        let z = (estimate.value - target) / estimate.std_error;
        Self {
            name: name.into(),
            value: estimate.value,
            target,
            std_error: estimate.std_error,
            z_score: z,
            passed: (estimate.value - target).abs() <= k * estimate.std_error,
        }
    }

    /// One-sided: `value <= bound + k · se`.
    pub fn upper_bound(
        name: impl Into<String>,
        value: f64,
        bound: f64,
        std_error: f64,
        k: f64,
    ) -> Self {
        Self {
            name: name.into(),
            value,
            target: bound,
            std_error,
            z_score: (value - bound) / std_error,
            passed: value <= bound + k * std_error,
        }
    }

    /// Deterministic inequality on point estimates.
    pub fn holds(name: impl Into<String>, value: f64, target: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            std_error: 0.0,
            z_score: f64::NAN,
            passed,
        }
    }
}

/// `α_e = α_d`, `min λ ≤ α ≤ max μ`, and `P_e[L(0-) = ℓ] = P_d[L(0) = ℓ]`
/// at every boundary length.
pub fn palm_identities(palm: &PalmEstimates, cfg: &PrelimitConfig) -> Vec<IdentityCheck> {
    let lo = cfg.min_arrival_rate();
    let hi = cfg.max_service_rate();
    let mut checks = vec![
        IdentityCheck::equality("alpha_e - alpha_d", palm.alpha_gap, 0.0, 3.0),
        IdentityCheck::holds(
            "min lambda <= alpha_e <= max mu",
            palm.alpha_e.value,
            lo,
            lo <= palm.alpha_e.value && palm.alpha_e.value <= hi,
        ),
        IdentityCheck::holds(
            "min lambda <= alpha_d <= max mu",
            palm.alpha_d.value,
            lo,
            lo <= palm.alpha_d.value && palm.alpha_d.value <= hi,
        ),
    ];
    for b in &palm.boundary {
        let se = b.arrival.std_error.hypot(b.departure.std_error);
        let gap = Estimate {
            value: b.arrival.value - b.departure.value,
            std_error: se,
            batches: b.arrival.batches,
        };
        checks.push(IdentityCheck::equality(
            format!("P_e[L(0-)={0}] - P_d[L(0)={0}]", b.length),
            gap,
            0.0,
            3.0,
        ));
    }
    checks
}
