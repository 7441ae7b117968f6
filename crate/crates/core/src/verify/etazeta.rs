//! Exponents `η(θ)`, `ζ(θ)` solving `e^θ E[e^{-η (T_A ∧ m)}] = 1` and
//! `e^{-θ} E[e^{-ζ (T_S ∧ m)}] = 1`.

use serde::{Deserialize, Serialize};

use crate::distributions::RenewalSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaZetaSolution {
    pub theta: f64,
    pub eta: f64,
    pub zeta: f64,
    /// Truncation level (`+∞` for the untruncated transforms).
    pub m: f64,
    /// `|e^θ E[e^{-η (T_A ∧ m)}] - 1|`.
    pub arrival_residual: f64,
    /// `|e^{-θ} E[e^{-ζ (T_S ∧ m)}] - 1|`.
    pub service_residual: f64,
}

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_EXPANSIONS: usize = 200;

/// `θ + ln E[e^{-s (T ∧ m)}]`, decreasing in `s`; overflow counts as `+∞`.
fn objective(spec: &RenewalSpec, m: f64, theta: f64, s: f64) -> Result<f64> {
    match spec.truncated_laplace(m, s) {
        Ok(v) => Ok(theta + v.ln()),
        Err(Error::Overflow { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Root `s` of `θ + ln E[e^{-s (T ∧ m)}] = 0`.
pub fn solve_exponent(spec: &RenewalSpec, m: f64, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    if !theta.is_finite() {
        return Err(Error::BracketFailure { theta });
    }
    let f = |s: f64| objective(spec, m, theta, s);
    // f(0) = θ; the root lies on the side of sign(θ).
    let (mut lo, mut hi);
    if theta > 0.0 {
        lo = 0.0;
        hi = theta.max(1e-300);
        let mut expansions = 0;
        while f(hi)? > 0.0 {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(Error::BracketFailure { theta });
            }
        }
    } else {
        hi = 0.0;
        let abscissa = spec.transform_abscissa();
        let bounded = m.is_finite() || abscissa == f64::NEG_INFINITY;
        let mut step = theta;
        lo = if bounded {
            step
        } else {
            step.max(0.5 * abscissa)
        };
        let mut expansions = 0;
        while f(lo)? < 0.0 {
            hi = lo;
            if bounded {
                step *= 2.0;
                lo = step;
            } else {
                // Approach the abscissa geometrically.
                lo = 0.5 * (lo + abscissa);
            }
            expansions += 1;
            if expansions > MAX_EXPANSIONS || !lo.is_finite() {
                return Err(Error::BracketFailure { theta });
            }
        }
    }
    // Invariant: f(lo) >= 0 >= f(hi).
    let (mut flo, mut fhi) = (f(lo)?, f(hi)?);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if (hi - lo) <= 1e-13 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    // Secant polish inside the final bracket.
    let mut best = if flo.abs() < fhi.abs() { lo } else { hi };
    if flo.is_finite() && fhi.is_finite() && flo != fhi {
        let s = lo - flo * (hi - lo) / (fhi - flo);
        if s > lo && s < hi && f(s)?.abs() <= f(best)?.abs() {
            best = s;
        }
    }
    Ok(best)
}

/// `η(θ)` and `ζ(θ)` at truncation `m` (`None` for untruncated).
pub fn solve_eta_zeta(
    arrival: &RenewalSpec,
    service: &RenewalSpec,
    m: Option<f64>,
    theta: f64,
) -> Result<EtaZetaSolution> {
    let m = m.unwrap_or(f64::INFINITY);
    let eta = solve_exponent(arrival, m, theta)?;
    let zeta = solve_exponent(service, m, -theta)?;
    let arrival_residual = (theta.exp() * arrival.truncated_laplace(m, eta)? - 1.0).abs();
    let service_residual = ((-theta).exp() * service.truncated_laplace(m, zeta)? - 1.0).abs();
    if arrival_residual > RESIDUAL_TOL || service_residual > RESIDUAL_TOL {
        return Err(Error::BracketFailure { theta });
    }
    Ok(EtaZetaSolution {
        theta,
        eta,
        zeta,
        m,
        arrival_residual,
        service_residual,
    })
}

/// Second-order expansion errors at scaling index `n`:
/// `|η(n^{-1/2}θ) - n^{-1/2}θ - σ_A² θ²/(2n)|` and
/// `|ζ(n^{-1/2}θ) + n^{-1/2}θ - σ_S² θ²/(2n)|`, with truncation `m = n^{1/2}`.
pub fn expansion_errors(
    arrival: &RenewalSpec,
    service: &RenewalSpec,
    n: f64,
    theta: f64,
) -> Result<(f64, f64)> {
    let root = n.sqrt();
    let sol = solve_eta_zeta(arrival, service, Some(root), theta / root)?;
    let second = theta * theta / (2.0 * n);
    let eta_err = (sol.eta - theta / root - arrival.variance() * second).abs();
    let zeta_err = (sol.zeta + theta / root - service.variance() * second).abs();
    Ok((eta_err, zeta_err))
}
