//! Tail and moment bounds for the stationary residual clocks.
//!
//! With `m_λ = min λ_i`, `m_μ = min μ_i`:
//!
//! * `P[R_e > y] ≤ α_e E[(T_A - y)^+] / m_λ`
//! * `P[R_d > y] ≤ (μ_1 P[T_S > y] + α_e E[(T_S - y)^+]) / m_μ`
//! * `(k+1) E[R_e^k] ≤ α_e E[T_A^{k+1}] / m_λ`
//! * `(k+1) E[R_d^k] ≤ (k+1) E[T_S^k] + α_e E[T_S^{k+1}] / m_μ`
//!
//! The left sides are time averages, integrated exactly along each linear
//! drain.

use rayon::prelude::*;

use super::palm::IdentityCheck;
use crate::des::{run_stationary_with, EventRecord, Observer, RunSettings, StationaryOutput};
use crate::error::Result;
use crate::model::PrelimitConfig;
use crate::stats::Estimate;

/// Time spent above `y` while a clock drains from `start` at `rate` for `dt`.
#[inline]
fn time_above(start: f64, rate: f64, dt: f64, y: f64) -> f64 {
    if start <= y {
        0.0
    } else if rate == 0.0 {
        dt
    } else {
        ((start - y) / rate).min(dt)
    }
}

/// `∫ x(t)^k dt` for `x` draining from `start` to `end` at `rate` over `dt`.
#[inline]
fn power_integral(start: f64, end: f64, rate: f64, dt: f64, k: i32) -> f64 {
    if rate == 0.0 {
        start.powi(k) * dt
    } else {
        (start.powi(k + 1) - end.max(0.0).powi(k + 1)) / ((k + 1) as f64 * rate)
    }
}

#[derive(Debug, Clone, Default)]
struct Batch {
    time: f64,
    tail_e: Vec<f64>,
    tail_d: Vec<f64>,
    moment_e: [f64; 2],
    moment_d: [f64; 2],
}

/// Accumulates tails on a `y` grid and the first two moments of `R_e`, `R_d`.
#[derive(Debug, Clone)]
pub struct ResidualObserver {
    grid: Vec<f64>,
    current: Batch,
    batches: Vec<Batch>,
}

impl ResidualObserver {
    pub fn new(grid: Vec<f64>) -> Self {
        let current = Batch {
            tail_e: vec![0.0; grid.len()],
            tail_d: vec![0.0; grid.len()],
            ..Batch::default()
        };
        Self {
            grid,
            current,
            batches: Vec::new(),
        }
    }

    pub fn absorb(&mut self, other: ResidualObserver) {
        self.batches.extend(other.batches);
    }

    fn estimate(&self, part: impl Fn(&Batch) -> f64) -> Estimate {
        let time: f64 = self.batches.iter().map(|b| b.time).sum();
        let pooled = self.batches.iter().map(&part).sum::<f64>() / time;
        let per: Vec<f64> = self.batches.iter().map(|b| part(b) / b.time).collect();
        Estimate::from_batches(pooled, &per)
    }

    pub fn arrival_tail(&self, j: usize) -> Estimate {
        self.estimate(|b| b.tail_e[j])
    }

    pub fn service_tail(&self, j: usize) -> Estimate {
        self.estimate(|b| b.tail_d[j])
    }

    /// `E[R_e^k]`, `k ∈ {1, 2}`.
    pub fn arrival_moment(&self, k: usize) -> Estimate {
        self.estimate(|b| b.moment_e[k - 1])
    }

    pub fn service_moment(&self, k: usize) -> Estimate {
        self.estimate(|b| b.moment_d[k - 1])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

impl Observer for ResidualObserver {
    fn on_event(&mut self, r: &EventRecord) {
        let b = &mut self.current;
        b.time += r.dt;
        for (j, &y) in self.grid.iter().enumerate() {
            b.tail_e[j] += time_above(r.re_start, r.arrival_rate, r.dt, y);
            b.tail_d[j] += time_above(r.rd_start, r.service_rate, r.dt, y);
        }
        for k in 1..=2 {
            b.moment_e[k - 1] +=
                power_integral(r.re_start, r.re_before, r.arrival_rate, r.dt, k as i32);
            b.moment_d[k - 1] +=
                power_integral(r.rd_start, r.rd_before, r.service_rate, r.dt, k as i32);
        }
    }

    fn on_batch_end(&mut self) {
        let fresh = Batch {
            tail_e: vec![0.0; self.grid.len()],
            tail_d: vec![0.0; self.grid.len()],
            ..Batch::default()
        };
        self.batches
            .push(std::mem::replace(&mut self.current, fresh));
    }
}

/// Stationary run with residual statistics attached.
pub fn run_with_residuals(
    cfg: &PrelimitConfig,
    settings: &RunSettings,
    replicas: u32,
    grid: &[f64],
) -> Result<(StationaryOutput, ResidualObserver)> {
    let parts: Vec<(StationaryOutput, ResidualObserver)> = (0..replicas.max(1))
        .into_par_iter()
        .map(|r| {
            let s = RunSettings {
                replica: settings.replica + r,
                ..*settings
            };
            let mut obs = ResidualObserver::new(grid.to_vec());
            let out = run_stationary_with(cfg, &s, &mut obs)?;
            Ok((out, obs))
        })
        .collect::<Result<_>>()?;
    let outputs: Vec<StationaryOutput> = parts.iter().map(|p| p.0.clone()).collect();
    let mut iter = parts.into_iter().map(|p| p.1);
    let mut merged = iter.next().expect("at least one replica");
    for p in iter {
        merged.absorb(p);
    }
    Ok((StationaryOutput::merge(&outputs)?, merged))
}

/// Checks every bound one-sidedly, allowing `3·se` of sampling error.
pub fn moment_bounds(
    cfg: &PrelimitConfig,
    alpha_e: Estimate,
    obs: &ResidualObserver,
) -> Vec<IdentityCheck> {
    let ta = cfg.arrival_spec();
    let ts = cfg.service_spec();
    let min_l = cfg.min_arrival_rate();
    let min_m = cfg.min_service_rate();
    let mu1 = cfg.service_rates()[0];
    let a = alpha_e.value;
    let mut checks = Vec::new();
    let combined = |lhs: Estimate, coef: f64| lhs.std_error.hypot(coef * alpha_e.std_error);

    for (j, &y) in obs.grid().iter().enumerate() {
        let lhs = obs.arrival_tail(j);
        let coef = ta.excess_mean(y) / min_l;
        checks.push(IdentityCheck::upper_bound(
            format!("P[R_e > {y}]"),
            lhs.value,
            a * coef,
            combined(lhs, coef),
            3.0,
        ));
        let lhs = obs.service_tail(j);
        let coef = ts.excess_mean(y) / min_m;
        checks.push(IdentityCheck::upper_bound(
            format!("P[R_d > {y}]"),
            lhs.value,
            mu1 * ts.survival(y) / min_m + a * coef,
            combined(lhs, coef),
            3.0,
        ));
    }
    for k in 1..=2u32 {
        let kf = f64::from(k + 1);
        let lhs = obs.arrival_moment(k as usize).scaled(kf);
        let coef = ta.raw_moment(k + 1) / min_l;
        checks.push(IdentityCheck::upper_bound(
            format!("{kf} E[R_e^{k}]"),
            lhs.value,
            a * coef,
            combined(lhs, coef),
            3.0,
        ));
        let lhs = obs.service_moment(k as usize).scaled(kf);
        let coef = ts.raw_moment(k + 1) / min_m;
        checks.push(IdentityCheck::upper_bound(
            format!("{kf} E[R_d^{k}]"),
            lhs.value,
            kf * ts.raw_moment(k) + a * coef,
            combined(lhs, coef),
            3.0,
        ));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drain_integrals() {
        assert_eq!(time_above(2.0, 2.0, 1.0, 1.0), 0.5);
        assert_eq!(time_above(2.0, 0.0, 1.0, 1.0), 1.0);
        assert_eq!(time_above(0.5, 2.0, 0.1, 1.0), 0.0);
        // ∫_0^1 (2 - t)^2 dt = 7/3
        assert!((power_integral(2.0, 1.0, 1.0, 1.0, 2) - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(power_integral(3.0, 3.0, 0.0, 2.0, 1), 6.0);
    }
}
