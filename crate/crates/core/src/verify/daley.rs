//! Pathwise decomposition `A(t) = t + R_A(t) - T(0) + M_A(t)` of a delayed
//! renewal counting process with unit-mean increments.
//!
//! Epochs are `t_1 = T(0)` and `t_{k+1} = t_k + T(k)`; `A(t) = #{k ≥ 1 : t_k ≤ t}`,
//! `R_A(t) = t_{A(t)+1} - t` and `M_A(t) = Σ_{j ≤ A(t)} (1 - T(j))`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::distributions::RenewalSpec;
use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Delay `T(0)` and increments `T(1), T(2), ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalTrace {
    pub delay: f64,
    pub increments: Vec<f64>,
    /// `t_1, ..., t_{len+1}` built with compensated sums.
    pub epochs: Vec<f64>,
    /// `M_A` just after each epoch: `martingale[k] = Σ_{j ≤ k} (1 - T(j))`.
    pub martingale: Vec<f64>,
}

impl RenewalTrace {
    pub fn new(delay: f64, increments: Vec<f64>) -> Self {
        let mut epochs = Vec::with_capacity(increments.len() + 1);
        let mut martingale = Vec::with_capacity(increments.len() + 1);
        let mut t = Compensated::default();
        let mut m = Compensated::default();
        t.add(delay);
        epochs.push(t.value());
        martingale.push(0.0);
        for &x in &increments {
            t.add(x);
            m.add(1.0 - x);
            epochs.push(t.value());
            martingale.push(m.value());
        }
        Self {
            delay,
            increments,
            epochs,
            martingale,
        }
    }

    /// Delay and `len` increments all drawn from `spec`.
    pub fn simulate<R: RngCore + ?Sized>(spec: &RenewalSpec, len: usize, rng: &mut R) -> Self {
        let delay = spec.sample(rng);
        let increments = (0..len).map(|_| spec.sample(rng)).collect();
        Self::new(delay, increments)
    }

    /// Largest `t` covered by the trace (`t_{len+1}`, exclusive).
    pub fn horizon(&self) -> f64 {
        *self.epochs.last().expect("at least the delay epoch")
    }

    /// `A(t)`; requires `t < horizon()`.
    pub fn count(&self, t: f64) -> usize {
        self.epochs.partition_point(|&e| e <= t)
    }

    pub fn residual(&self, t: f64) -> f64 {
        self.epochs[self.count(t)] - t
    }

    pub fn martingale_at(&self, t: f64) -> f64 {
        self.martingale[self.count(t)]
    }

    /// `A(t) - (t + R_A(t) - T(0) + M_A(t))`.
    pub fn violation(&self, t: f64) -> f64 {
        let a = self.count(t);
        let m = self.martingale[a];
        let residual = self.epochs[a] - t;
        let mut rhs = Compensated::default();
        rhs.add(t);
        rhs.add(residual);
        rhs.add(-self.delay);
        rhs.add(m);
        a as f64 - rhs.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaleyReport {
    pub points: usize,
    pub max_violation: f64,
    pub worst_t: f64,
}

/// Checks the identity at every epoch, just before it, and at the midpoint
/// of every inter-epoch gap; the first point above `tol` is an error.
pub fn daley_miyazawa_check(trace: &RenewalTrace, tol: f64) -> Result<DaleyReport> {
    let mut report = DaleyReport {
        points: 0,
        max_violation: 0.0,
        worst_t: 0.0,
    };
    let mut probe = |t: f64| -> Result<()> {
        if !(t >= 0.0 && t < trace.horizon()) {
            return Ok(());
        }
        let v = trace.violation(t).abs();
        report.points += 1;
        if v > report.max_violation {
            report.max_violation = v;
            report.worst_t = t;
        }
        if v > tol {
            return Err(Error::IdentityViolation { t, violation: v });
        }
        Ok(())
    };
    probe(0.0)?;
    for w in trace.epochs.windows(2) {
        probe(w[0])?;
        probe(f64::from_bits(w[0].to_bits() - 1))?;
        probe(0.5 * (w[0] + w[1]))?;
    }
    Ok(report)
}
