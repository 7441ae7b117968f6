//! Heavy-traffic limit of the scaled stationary queue length.
//!
//! The density is a mixture `h = Σ d_i h_i` where `h_i` is uniform on a level
//! with zero drift, a truncated exponential on a bounded level with nonzero
//! drift and an exponential tail on the top level. [`GibbsDensity`] evaluates
//! the same law from `exp(∫_0^x β) / (C σ²(x))` and is kept independent of the
//! mixture code so the two can be cross-checked.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeavyTrafficModel, LevelPartition};
use crate::quad;

/// `|β|` below this is treated as exactly zero drift.
pub const ZERO_BETA: f64 = 1e-12;

/// `ln |e^x - 1|` without overflow or cancellation.
fn ln_abs_expm1(x: f64) -> f64 {
    if x > 0.0 {
        x + (-(-x).exp_m1()).ln()
    } else {
        (-x.exp_m1()).ln()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized law of one level.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Uniform { lo: f64, width: f64 },
    Truncated { lo: f64, width: f64, beta: f64 },
    Tail { lo: f64, beta: f64 },
}

impl Piece {
    fn pdf(&self, x: f64) -> f64 {
        match *self {
            Piece::Uniform { width, .. } => 1.0 / width,
            Piece::Truncated { lo, width, beta } if beta > 0.0 => {
                beta * (beta * (x - lo - width)).exp() / -(-beta * width).exp_m1()
            }
            Piece::Truncated { lo, width, beta } => {
                beta * (beta * (x - lo)).exp() / (beta * width).exp_m1()
            }
            Piece::Tail { lo, beta } => -beta * (beta * (x - lo)).exp(),
        }
    }

    /// Piece CDF, clamped to `[0, 1]` outside the level.
    fn cdf(&self, x: f64) -> f64 {
        let lo = match *self {
            Piece::Uniform { lo, .. } | Piece::Truncated { lo, .. } | Piece::Tail { lo, .. } => lo,
        };
        if x <= lo {
            return 0.0;
        }
        let y = x - lo;
        match *self {
            Piece::Uniform { width, .. } => (y / width).min(1.0),
            Piece::Truncated { width, beta, .. } => {
                if y >= width {
                    1.0
                } else if beta > 0.0 {
                    (beta * (y - width)).exp() * -(-beta * y).exp_m1() / -(-beta * width).exp_m1()
                } else {
                    (beta * y).exp_m1() / (beta * width).exp_m1()
                }
            }
            Piece::Tail { beta, .. } => -(beta * y).exp_m1(),
        }
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            Piece::Uniform { lo, width } => lo + u * width,
            Piece::Truncated { lo, width, beta } if beta > 0.0 => {
                lo + width + (u + (1.0 - u) * (-beta * width).exp()).ln() / beta
            }
            Piece::Truncated { lo, width, beta } => {
                lo + (u * (beta * width).exp_m1()).ln_1p() / beta
            }
            Piece::Tail { lo, beta } => lo + (-u).ln_1p() / beta,
        }
    }

    /// `E[X^k]`, `k ∈ {1, 2}`, for `X` distributed as this piece.
    fn moment(&self, k: u32) -> f64 {
        let (lo, m1, m2) = match *self {
            Piece::Uniform { lo, width } => (lo, width / 2.0, width * width / 3.0),
            Piece::Truncated { lo, width, beta } => {
                let (g1, g2) = truncated_exp_unit_moments(beta * width);
                (lo, width * g1, width * width * g2)
            }
            Piece::Tail { lo, beta } => {
                let r = -beta;
                (lo, 1.0 / r, 2.0 / (r * r))
            }
        };
        match k {
            1 => lo + m1,
            _ => lo * lo + 2.0 * lo * m1 + m2,
        }
    }
}

/// First two moments of `U` on `[0, 1]` with density `x e^{xu} / (e^x - 1)`.
fn truncated_exp_unit_moments(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        let norm = x / x.exp_m1();
        let m1 = quad::integrate(|u| u * (x * u).exp() * norm, 0.0, 1.0, 1e-16, 1e-15);
        let m2 = quad::integrate(|u| u * u * (x * u).exp() * norm, 0.0, 1.0, 1e-16, 1e-15);
        return (m1, m2);
    }
    let q = -(-x).exp_m1();
    let g1 = 1.0 / q - 1.0 / x;
    let g2 = ((1.0 - 2.0 / x + 2.0 / (x * x)) - 2.0 * (-x).exp() / (x * x)) / q;
    (g1, g2)
}

/// Coefficients for audit output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCoefficients {
    pub levels: Vec<f64>,
    pub drifts: Vec<f64>,
    pub variances: Vec<f64>,
    pub beta: Vec<f64>,
    pub xi: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

fn validate_inputs(partition: &LevelPartition, drifts: &[f64], variances: &[f64]) -> Result<()> {
    let k = partition.level_count();
    if drifts.len() != k || variances.len() != k {
        return Err(Error::InvalidParameter(format!(
            "expected {k} drifts and variances, got {} and {}",
            drifts.len(),
            variances.len()
        )));
    }
    if drifts.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidParameter("drifts must be finite".into()));
    }
    if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidParameter(
            "variances must be positive and finite".into(),
        ));
    }
    if !(drifts[k - 1] < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "top drift b_K = {} must be negative",
            drifts[k - 1]
        )));
    }
    Ok(())
}

/// The limit law `ν` with its mixture coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDistribution {
    partition: LevelPartition,
    drifts: Vec<f64>,
    variances: Vec<f64>,
    beta: Vec<f64>,
    log_xi: Vec<f64>,
    log_abs_c: Vec<f64>,
    d: Vec<f64>,
    prefix: Vec<f64>,
    pieces: Vec<Piece>,
}

impl LimitDistribution {
    pub fn from_model(model: &HeavyTrafficModel) -> Result<Self> {
        Self::new(
            model.params.partition().clone(),
            model.params.drifts(),
            model.variances(),
        )
    }

    /// Builds `ν` from thresholds, drifts `b_i` and variances `σ_i²`.
    pub fn new(partition: LevelPartition, drifts: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        validate_inputs(&partition, &drifts, &variances)?;
        let k = partition.level_count();
        let beta: Vec<f64> = drifts
            .iter()
            .zip(&variances)
            .map(|(b, v)| 2.0 * b / v)
            .collect();

        let mut log_xi = Vec::with_capacity(k + 1);
        log_xi.push(0.0);
        for i in 1..k {
            let width = partition.upper(i) - partition.lower(i);
            log_xi.push(log_xi[i - 1] + beta[i - 1] * width);
        }
        log_xi.push(f64::NEG_INFINITY);

        let mut log_abs_c = Vec::with_capacity(k);
        let mut pieces = Vec::with_capacity(k);
        for i in 1..=k {
            let (b, bt, v) = (drifts[i - 1], beta[i - 1], variances[i - 1]);
            let lo = partition.lower(i);
            if i == k {
                log_abs_c.push(log_xi[k - 1] - (-b).ln());
                pieces.push(Piece::Tail { lo, beta: bt });
                continue;
            }
            let width = partition.upper(i) - lo;
            if bt.abs() < ZERO_BETA {
                log_abs_c.push((2.0 * width / v).ln() + log_xi[i - 1]);
                pieces.push(Piece::Uniform { lo, width });
            } else {
                log_abs_c.push(ln_abs_expm1(bt * width) - b.abs().ln() + log_xi[i - 1]);
                pieces.push(Piece::Truncated {
                    lo,
                    width,
                    beta: bt,
                });
            }
        }

        let log_total = log_sum_exp(&log_abs_c);
        let d: Vec<f64> = log_abs_c.iter().map(|l| (l - log_total).exp()).collect();
        let mut prefix = Vec::with_capacity(k + 1);
        prefix.push(0.0);
        for (i, di) in d.iter().enumerate() {
            prefix.push(prefix[i] + di);
        }

        Ok(Self {
            partition,
            drifts,
            variances,
            beta,
            log_xi,
            log_abs_c,
            d,
            prefix,
            pieces,
        })
    }

    pub fn partition(&self) -> &LevelPartition {
        &self.partition
    }

    pub fn level_count(&self) -> usize {
        self.partition.level_count()
    }

    pub fn drifts(&self) -> &[f64] {
        &self.drifts
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `β_i = 2 b_i / σ_i²`.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// `ξ_0, ..., ξ_K`; may overflow to `+∞` for extreme parameters.
    pub fn xi(&self) -> Vec<f64> {
        self.log_xi.iter().map(|l| l.exp()).collect()
    }

    pub fn log_xi(&self) -> &[f64] {
        &self.log_xi
    }

    /// `c_1, ..., c_K` (all negative).
    pub fn c(&self) -> Vec<f64> {
        self.log_abs_c.iter().map(|l| -l.exp()).collect()
    }

    /// Level masses `d_1, ..., d_K`.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn coefficients(&self) -> LimitCoefficients {
        LimitCoefficients {
            levels: self.partition.boundaries().to_vec(),
            drifts: self.drifts.clone(),
            variances: self.variances.clone(),
            beta: self.beta.clone(),
            xi: self.xi(),
            c: self.c(),
            d: self.d.clone(),
        }
    }

    /// Per-level density `h_i(x)` (zero off `S_i`).
    pub fn level_pdf(&self, level: usize, x: f64) -> f64 {
        if x < 0.0 || self.partition.index_of(x) + 1 != level {
            return 0.0;
        }
        self.pieces[level - 1].pdf(x)
    }

    /// Density `h(x)`; zero for `x < 0`.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(x >= 0.0) || x.is_infinite() {
            return 0.0;
        }
        let i = self.partition.index_of(x);
        self.d[i] * self.pieces[i].pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        if x.is_infinite() {
            return 1.0;
        }
        let i = self.partition.index_of(x);
        (self.prefix[i] + self.d[i] * self.pieces[i].cdf(x)).min(1.0)
    }

    /// Conditional CDF of `ν_i`, the law restricted to `S_i`.
    pub fn level_cdf(&self, level: usize, x: f64) -> f64 {
        self.pieces[level - 1].cdf(x)
    }

    /// Smallest `x` with `F(x) >= p`, by bisection to an absolute width of `1e-12`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::QuantileDomain(p));
        }
        let mut lo = 0.0;
        let mut hi = self.partition.lower(self.level_count()).max(1.0);
        while self.cdf(hi) < p {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// `E[X^k]` for `k ∈ {0, 1, 2}`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        match k {
            0 => Ok(1.0),
            1 | 2 => Ok(self
                .d
                .iter()
                .zip(&self.pieces)
                .map(|(d, p)| d * p.moment(k))
                .sum()),
            _ => Err(Error::InvalidParameter(format!(
                "moment order {k} not supported (k <= 2)"
            ))),
        }
    }

    pub fn mean(&self) -> f64 {
        self.d
            .iter()
            .zip(&self.pieces)
            .map(|(d, p)| d * p.moment(1))
            .sum()
    }

    /// Draws a level by its mass, then inverts that level's CDF.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = unit_open(rng);
        let mut i = self.prefix[1..]
            .partition_point(|&c| c < u)
            .min(self.d.len() - 1);
        while self.d[i] == 0.0 && i + 1 < self.d.len() {
            i += 1;
        }
        self.pieces[i].inverse_cdf(unit_open(rng))
    }

    /// `l_{K-1} + 50/|β_K|`: right end beyond which the tail mass is below `e^{-50}`.
    pub fn quadrature_upper(&self) -> f64 {
        let k = self.level_count();
        self.partition.lower(k) + 50.0 / self.beta[k - 1].abs()
    }
}

fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    // 53 random bits mapped to the open interval (0, 1).
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `h(x) = exp(∫_0^x β(y) dy) / (C σ²(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDensity {
    partition: LevelPartition,
    beta: Vec<f64>,
    variances: Vec<f64>,
    /// `∫_0^{l_{i-1}} β` for each level.
    offsets: Vec<f64>,
    log_c: f64,
}

impl GibbsDensity {
    pub fn from_model(model: &HeavyTrafficModel) -> Result<Self> {
        Self::new(
            model.params.partition().clone(),
            &model.params.drifts(),
            &model.variances(),
        )
    }

    pub fn new(partition: LevelPartition, drifts: &[f64], variances: &[f64]) -> Result<Self> {
        validate_inputs(&partition, drifts, variances)?;
        let k = partition.level_count();
        let beta: Vec<f64> = drifts
            .iter()
            .zip(variances)
            .map(|(b, v)| 2.0 * b / v)
            .collect();
        let mut offsets = vec![0.0; k];
        for i in 1..k {
            let width = partition.upper(i) - partition.lower(i);
            offsets[i] = offsets[i - 1] + beta[i - 1] * width;
        }
        // Segment integrals ∫_{S_i} e^{I(x)} / σ_i² dx in log form.
        let mut terms = Vec::with_capacity(k);
        for i in 0..k {
            let base = offsets[i] - variances[i].ln();
            let log_segment = if i == k - 1 {
                -(-beta[i]).ln()
            } else {
                let width = partition.upper(i + 1) - partition.lower(i + 1);
                if beta[i].abs() < ZERO_BETA {
                    width.ln()
                } else {
                    ln_abs_expm1(beta[i] * width) - beta[i].abs().ln()
                }
            };
            terms.push(base + log_segment);
        }
        let log_c = log_sum_exp(&terms);
        Ok(Self {
            partition,
            beta,
            variances: variances.to_vec(),
            offsets,
            log_c,
        })
    }

    /// Normalizing constant `C`.
    pub fn normalizer(&self) -> f64 {
        self.log_c.exp()
    }

    /// `∫_0^x β(y) dy`.
    pub fn log_weight(&self, x: f64) -> f64 {
        let i = self.partition.index_of(x);
        self.offsets[i] + self.beta[i] * (x - self.partition.lower(i + 1))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(x >= 0.0) || x.is_infinite() {
            return 0.0;
        }
        let i = self.partition.index_of(x);
        (self.log_weight(x) - self.log_c).exp() / self.variances[i]
    }
}
