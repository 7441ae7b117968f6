//! Unit-mean renewal increment laws.
//!
//! Every family is parameterized so that `E[T] = 1`. Besides sampling, the
//! module provides exact transforms and moments of the truncated variable
//! `T ∧ m`, which the η/ζ solver and the moment-bound checks consume.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// What a stream is used for; part of the documented stream-id layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    ArrivalClock = 1,
    ServiceClock = 2,
    Diffusion = 3,
    LimitSampling = 4,
    RenewalTrace = 5,
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids give non-overlapping keystreams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream id layout: `purpose << 56 | group << 32 | replica`.
    ///
    /// `group` is the sweep-point index (one per scaling index `n`).
    pub fn derive(master_seed: u64, purpose: StreamPurpose, group: u32, replica: u32) -> Self {
        let group = u64::from(group) & 0x00ff_ffff;
        let id = (purpose as u64) << 56 | group << 32 | u64::from(replica);
        Self::new(master_seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Unit-mean renewal increment distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RenewalSpec {
    Exponential,
    Deterministic,
    /// Erlang with `k` phases, each of rate `k`.
    Erlang {
        k: u32,
    },
    /// Mixture: rate `r1` w.p. `p`, rate `r2` otherwise, with `p/r1 + (1-p)/r2 = 1`.
    Hyperexponential {
        p: f64,
        r1: f64,
        r2: f64,
    },
    /// Uniform on `[a, b]` with `a + b = 2`.
    Uniform {
        a: f64,
        b: f64,
    },
}

const MEAN_TOL: f64 = 1e-12;

impl RenewalSpec {
    pub fn erlang(k: u32) -> Result<Self> {
        Self::Erlang { k }.validated()
    }

    /// Hyperexponential with the second rate solved from the unit-mean constraint.
    pub fn hyperexponential(p: f64, r1: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || !(r1 > 0.0) || p / r1 >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "hyperexponential needs 0 < p < 1, r1 > 0 and p/r1 < 1 (p = {p}, r1 = {r1})"
            )));
        }
        let r2 = (1.0 - p) / (1.0 - p / r1);
        Self::Hyperexponential { p, r1, r2 }.validated()
    }

    /// Uniform on `[1 - w, 1 + w]`, `0 < w < 1`.
    pub fn uniform(half_width: f64) -> Result<Self> {
        Self::Uniform {
            a: 1.0 - half_width,
            b: 1.0 + half_width,
        }
        .validated()
    }

    /// Checks the unit-mean and positivity constraints.
    pub fn validated(self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Self::Exponential | Self::Deterministic => Ok(self),
            Self::Erlang { k: 0 } => bad("erlang needs k >= 1".into()),
            Self::Erlang { .. } => Ok(self),
            Self::Hyperexponential { p, r1, r2 } => {
                if !(p > 0.0 && p < 1.0 && r1 > 0.0 && r2 > 0.0) {
                    return bad(format!(
                        "hyperexponential parameters out of range: {self:?}"
                    ));
                }
                let mean = p / r1 + (1.0 - p) / r2;
                if (mean - 1.0).abs() > MEAN_TOL {
                    return bad(format!("hyperexponential mean is {mean}, not 1"));
                }
                Ok(self)
            }
            Self::Uniform { a, b } => {
                if !(a > 0.0 && a < b) {
                    return bad(format!("uniform needs 0 < a < b (a = {a}, b = {b})"));
                }
                if (0.5 * (a + b) - 1.0).abs() > MEAN_TOL {
                    return bad(format!("uniform mean is {}, not 1", 0.5 * (a + b)));
                }
                Ok(self)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Exponential => 1.0,
            Self::Deterministic => 0.0,
            Self::Erlang { k } => 1.0 / f64::from(k),
            Self::Hyperexponential { p, r1, r2 } => {
                2.0 * (p / (r1 * r1) + (1.0 - p) / (r2 * r2)) - 1.0
            }
            Self::Uniform { a, b } => (b - a).powi(2) / 12.0,
        }
    }

    /// Smallest `s` for which the untruncated transform `E[e^{-sT}]` is finite.
    pub fn transform_abscissa(&self) -> f64 {
        match *self {
            Self::Exponential => -1.0,
            Self::Erlang { k } => -f64::from(k),
            Self::Hyperexponential { r1, r2, .. } => -r1.min(r2),
            Self::Deterministic | Self::Uniform { .. } => f64::NEG_INFINITY,
        }
    }

    /// Draws one strictly positive increment.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = match *self {
                Self::Exponential => Exp1.sample(rng),
                Self::Deterministic => 1.0,
                Self::Erlang { k } => {
                    let shape = f64::from(k);
                    Gamma::new(shape, 1.0 / shape)
                        .expect("validated erlang shape")
                        .sample(rng)
                }
                Self::Hyperexponential { p, r1, r2 } => {
                    let e: f64 = Exp1.sample(rng);
                    if rng.random::<f64>() < p {
                        e / r1
                    } else {
                        e / r2
                    }
                }
                Self::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            };
            if x > 0.0 {
                return x;
            }
        }
    }

    /// `P[T > y]`.
    pub fn survival(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential => (-y).exp(),
            Self::Deterministic => {
                if y < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Erlang { k } => gamma_upper_regularized_int(k, f64::from(k) * y),
            Self::Hyperexponential { p, r1, r2 } => {
                p * (-r1 * y).exp() + (1.0 - p) * (-r2 * y).exp()
            }
            Self::Uniform { a, b } => ((b - y) / (b - a)).clamp(0.0, 1.0),
        }
    }

    /// `E[(T - y) 1(T > y)]`, i.e. `∫_y^∞ P[T > u] du`.
    pub fn excess_mean(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        match *self {
            Self::Exponential => (-y).exp(),
            Self::Deterministic => (1.0 - y).max(0.0),
            Self::Erlang { k } => {
                let rate = f64::from(k);
                let x = rate * y;
                // ∫_y^∞ Q(k, k u) du = (1/k) Σ_{i<k} Σ_{j<=i} e^{-x} x^j / j!
                let mut term = (-x).exp();
                let mut partial = 0.0;
                let mut total = 0.0;
                for j in 0..k {
                    if j > 0 {
                        term *= x / f64::from(j);
                    }
                    partial += term;
                    total += partial;
                }
                total / rate
            }
            Self::Hyperexponential { p, r1, r2 } => {
                p * (-r1 * y).exp() / r1 + (1.0 - p) * (-r2 * y).exp() / r2
            }
            Self::Uniform { a, b } => {
                if y <= a {
                    1.0 - y
                } else if y >= b {
                    0.0
                } else {
                    (b - y).powi(2) / (2.0 * (b - a))
                }
            }
        }
    }

    /// `E[T^k]` of the untruncated variable.
    pub fn raw_moment(&self, k: u32) -> f64 {
        self.truncated_moment(f64::INFINITY, k)
    }

    /// `E[(T ∧ m)^k]` for `k ∈ {1, 2, 3}` (any `k >= 1` is accepted).
    pub fn truncated_moment(&self, m: f64, k: u32) -> f64 {
        assert!(m > 0.0, "truncation level must be positive");
        let kf = f64::from(k);
        match *self {
            Self::Exponential => exp_truncated_moment(1.0, m, k),
            Self::Hyperexponential { p, r1, r2 } => {
                p * exp_truncated_moment(r1, m, k) + (1.0 - p) * exp_truncated_moment(r2, m, k)
            }
            Self::Deterministic => m.min(1.0).powi(k as i32),
            Self::Erlang { k: phases } => {
                let rate = f64::from(phases);
                // E[T^k 1(T <= m)] = (phases)_k / rate^k · P[Gamma(phases + k, rate) <= m]
                let mut rising = 1.0;
                for j in 0..k {
                    rising *= f64::from(phases + j);
                }
                if m.is_infinite() {
                    return rising / rate.powi(k as i32);
                }
                let body = rising / rate.powi(k as i32)
                    * (1.0 - gamma_upper_regularized_int(phases + k, rate * m));
                body + m.powi(k as i32) * gamma_upper_regularized_int(phases, rate * m)
            }
            Self::Uniform { a, b } => {
                let w = b - a;
                if m >= b {
                    (b.powf(kf + 1.0) - a.powf(kf + 1.0)) / ((kf + 1.0) * w)
                } else if m <= a {
                    m.powi(k as i32)
                } else {
                    (m.powf(kf + 1.0) - a.powf(kf + 1.0)) / ((kf + 1.0) * w)
                        + m.powi(k as i32) * (b - m) / w
                }
            }
        }
    }

    /// `E[e^{-s (T ∧ m)}]`; `m = +∞` gives the untruncated transform.
    pub fn truncated_laplace(&self, m: f64, s: f64) -> Result<f64> {
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation level m = {m} must be positive"
            )));
        }
        if s == 0.0 {
            return Ok(1.0);
        }
        if m.is_infinite() && s <= self.transform_abscissa() {
            return Err(Error::Overflow { s, m });
        }
        let value = match *self {
            Self::Exponential => exp_truncated_laplace(1.0, m, s),
            Self::Hyperexponential { p, r1, r2 } => {
                p * exp_truncated_laplace(r1, m, s) + (1.0 - p) * exp_truncated_laplace(r2, m, s)
            }
            Self::Deterministic => (-s * m.min(1.0)).exp(),
            Self::Erlang { k } => erlang_truncated_laplace(k, m, s),
            Self::Uniform { a, b } => uniform_truncated_laplace(a, b, m, s),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Overflow { s, m })
        }
    }
}

/// `Q(k, x) = e^{-x} Σ_{j<k} x^j / j!` for integer shape `k`.
fn gamma_upper_regularized_int(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let mut term = (-x).exp();
    let mut sum = term;
    for j in 1..k {
        term *= x / f64::from(j);
        sum += term;
    }
    sum.min(1.0)
}

/// `(e^{x} - 1) / x`, continuous at 0.
fn expm1_over(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// Exponential of rate `r`: `E[e^{-s(T∧m)}] = r (1 - e^{-(r+s)m})/(r+s) + e^{-(r+s)m}`.
fn exp_truncated_laplace(r: f64, m: f64, s: f64) -> f64 {
    let q = r + s;
    if m.is_infinite() {
        return r / q;
    }
    // r ∫_0^m e^{-q u} du = r m (1 - e^{-qm})/(qm)
    let integral = r * m * expm1_over(-q * m);
    integral + (-q * m).exp()
}

/// `E[(T ∧ m)^k]` for an exponential of rate `r`: `k!/r^k · P[Gamma(k, r) <= m]`.
fn exp_truncated_moment(r: f64, m: f64, k: u32) -> f64 {
    let factorial: f64 = (1..=k).map(f64::from).product();
    let scale = factorial / r.powi(k as i32);
    if m.is_infinite() {
        return scale;
    }
    scale * (1.0 - gamma_upper_regularized_int(k, r * m))
}

fn erlang_truncated_laplace(k: u32, m: f64, s: f64) -> f64 {
    let rate = f64::from(k);
    let q = rate + s;
    let ratio = (rate / q).powi(k as i32);
    if m.is_infinite() {
        return ratio;
    }
    let survival_at_m = gamma_upper_regularized_int(k, rate * m);
    // Closed form is well conditioned when the shifted rate stays well inside
    // the positive half-line; otherwise integrate the density directly.
    if q * m > 1.0 && q > 0.25 * rate {
        return ratio * (1.0 - gamma_upper_regularized_int(k, q * m))
            + (-s * m).exp() * survival_at_m;
    }
    let log_norm = f64::from(k) * rate.ln() - ln_factorial(k - 1);
    let integrand = |u: f64| {
        if u <= 0.0 {
            return if k == 1 { rate } else { 0.0 };
        }
        (log_norm + f64::from(k - 1) * u.ln() - q * u).exp()
    };
    let body = quad::integrate(integrand, 0.0, m, 1e-300, 1e-13);
    body + (-s * m).exp() * survival_at_m
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|j| f64::from(j).ln()).sum()
}

fn uniform_truncated_laplace(a: f64, b: f64, m: f64, s: f64) -> f64 {
    let w = b - a;
    if m <= a {
        return (-s * m).exp();
    }
    let top = m.min(b);
    // ∫_a^top e^{-s u} du / w = e^{-s a} (top - a) (1 - e^{-s (top - a)})/(s (top - a)) / w
    let span = top - a;
    let body = (-s * a).exp() * span * expm1_over(-s * span) / w;
    if m >= b {
        body
    } else {
        body + (-s * m).exp() * (b - m) / w
    }
}
