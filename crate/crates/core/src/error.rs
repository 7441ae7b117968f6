use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level spacing violated at level {level}: l_{level}^(n) - l_{prev}^(n) = {gap} < 1", prev = .level - 1)]
    LevelSpacing { level: usize, gap: f64 },

    #[error("nonpositive rate {name}_{level}^(n) = {value}")]
    NonpositiveRate {
        name: &'static str,
        level: usize,
        value: f64,
    },

    #[error("unstable top level: rho_K^(n) = {rho} >= 1")]
    Unstable { rho: f64 },

    #[error("negative state {0} passed to a level lookup")]
    NegativeState(f64),

    #[error("transform overflow: E[exp(-s (T ^ m))] with s = {s}, m = {m}")]
    Overflow { s: f64, m: f64 },

    #[error("root bracket not found for theta = {theta}")]
    BracketFailure { theta: f64 },

    #[error("quantile level {0} outside (0, 1)")]
    QuantileDomain(f64),

    #[error("simulation state corrupted at event {event}: {detail}")]
    Corrupted { event: u64, detail: String },

    #[error("run length: {0}")]
    RunLength(String),

    #[error("diffusion left the guard region: {0}")]
    Instability(String),

    #[error("pathwise identity violated at t = {t}: |error| = {violation}")]
    IdentityViolation { t: f64, violation: f64 },

    #[error("test function {0} is not in the catalog")]
    UnknownTestFunction(String),

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("schema mismatch: expected version {expected}, found {found}")]
    SchemaMismatch { expected: u32, found: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
