//! Executable stationary identities and distribution comparisons.

pub mod bar;
pub mod compare;
pub mod daley;
pub mod etazeta;
pub mod moments;
pub mod palm;
pub mod report;

pub use bar::{bar_residuals, BarObserver, BarResidual, TestFunction};
pub use compare::{compare, ks_empirical_vs_limit, w1_empirical_vs_limit, Comparison, Law};
pub use daley::{daley_miyazawa_check, DaleyReport, RenewalTrace};
pub use etazeta::{expansion_errors, solve_eta_zeta, solve_exponent, EtaZetaSolution};
pub use moments::{moment_bounds, run_with_residuals, ResidualObserver};
pub use palm::{palm_identities, IdentityCheck};
pub use report::{identity_report, BarLine, IdentityReport, TAIL_GRID};
