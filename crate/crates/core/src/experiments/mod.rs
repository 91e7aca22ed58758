//! End-to-end estimators built on the walk, regeneration and environment layers.

pub mod reduction;
pub mod returns;
pub mod slowdown;
pub mod tgamma;

pub use reduction::{reduction_diagnostics, Frequency, ReductionReport};
pub use returns::{escape_box, return_probability, ReturnReport};
pub use slowdown::{slowdown_direct, trap_lower_bound, SlowdownMethod, SlowdownReport, TrapRadius, TrapReport};
pub use tgamma::{tgamma_test, BacktrackRow, TGammaFit, TGammaReport};
