//! Simulation and statistical verification of random walks in random
//! environment on Z^d.

pub mod aux;
pub mod conc;
pub mod env;
pub mod error;
pub mod exitstats;
pub mod experiments;
pub mod geom;
pub mod lattice;
pub mod regen;
pub mod rng;
pub mod scalar;
pub mod scale;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::Point;
pub use scalar::Real;

/// Exit laws in double precision.
pub type ExitDistribution = exitstats::dist::FiniteDist<f64>;
/// Exit laws in single precision.
pub type ExitDistributionF32 = exitstats::dist::FiniteDist<f32>;
