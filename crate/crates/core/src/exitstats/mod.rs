//! Exit distributions: Monte Carlo estimates, exact oracles, derivative
//! profiles, local limit quadrature, closeness couplings and block
//! classification.

pub mod dist;
pub mod exact;
pub mod estimate;
pub mod classify;
pub mod closeness;
pub mod llt;
pub mod lower_bound;
pub mod profile;
pub mod sums;
