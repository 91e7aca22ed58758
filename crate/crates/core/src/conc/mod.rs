//! Concentration tools: Azuma bounds with essential variance, two-walk
//! intersection statistics, hitting fields and the discrete Taylor check.

pub mod azuma;
pub mod intersect;
pub mod taylor;

pub use azuma::{azuma_bound, martingale_tail_audit, Martingale, TailAudit};
pub use intersect::{hitting_field, intersection_count, intersection_tail, Gate, HittingField, IntersectionTail};
pub use taylor::{taylor_check, TaylorReport};
