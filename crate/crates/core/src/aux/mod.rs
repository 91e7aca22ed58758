//! The auxiliary walk: forced front exits through blocks of the scale
//! ladder, companion corrections, stopping-time bookkeeping, and the
//! random-direction event.

pub mod classifier;
pub mod config;
pub mod likelihood;
pub mod run;
pub mod wevent;

pub use classifier::{count_bad_blocks, level_of, AllGood, Classifier, EmpiricalClassifier, PlantedBad};
pub use config::{annealed_targets, AuxConfig};
pub use likelihood::{likelihood_audit, likelihood_floor, LikelihoodReport};
pub use run::{bad_visit_counts, conditioned_front_exit, run_aux, AuxRun, BadVisitReport, BetaEntry, ConditionedExit};
pub use wevent::{estimate_w_probability, w_event, WOutcome, WTable};
