//! Campaign runner for the random-walk toolkit: configuration, ledger,
//! reports and the acceptance self-test.

pub mod config;
pub mod error;
pub mod ledger;
pub mod params;
pub mod report;
pub mod runner;
pub mod selftest;
