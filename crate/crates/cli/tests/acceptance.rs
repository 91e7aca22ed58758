//! The ten acceptance criteria. Each prints one line; the test fails if any
//! criterion fails.

use rwre_cli::selftest::{run_selftest, DEFAULT_SEED};
use std::io::Write;

#[test]
fn acceptance_criteria() {
    // written to the handle directly so the lines survive output capture
    let mut err = std::io::stderr();
    let report = run_selftest(DEFAULT_SEED, |_| {});
    let _ = writeln!(err);
    for c in &report.criteria {
        let _ = writeln!(err, "{}", c.line());
    }
    let _ = writeln!(err, "total wall time {:.0}s", report.total_wall_time_s);
    assert_eq!(report.criteria.len(), 10);
    let failed: Vec<u8> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
