use rwre_cli::config::{parse_config_str, to_toml};
use rwre_cli::error::CliError;
use rwre_cli::ledger::{run_campaign, RunLedgerEntry, Status};
use rwre_cli::report::report;
use std::path::Path;

const CAMPAIGN: &str = r#"
seed = 42
workers = 2

[laws.biased]
dimension = 1
eta = 0.0
family = "fixed-drift"
kernels = [[0.6, 0.4]]

[laws.plane]
dimension = 2
eta = 0.05
family = "finite-mixture"
kernels = [[0.4, 0.1, 0.25, 0.25], [0.25, 0.25, 0.25, 0.25]]
weights = [0.5, 0.5]

[[experiment]]
id = "backtrack"
kind = "tgamma"
law = "biased"
samples = 20000
params = { direction = [1.0], L = [2.0, 5.0] }

[[experiment]]
id = "box-exit"
kind = "exit-hist"
law = "plane"
samples = 5000
params = { box_half = 3 }

[[experiment]]
id = "clt"
kind = "llt"
law = "plane"
samples = 1
params = { n = [4, 8] }
"#;

fn files(dir: &Path, ext: &str) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|x| x == ext)).collect();
    v.sort();
    v
}

#[test]
fn campaign_round_trips_through_toml() {
    let cfg = parse_config_str(CAMPAIGN).unwrap();
    let again = parse_config_str(&to_toml(&cfg)).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
}

#[test]
fn hash_ignores_key_order_and_workers() {
    let reordered = r#"
workers = 7
seed = 42
[laws.biased]
kernels = [[0.6, 0.4]]
family = "fixed-drift"
eta = 0.0
dimension = 1
[[experiment]]
params = { L = [2.0, 5.0], direction = [1.0] }
samples = 20000
law = "biased"
kind = "tgamma"
id = "backtrack"
"#;
    let a = parse_config_str(reordered).unwrap();
    let mut b = parse_config_str(CAMPAIGN).unwrap();
    b.laws.remove("plane");
    b.experiments.truncate(1);
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    b.seed = 43;
    assert_ne!(a.hash().unwrap(), b.hash().unwrap());
}

#[test]
fn unknown_param_is_a_schema_error() {
    let text = CAMPAIGN.replace("box_half = 3", "box_half = 3, colour = 1");
    let err = parse_config_str(&text).unwrap().validate().unwrap_err();
    assert!(matches!(err, CliError::Schema(_)));
    assert!(err.to_string().contains("box-exit") && err.to_string().contains("colour"), "{err}");
}

#[test]
fn single_tgamma_block_writes_one_json_and_one_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(CAMPAIGN).unwrap();
    let out = run_campaign(&cfg, Some("backtrack"), None, 1, dir.path()).unwrap();
    assert_eq!(out.entries.len(), 1);
    assert_eq!(files(dir.path(), "json").len(), 1);
    assert_eq!(files(dir.path(), "csv").len(), 1);
    let text = std::fs::read_to_string(&files(dir.path(), "json")[0]).unwrap();
    let entry: RunLedgerEntry = serde_json::from_str(&text).unwrap();
    assert_eq!(entry.status, Status::Ok);
    assert_eq!(entry.kind, "tgamma");
    // keys come out sorted
    let keys: Vec<&str> = text.lines().filter(|l| l.starts_with("  \"")).map(|l| l.trim().split('"').nth(1).unwrap()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn reruns_and_worker_counts_reproduce_outputs() {
    let cfg = parse_config_str(CAMPAIGN).unwrap();
    let hashes = |workers: usize| -> Vec<String> {
        let dir = tempfile::tempdir().unwrap();
        run_campaign(&cfg, None, None, workers, dir.path()).unwrap().entries.into_iter().map(|e| e.output_hash).collect()
    };
    let one = hashes(1);
    assert_eq!(one.len(), 3);
    assert_eq!(one, hashes(1));
    assert_eq!(one, hashes(8));
}

#[test]
fn failing_block_is_isolated() {
    let text = CAMPAIGN.replace("box_half = 3", "box_half = -1");
    let cfg = parse_config_str(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_campaign(&cfg, None, None, 1, dir.path()).unwrap();
    assert_eq!(out.entries.len(), 3);
    let failed: Vec<&str> = out.entries.iter().filter(|e| e.status == Status::Failed).map(|e| e.experiment_id.as_str()).collect();
    assert_eq!(failed, vec!["box-exit"]);
    assert!(out.entries.iter().find(|e| e.experiment_id == "box-exit").unwrap().error.as_deref().unwrap().contains("box_half"));
}

#[test]
fn report_groups_kinds_and_skips_corrupt_entries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(CAMPAIGN).unwrap();
    run_campaign(&cfg, None, None, 1, dir.path()).unwrap();
    let clean = report(dir.path()).unwrap();
    assert_eq!(clean.entries, 3);
    assert!(!clean.is_partial());
    for kind in ["tgamma", "exit-hist", "llt"] {
        assert!(dir.path().join("report").join(format!("{kind}.csv")).is_file(), "{kind}");
    }
    std::fs::write(dir.path().join("0_broken.json"), "{\"experiment_id\": ").unwrap();
    let partial = report(dir.path()).unwrap();
    assert_eq!(partial.entries, 3);
    assert_eq!(partial.skipped.len(), 1);
    assert!(partial.is_partial());
}

#[test]
fn empty_ledger_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(dir.path()), Err(CliError::EmptyLedger(_))));
}
