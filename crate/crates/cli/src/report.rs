//! Aggregation of a ledger directory into per-kind tables.

use crate::error::{CliError, CliResult};
use crate::ledger::{table_to_csv, RunLedgerEntry, Status};
use crate::runner::Table;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct ReportOutcome {
    pub entries: usize,
    pub skipped: Vec<(PathBuf, String)>,
    pub files: Vec<PathBuf>,
}

impl ReportOutcome {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Read every ledger entry in `dir` and write `dir/report/<kind>.csv` plus
/// `dir/report/summary.json`. Unreadable entries are skipped with a warning.
pub fn report(dir: &Path) -> CliResult<ReportOutcome> {
    let listing = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut entries: Vec<RunLedgerEntry> = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let parsed = std::fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<RunLedgerEntry>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(e) => entries.push(e),
            Err(msg) => {
                eprintln!("warning: skipping {}: {msg}", p.display());
                skipped.push((p, msg));
            }
        }
    }
    if entries.is_empty() {
        return Err(CliError::EmptyLedger(dir.display().to_string()));
    }
    let out = dir.join("report");
    std::fs::create_dir_all(&out)?;
    let mut by_kind: BTreeMap<String, Vec<&RunLedgerEntry>> = BTreeMap::new();
    for e in &entries {
        by_kind.entry(e.kind.clone()).or_default().push(e);
    }
    let mut files = Vec::new();
    let mut per_kind = serde_json::Map::new();
    for (kind, group) in &by_kind {
        // scalar outputs become columns
        let keys: BTreeSet<&String> = group
            .iter()
            .filter_map(|e| e.outputs.as_object())
            .flat_map(|o| o.iter().filter(|(_, v)| !v.is_array() && !v.is_object()).map(|(k, _)| k))
            .collect();
        let mut header = vec!["experiment_id", "status", "seed", "samples", "config_hash", "output_hash", "wall_time_s", "error"];
        header.extend(keys.iter().map(|k| k.as_str()));
        let mut table = Table::new(&header);
        for e in group {
            let mut row = vec![
                e.experiment_id.clone(),
                cell(&serde_json::to_value(e.status).expect("status serializes")),
                e.seed.to_string(),
                e.samples.to_string(),
                e.config_hash.clone(),
                e.output_hash.clone(),
                e.wall_time_s.to_string(),
                e.error.clone().unwrap_or_default(),
            ];
            row.extend(keys.iter().map(|k| e.outputs.get(k.as_str()).map(cell).unwrap_or_default()));
            table.push(row);
        }
        let path = out.join(format!("{kind}.csv"));
        std::fs::write(&path, table_to_csv(&table)?)?;
        files.push(path);
        let failed = group.iter().filter(|e| e.status == Status::Failed).count();
        per_kind.insert(kind.clone(), json!({ "entries": group.len(), "ok": group.len() - failed, "failed": failed }));
    }
    let summary = json!({
        "entries": entries.len(),
        "skipped": skipped.iter().map(|(p, m)| json!({ "file": p.display().to_string(), "error": m })).collect::<Vec<_>>(),
        "kinds": per_kind,
    });
    let path = out.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("json value serializes") + "\n")?;
    files.push(path);
    Ok(ReportOutcome { entries: entries.len(), skipped, files })
}
