//! Run ledger: one JSON record and one CSV table per executed block.

use crate::config::{canonical_json, sha256_hex, CampaignConfig, Task};
use crate::error::{CliError, CliResult};
use crate::runner::{run_task, RunOutput, Table};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLedgerEntry {
    pub experiment_id: String,
    pub kind: String,
    pub config_hash: String,
    pub input_hash: String,
    pub output_hash: String,
    pub seed: u64,
    pub samples: usize,
    pub outputs: Value,
    pub table_header: Vec<String>,
    pub table_rows: usize,
    pub wall_time_s: f64,
    pub status: Status,
    pub error: Option<String>,
}

pub fn output_hash(out: &RunOutput) -> String {
    let v = serde_json::json!({ "outputs": out.outputs, "table": out.table.to_json() });
    sha256_hex(canonical_json(&v).as_bytes())
}

pub fn table_to_csv(table: &Table) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&table.header).map_err(io)?;
    for r in &table.rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf8 cells is utf8"))
}

/// Result of running one block, before it is written out.
#[derive(Clone, Debug)]
pub struct Executed {
    pub entry: RunLedgerEntry,
    pub table: Table,
}

pub fn execute(task: &Task, config_hash: &str) -> Executed {
    let input_hash = sha256_hex(canonical_json(&task.input_json()).as_bytes());
    let t = Instant::now();
    let res = run_task(task);
    let wall = t.elapsed().as_secs_f64();
    let (out, status, error) = match res {
        Ok(o) => (o, Status::Ok, None),
        Err(e) => (RunOutput { outputs: Value::Null, table: Table::default() }, Status::Failed, Some(e)),
    };
    let entry = RunLedgerEntry {
        experiment_id: task.id.clone(),
        kind: task.kind.to_string(),
        config_hash: config_hash.to_string(),
        input_hash,
        output_hash: output_hash(&out),
        seed: task.seed,
        samples: task.samples,
        outputs: out.outputs,
        table_header: out.table.header.clone(),
        table_rows: out.table.rows.len(),
        wall_time_s: wall,
        status,
        error,
    };
    Executed { entry, table: out.table }
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Write `<unix_ms>_<id>.json` and `.csv` into `dir`; returns the JSON path.
pub fn write_entry(dir: &Path, ex: &Executed) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}_{}", unix_ms(), ex.entry.experiment_id);
    let json_path = dir.join(format!("{stem}.json"));
    // Value maps are sorted, so going through Value sorts every key
    let v = serde_json::to_value(&ex.entry).expect("entry serializes");
    std::fs::write(&json_path, serde_json::to_string_pretty(&v).expect("json value serializes") + "\n")?;
    std::fs::write(dir.join(format!("{stem}.csv")), table_to_csv(&ex.table)?)?;
    Ok(json_path)
}

#[derive(Clone, Debug)]
pub struct CampaignOutcome {
    pub entries: Vec<RunLedgerEntry>,
    pub written: Vec<PathBuf>,
}

impl CampaignOutcome {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.status == Status::Failed).count()
    }
}

/// Run the selected blocks in a pool of `workers` threads and write the
/// ledger. Failing blocks are recorded and do not stop the others.
pub fn run_campaign(cfg: &CampaignConfig, only: Option<&str>, kind: Option<crate::params::Kind>, workers: usize, out_dir: &Path) -> CliResult<CampaignOutcome> {
    let tasks = cfg.tasks()?;
    let hash = cfg.hash()?;
    let selected: Vec<&Task> = tasks
        .iter()
        .filter(|t| only.is_none_or(|id| t.id == id))
        .filter(|t| kind.is_none_or(|k| t.kind == k))
        .collect();
    if selected.is_empty() {
        let what = match (only, kind) {
            (Some(id), _) => format!("no experiment with id `{id}`"),
            (None, Some(k)) => format!("no experiment of kind {k}"),
            (None, None) => "the config has no experiments".to_string(),
        };
        return Err(CliError::Schema(what));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| CliError::Io(e.to_string()))?;
    let mut entries = Vec::new();
    let mut written = Vec::new();
    for t in selected {
        let ex = pool.install(|| execute(t, &hash));
        if let Some(e) = &ex.entry.error {
            eprintln!("experiment {} failed: {e}", t.id);
        }
        written.push(write_entry(out_dir, &ex)?);
        entries.push(ex.entry);
    }
    Ok(CampaignOutcome { entries, written })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_when_needed() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1,2".into(), "say \"hi\"".into()]);
        assert_eq!(table_to_csv(&t).unwrap(), "a,b\n\"1,2\",\"say \"\"hi\"\"\"\n");
    }

    #[test]
    fn output_hash_is_key_order_free() {
        let a = RunOutput { outputs: serde_json::json!({"x": 1, "y": 2}), table: Table::new(&["c"]) };
        let b = RunOutput { outputs: serde_json::json!({"y": 2, "x": 1}), table: Table::new(&["c"]) };
        assert_eq!(output_hash(&a), output_hash(&b));
        let c = RunOutput { outputs: serde_json::json!({"x": 1, "y": 3}), table: Table::new(&["c"]) };
        assert_ne!(output_hash(&a), output_hash(&c));
    }
}
