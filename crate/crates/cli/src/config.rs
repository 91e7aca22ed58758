//! Campaign configuration: parsing, validation and hashing.

use crate::error::{CliError, CliResult};
use crate::params::{Kind, Params};
use rwre_core::env::{EnvironmentLaw, LawSpec};
use rwre_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const SEED_ENV: &str = "RWRE_SEED";

fn default_output_dir() -> String {
    "ledger".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub id: String,
    pub kind: Kind,
    pub law: Option<String>,
    pub samples: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub laws: BTreeMap<String, LawSpec>,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<ExperimentBlock>,
}

/// A block after validation, with its law built and parameters typed.
#[derive(Clone, Debug)]
pub struct Task {
    pub id: String,
    pub kind: Kind,
    pub law_name: Option<String>,
    pub law_spec: Option<LawSpec>,
    pub law: Option<EnvironmentLaw>,
    pub samples: usize,
    pub seed: u64,
    pub params: Params,
}

impl Task {
    /// Content of everything that determines the outputs.
    pub fn input_json(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "kind": self.kind,
            "law": self.law_spec,
            "samples": self.samples,
            "seed": self.seed,
            "params": self.params,
        })
    }
}

pub fn parse_config_str(text: &str) -> CliResult<CampaignConfig> {
    // toml's message carries the line and column of the problem
    toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
}

pub fn parse_config(path: &Path) -> CliResult<CampaignConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let cfg = parse_config_str(&text)?;
    cfg.tasks()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &CampaignConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

/// Canonical JSON text: object keys sorted, no whitespace.
pub fn canonical_json(v: &serde_json::Value) -> String {
    // serde_json's map is ordered by key unless preserve_order is enabled
    serde_json::to_string(v).expect("json value serializes")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl CampaignConfig {
    /// Apply the seed override from the environment, if set.
    pub fn with_env_seed(mut self) -> CliResult<Self> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s.trim().parse().map_err(|_| CliError::Schema(format!("{SEED_ENV}={s} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.tasks().map(|_| ())
    }

    /// Validate every block and resolve it into a task.
    pub fn tasks(&self) -> CliResult<Vec<Task>> {
        if self.workers == Some(0) {
            return Err(CliError::Schema("workers must be at least 1".into()));
        }
        let mut laws = BTreeMap::new();
        for (name, spec) in &self.laws {
            let law = EnvironmentLaw::from_spec(spec).map_err(|e| CliError::Schema(format!("laws.{name}: {e}")))?;
            laws.insert(name.clone(), law);
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, b) in self.experiments.iter().enumerate() {
            let at = format!("experiment[{i}] (id `{}`)", b.id);
            if b.id.is_empty() || !b.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(CliError::Schema(format!("{at}: ids use letters, digits, '-' and '_'")));
            }
            if !seen.insert(b.id.clone()) {
                return Err(CliError::Schema(format!("{at}: duplicate id")));
            }
            if b.samples == 0 {
                return Err(CliError::Schema(format!("{at}: samples must be positive")));
            }
            let (law, law_spec) = match &b.law {
                Some(name) => match laws.get(name) {
                    Some(l) => (Some(l.clone()), Some(self.laws[name].clone())),
                    None => return Err(CliError::Schema(format!("{at}: unknown law `{name}`"))),
                },
                None if b.kind.needs_law() => return Err(CliError::Schema(format!("{at}: kind {} needs a law", b.kind))),
                None => (None, None),
            };
            let params = Params::parse(b.kind, &b.params).map_err(|m| CliError::Schema(format!("{at}: params: {m}")))?;
            params.validate(b.kind).map_err(|m| CliError::Schema(format!("{at}: params: {m}")))?;
            out.push(Task {
                id: b.id.clone(),
                kind: b.kind,
                law_name: b.law.clone(),
                law_spec,
                law,
                samples: b.samples,
                seed: b.seed.unwrap_or_else(|| derive_seed(self.seed, &b.id)),
                params,
            });
        }
        Ok(out)
    }

    /// Hash of the semantic content: seed, laws and typed blocks. Worker
    /// count and output directory do not enter, and neither does key order.
    pub fn hash(&self) -> CliResult<String> {
        let tasks = self.tasks()?;
        let v = serde_json::json!({
            "seed": self.seed,
            "laws": self.laws,
            "experiments": tasks.iter().map(Task::input_json).collect::<Vec<_>>(),
        });
        Ok(sha256_hex(canonical_json(&v).as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
[laws.plain]
dimension = 2
eta = 0.25
family = "srw"
"#;

    #[test]
    fn minimal_srw_config_is_valid() {
        let c = parse_config_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.output_dir, "ledger");
        assert!(c.experiments.is_empty());
    }

    #[test]
    fn bad_row_is_named() {
        let text = r#"
seed = 1
[laws.mix]
dimension = 2
eta = 0.05
family = "finite-mixture"
kernels = [[0.25, 0.25, 0.25, 0.25], [0.4, 0.1, 0.25, 0.24]]
weights = [0.5, 0.5]
"#;
        let err = parse_config_str(text).unwrap().validate().unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
        assert!(err.to_string().contains("row 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_top_level_key_reports_position() {
        let err = parse_config_str("seed = 1\ncolour = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("colour") && msg.contains("line 2"), "{msg}");
    }
}
