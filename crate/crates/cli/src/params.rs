//! Typed parameter tables for each experiment kind.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Regen,
    ExitHist,
    ExitCompare,
    Llt,
    Classify,
    Tgamma,
    Slowdown,
    Trap,
    AuxRun,
    Wevent,
    Returns,
    Reduction,
}

impl Kind {
    pub const ALL: [Kind; 13] = [
        Kind::Simulate,
        Kind::Regen,
        Kind::ExitHist,
        Kind::ExitCompare,
        Kind::Llt,
        Kind::Classify,
        Kind::Tgamma,
        Kind::Slowdown,
        Kind::Trap,
        Kind::AuxRun,
        Kind::Wevent,
        Kind::Returns,
        Kind::Reduction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Regen => "regen",
            Kind::ExitHist => "exit-hist",
            Kind::ExitCompare => "exit-compare",
            Kind::Llt => "llt",
            Kind::Classify => "classify",
            Kind::Tgamma => "tgamma",
            Kind::Slowdown => "slowdown",
            Kind::Trap => "trap",
            Kind::AuxRun => "aux-run",
            Kind::Wevent => "wevent",
            Kind::Returns => "returns",
            Kind::Reduction => "reduction",
        }
    }

    /// Kinds that need a law reference.
    pub fn needs_law(&self) -> bool {
        true
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_budget() -> u64 {
    1_000_000
}

fn default_margin() -> f64 {
    1.0
}

fn default_significance() -> f64 {
    0.05
}

fn default_theta_cube() -> f64 {
    0.5
}

fn default_delta_exit() -> f64 {
    0.1
}

fn default_sigmas() -> f64 {
    3.0
}

fn default_target_samples() -> usize {
    10_000
}

fn default_alpha() -> f64 {
    1.0
}

fn default_n_table() -> usize {
    16
}

/// Stopping rule as written in a config file: `stop = { type = "...", ... }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StopSpec {
    Halfspace { dir: Vec<f64>, level: f64 },
    Slab { dir: Vec<f64>, lo: f64, hi: f64 },
    Box { lo: Vec<i64>, hi: Vec<i64> },
    Budget {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub steps: u64,
    #[serde(default)]
    pub quenched: bool,
    pub stop: Option<StopSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegenParams {
    pub steps: u64,
    pub direction: Option<Vec<f64>>,
    #[serde(default = "default_margin")]
    pub min_margin: f64,
    #[serde(default)]
    pub u_grid: Vec<f64>,
    #[serde(default = "default_significance")]
    pub significance: f64,
}

/// Region for exit experiments: a basic block of size `block` or the box
/// [-box_half, box_half]^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitParams {
    pub block: Option<u64>,
    pub box_half: Option<i64>,
    pub theta: Option<Vec<f64>>,
    pub start: Option<Vec<i64>>,
    #[serde(default)]
    pub annealed: bool,
    #[serde(default = "default_budget")]
    pub step_budget: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LltParams {
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    pub n: u64,
    pub centre: Option<Vec<i64>>,
    #[serde(default = "default_theta_cube")]
    pub theta_cube: f64,
    #[serde(default = "default_delta_exit")]
    pub delta_exit: f64,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    #[serde(default = "default_budget")]
    pub step_budget: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TgammaParams {
    pub direction: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowdownParams {
    pub a: Vec<f64>,
    pub eps: f64,
    pub n: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapParams {
    pub n: u64,
    pub radius: Option<i64>,
    /// Radius ceil(log_c * ln n) when `radius` is absent.
    pub log_c: Option<f64>,
    pub a: Vec<f64>,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub k: usize,
    pub z: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxParams {
    #[serde(rename = "L")]
    pub l: f64,
    /// Only used to default `epsilon`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub psi: f64,
    pub chi: f64,
    pub epsilon: Option<f64>,
    pub u: f64,
    /// Tilt for aux-run; zero when absent.
    pub w: Option<Vec<f64>>,
    /// Tilts scored by wevent.
    #[serde(default)]
    pub w_grid: Vec<Vec<f64>>,
    #[serde(default = "default_target_samples")]
    pub target_samples: usize,
    #[serde(default = "default_n_table")]
    pub n_table: usize,
    #[serde(default)]
    pub planted_bad: Vec<PlantedSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnsParams {
    pub x: Vec<i64>,
    #[serde(rename = "L")]
    pub l: f64,
    pub reference: Option<f64>,
    /// Plant a naive trap of this radius around x first.
    pub trap_radius: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionParams {
    pub n: u64,
    pub r: f64,
    pub b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Simulate(SimulateParams),
    Regen(RegenParams),
    Exit(ExitParams),
    Llt(LltParams),
    Classify(ClassifyParams),
    Tgamma(TgammaParams),
    Slowdown(SlowdownParams),
    Trap(TrapParams),
    Aux(AuxParams),
    Returns(ReturnsParams),
    Reduction(ReductionParams),
}

impl Params {
    /// Parse the raw table for `kind`; the message names the offending key.
    pub fn parse(kind: Kind, table: &toml::Table) -> Result<Params, String> {
        let v = toml::Value::Table(table.clone());
        let e = |err: toml::de::Error| err.message().to_string();
        Ok(match kind {
            Kind::Simulate => Params::Simulate(v.try_into().map_err(e)?),
            Kind::Regen => Params::Regen(v.try_into().map_err(e)?),
            Kind::ExitHist | Kind::ExitCompare => Params::Exit(v.try_into().map_err(e)?),
            Kind::Llt => Params::Llt(v.try_into().map_err(e)?),
            Kind::Classify => Params::Classify(v.try_into().map_err(e)?),
            Kind::Tgamma => Params::Tgamma(v.try_into().map_err(e)?),
            Kind::Slowdown => Params::Slowdown(v.try_into().map_err(e)?),
            Kind::Trap => Params::Trap(v.try_into().map_err(e)?),
            Kind::AuxRun | Kind::Wevent => Params::Aux(v.try_into().map_err(e)?),
            Kind::Returns => Params::Returns(v.try_into().map_err(e)?),
            Kind::Reduction => Params::Reduction(v.try_into().map_err(e)?),
        })
    }

    /// Checks that do not need the law.
    pub fn validate(&self, kind: Kind) -> Result<(), String> {
        match self {
            Params::Exit(p) => {
                if p.block.is_some() == p.box_half.is_some() {
                    return Err("exactly one of `block` and `box_half` is required".into());
                }
                if kind == Kind::ExitCompare && p.annealed {
                    return Err("exit-compare compares against the quenched exact law; `annealed` must be false".into());
                }
            }
            Params::Trap(p) => {
                if p.radius.is_some() == p.log_c.is_some() {
                    return Err("exactly one of `radius` and `log_c` is required".into());
                }
            }
            Params::Aux(p) => {
                if kind == Kind::Wevent && p.w_grid.is_empty() {
                    return Err("wevent needs a non-empty `w_grid`".into());
                }
            }
            Params::Llt(p) if p.n.is_empty() => return Err("`n` must not be empty".into()),
            Params::Slowdown(p) if p.n.is_empty() => return Err("`n` must not be empty".into()),
            Params::Tgamma(p) if p.l.is_empty() => return Err("`L` must not be empty".into()),
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(s: &str) -> toml::Table {
        s.parse().unwrap()
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Params::parse(Kind::Tgamma, &table("direction = [1.0]\nL = [2.0]\nbogus = 1")).unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn stop_spec_is_tagged() {
        let p = Params::parse(Kind::Simulate, &table("steps = 10\nstop = { type = \"halfspace\", dir = [1.0], level = 3.0 }")).unwrap();
        let Params::Simulate(s) = p else { panic!() };
        assert_eq!(s.stop, Some(StopSpec::Halfspace { dir: vec![1.0], level: 3.0 }));
        assert!(Params::parse(Kind::Simulate, &table("steps = 10\nstop = { type = \"budget\", extra = 1 }")).is_err());
    }

    #[test]
    fn exit_region_must_be_unique() {
        let p = Params::parse(Kind::ExitHist, &table("block = 3\nbox_half = 2")).unwrap();
        assert!(p.validate(Kind::ExitHist).is_err());
    }
}
