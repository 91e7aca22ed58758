use super::classifier::Classifier;
use super::config::AuxConfig;
use super::run::{run_aux, AuxRun};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::rng::replicate_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// W_k(j) for j in A_k+1..=A_k+M, per scale. The front-exit part of each
/// layer event holds by construction and is not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WOutcome {
    pub per_layer: Vec<Vec<bool>>,
    pub per_scale: Vec<bool>,
    pub holds: bool,
}

impl WOutcome {
    /// (k, j) of the first failing layer event in scale-then-layer order.
    pub fn first_failure(&self, cfg: &AuxConfig) -> Option<(usize, u64)> {
        for (k, row) in self.per_layer.iter().enumerate() {
            if let Some(i) = row.iter().position(|b| !b) {
                return Some((k + 1, cfg.a_k[k] + 1 + i as u64));
            }
        }
        None
    }
}

fn point_at(run: &AuxRun, layer: i64) -> Result<Point> {
    run.layer_points.get(&layer).copied().ok_or_else(|| Error::IncompleteRun(format!("layer {layer} not reached")))
}

/// The direction event of the run for the configured w.
pub fn w_event(run: &AuxRun, cfg: &AuxConfig) -> Result<WOutcome> {
    let d = cfg.dim();
    let mut per_layer = Vec::new();
    for k in 1..=cfg.ladder.iota {
        let n2 = cfg.ladder.layer(k);
        let nk = cfg.ladder.size(k) as f64;
        let a = cfg.a_k[k - 1];
        let base = point_at(run, a as i64 * n2)?;
        let mut row = Vec::new();
        for j in a + 1..=a + cfg.m {
            let y = point_at(run, j as i64 * n2)?;
            let s = (j - a) as f64;
            let dev = (0..d)
                .map(|i| {
                    let tilt = if i == 0 { 0.0 } else { cfg.w[i - 1] * s * nk };
                    (y.get(i) as f64 - base.get(i) as f64 - s * cfg.e_k[k - 1][i] - tilt).abs()
                })
                .fold(0.0, f64::max);
            row.push(dev < nk);
        }
        per_layer.push(row);
    }
    let per_scale: Vec<bool> = per_layer.iter().map(|r| r.iter().all(|b| *b)).collect();
    let holds = per_scale.iter().all(|b| *b);
    Ok(WOutcome { per_layer, per_scale, holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WRow {
    pub w: Vec<f64>,
    pub runs: usize,
    pub hits: usize,
    pub p_hat: f64,
    pub std_err: f64,
    /// u^{epsilon - 1/2}.
    pub bound: f64,
    /// w lies in [-1, 1]^(d-1), where the bound is claimed.
    pub in_range: bool,
    /// In range and more than three standard errors below the bound.
    pub below_bound: bool,
    /// P(W_k(j) | all earlier layer events), in scale-then-layer order.
    pub conditional: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WTable {
    pub rows: Vec<WRow>,
    /// Runs that ended in an error (incomplete layers, rare conditioning).
    pub failed_runs: usize,
}

/// Estimate P(W^(w)) over a grid of directions. The walk does not depend on
/// w, so every direction is scored on the same runs.
pub fn estimate_w_probability<C: Classifier + ?Sized>(
    env: &Environment,
    classifier: &C,
    cfg: &AuxConfig,
    w_grid: &[Vec<f64>],
    n_runs: usize,
    seed: u64,
) -> Result<WTable> {
    let runs: Vec<Option<AuxRun>> =
        (0..n_runs).into_par_iter().map(|i| run_aux(env, classifier, cfg, replicate_seed(seed, i as u64)).ok()).collect();
    let failed_runs = runs.iter().filter(|r| r.is_none()).count();
    let bound = cfg.u.powf(cfg.ladder.epsilon - 0.5);
    let mut rows = Vec::new();
    for w in w_grid {
        let c = cfg.with_direction(w.clone())?;
        let outcomes: Vec<WOutcome> = runs.iter().flatten().filter_map(|r| w_event(r, &c).ok()).collect();
        let n = outcomes.len();
        let hits = outcomes.iter().filter(|o| o.holds).count();
        let p = if n > 0 { hits as f64 / n as f64 } else { 0.0 };
        let se = if n > 0 { (p * (1.0 - p) / n as f64).sqrt() } else { f64::NAN };
        let flat: Vec<Vec<bool>> = outcomes.iter().map(|o| o.per_layer.concat()).collect();
        let width = flat.first().map(|f| f.len()).unwrap_or(0);
        let mut conditional = Vec::with_capacity(width);
        let mut alive = n;
        for i in 0..width {
            let next = flat.iter().filter(|f| f[..=i].iter().all(|b| *b)).count();
            conditional.push(if alive > 0 { next as f64 / alive as f64 } else { f64::NAN });
            alive = next;
        }
        let in_range = w.iter().all(|v| v.abs() <= 1.0);
        let below_bound = in_range && n > 0 && p + 3.0 * se < bound;
        rows.push(WRow { w: w.clone(), runs: n, hits, p_hat: p, std_err: se, bound, in_range, below_bound, conditional });
    }
    Ok(WTable { rows, failed_runs })
}
