//! Empirical good/bad classification of a block from quenched exit
//! statistics compared against the annealed reference.

use super::dist::FiniteDist;
use super::estimate::{estimate_exit, ExitHistogram, ExitMode, ExitRegion};
use crate::env::Environment;
use crate::geom::BlockSpec;
use crate::lattice::Point;
use crate::rng::derive_seed;
use crate::scale::scale_r;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockClass {
    Good,
    Bad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Allowed probability of leaving through a non-front face.
    pub delta_exit: f64,
    /// Starting offsets relative to the block centre; defaults to the centre
    /// and 2d axis offsets inside the middle third.
    pub probes: Option<Vec<Point>>,
    pub step_budget: u64,
    /// Samples for the annealed reference; defaults to the quenched count.
    pub annealed_samples: Option<usize>,
    /// Width of the statistical slack in standard errors.
    pub sigmas: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { delta_exit: 0.1, probes: None, step_budget: 1_000_000, annealed_samples: None, sigmas: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvidence {
    pub start: Point,
    pub front_freq: f64,
    pub exit_ok: bool,
    pub mean_gap: f64,
    pub mean_allowance: f64,
    pub mean_ok: bool,
    /// Largest cube discrepancy minus its allowance; non-positive when (c) holds.
    pub worst_cube_excess: f64,
    pub cube_ok: bool,
    pub budget_exhausted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEvidence {
    pub class: BlockClass,
    pub cube_side: i64,
    pub cube_bound: f64,
    pub mean_bound: f64,
    pub probes: Vec<ProbeEvidence>,
}

/// Allowed front-cube discrepancy N^{(θ-1)(d-1) - θ(d-1)/(d+1)}.
pub fn cube_bound(n: f64, theta: f64, d: usize) -> f64 {
    let d1 = (d - 1) as f64;
    n.powf((theta - 1.0) * d1 - theta * d1 / (d as f64 + 1.0))
}

pub fn default_probes(block: &BlockSpec) -> Vec<Point> {
    let d = block.dim();
    let depth = block.depth();
    let width = block.width();
    let mut out = vec![Point::zero(d)];
    for i in 0..d {
        let reach = if i == 0 { (depth / 3 - 1) / 2 } else { ((width / 3.0).ceil() as i64 - 1) / 2 };
        if reach < 1 {
            continue;
        }
        for s in [1, -1] {
            let p = Point::axis(d, i, s * reach);
            if block.middle_third_contains(&(block.z + p)) {
                out.push(p);
            }
        }
    }
    out
}

fn cube_masses(dist: &FiniteDist<f64>, z: &Point, side: i64) -> BTreeMap<Point, f64> {
    let mut out = BTreeMap::new();
    for (x, w) in dist.iter() {
        let mut q = Point::zero(x.dim() - 1);
        for i in 1..x.dim() {
            q.set(i - 1, (x.get(i) - z.get(i)).div_euclid(side));
        }
        *out.entry(q).or_insert(0.0) += w;
    }
    out
}

fn mean_and_var(dist: &FiniteDist<f64>) -> (Vec<f64>, f64) {
    if dist.is_empty() {
        return (vec![0.0; dist.dim()], 0.0);
    }
    (dist.mean(), dist.trace_var())
}

/// Compare one quenched histogram against the annealed one from the same start.
pub fn compare_probe(
    block: &BlockSpec,
    theta_cube: f64,
    q: &ExitHistogram,
    a: &ExitHistogram,
    opts: &ClassifyOptions,
) -> ProbeEvidence {
    let n = block.n as f64;
    let d = block.dim();
    let nq = q.total + q.budget_exhausted;
    let front_freq = q.front_total as f64 / nq.max(1) as f64;
    let se_exit = (opts.delta_exit * (1.0 - opts.delta_exit) / nq.max(1) as f64).sqrt();
    let exit_ok = front_freq >= 1.0 - opts.delta_exit - opts.sigmas * se_exit;

    let qd = q.front_dist();
    let ad = a.front_dist();
    let (qm, qv) = mean_and_var(&qd);
    let (am, av) = mean_and_var(&ad);
    let mean_gap = qm.iter().zip(&am).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let slack = opts.sigmas * (qv / q.front_total.max(1) as f64 + av / a.front_total.max(1) as f64).sqrt();
    let r3 = if n >= 3.0 { scale_r(3, n).unwrap_or(1.0) } else { 1.0 };
    let mean_allowance = r3 + slack;
    let mean_ok = !qd.is_empty() && mean_gap <= mean_allowance;

    let side = (n.powf(theta_cube).ceil() as i64).max(1);
    let bound = cube_bound(n, theta_cube, d);
    let cq = cube_masses(&qd, &block.z, side);
    let ca = cube_masses(&ad, &block.z, side);
    let mut worst = f64::NEG_INFINITY;
    for key in cq.keys().chain(ca.keys()) {
        let p = cq.get(key).copied().unwrap_or(0.0);
        let r = ca.get(key).copied().unwrap_or(0.0);
        let se = (p * (1.0 - p) / q.front_total.max(1) as f64 + r * (1.0 - r) / a.front_total.max(1) as f64).sqrt();
        worst = worst.max((p - r).abs() - bound - opts.sigmas * se);
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    ProbeEvidence {
        start: q.start,
        front_freq,
        exit_ok,
        mean_gap,
        mean_allowance,
        mean_ok,
        worst_cube_excess: worst,
        cube_ok: !qd.is_empty() && worst <= 0.0,
        budget_exhausted: q.budget_exhausted,
    }
}

/// Classify a block as good or bad. `theta_cube` sets the front cube side N^θ.
pub fn classify_block(
    env: &Environment,
    block: &BlockSpec,
    theta_cube: f64,
    n_samples: usize,
    seed: u64,
    opts: &ClassifyOptions,
) -> BlockEvidence {
    let probes = opts.probes.clone().unwrap_or_else(|| default_probes(block));
    let region = ExitRegion::Block(block.clone());
    let quenched = ExitMode::Quenched(env.clone());
    let annealed = ExitMode::Annealed(env.law_arc());
    let na = opts.annealed_samples.unwrap_or(n_samples);
    let mut evidence = Vec::new();
    for (i, off) in probes.iter().enumerate() {
        let start = block.z + *off;
        let s = derive_seed(seed, &format!("probe{i}"));
        let q = estimate_exit(&quenched, &region, start, n_samples, derive_seed(s, "quenched"), opts.step_budget);
        let a = estimate_exit(&annealed, &region, start, na, derive_seed(s, "annealed"), opts.step_budget);
        evidence.push(compare_probe(block, theta_cube, &q, &a, opts));
    }
    let good = evidence.iter().all(|e| e.exit_ok && e.mean_ok && e.cube_ok);
    let n = block.n as f64;
    BlockEvidence {
        class: if good { BlockClass::Good } else { BlockClass::Bad },
        cube_side: (n.powf(theta_cube).ceil() as i64).max(1),
        cube_bound: cube_bound(n, theta_cube, block.dim()),
        mean_bound: if n >= 3.0 { scale_r(3, n).unwrap_or(1.0) } else { 1.0 },
        probes: evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_bound_value() {
        assert!((cube_bound(100.0, 0.5, 5) - 100f64.powf(-7.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn probes_lie_in_middle_third() {
        let b = BlockSpec::axial(Point::zero(2), 10);
        let p = default_probes(&b);
        assert_eq!(p.len(), 5);
        for o in p {
            assert!(b.middle_third_contains(&o));
        }
    }
}
