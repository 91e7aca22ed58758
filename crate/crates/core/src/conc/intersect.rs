use crate::env::{Environment, EnvironmentLaw};
use crate::geom::BlockSpec;
use crate::lattice::Point;
use crate::regen::{certified, detect_regenerations};
use crate::rng::{derive_seed, replicate_seed};
use crate::scale::scale_r;
use crate::stats::linear_fit;
use crate::walk::{annealed_env, run_path, StopCause, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

/// Regeneration-radius gate applied to each walk before its visits count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// Slab radii must stay strictly below this.
    pub radius: f64,
    /// Margin a regeneration needs to count as certified.
    pub margin: f64,
    /// Steps allowed after the block exit to certify regenerations.
    pub extra_budget: u64,
}

impl Gate {
    /// R_1(N), raised to 2 so that single-step slabs pass.
    pub fn for_scale(n: u64) -> Self {
        let r1 = if n >= 3 { scale_r(1, n as f64).unwrap_or(1.0) } else { 1.0 };
        Gate { radius: r1.max(2.0), margin: r1, extra_budget: 100_000 }
    }
}

/// Sites of `block` visited before the exit, or None when the walk runs out
/// of budget or fails the gate.
fn gated_visits(env: &Environment, start: Point, block: &BlockSpec, rng: &mut ChaCha8Rng, budget: u64, gate: Option<&Gate>) -> Option<HashSet<Point>> {
    let mut path = Vec::new();
    if run_path(env, start, &StopRule::block(block.clone(), budget), rng, &mut path) == StopCause::BudgetExhausted {
        return None;
    }
    let exit_idx = path.len() - 1;
    if let Some(g) = gate {
        let d = start.dim();
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        let top = path.iter().map(|p| p.get(0)).max().unwrap_or(0) as f64 + g.margin.max(1.0);
        let mut tail = Vec::new();
        run_path(env, path[exit_idx], &StopRule::halfspace(&e1, top, g.extra_budget), rng, &mut tail);
        let mut full = path.clone();
        full.extend_from_slice(&tail[1..]);
        let recs = detect_regenerations(&full, &e1);
        let ok = certified(&recs, g.margin).iter().filter(|r| r.tau < exit_idx).all(|r| (r.radius as f64) < g.radius);
        if !ok {
            return None;
        }
    }
    Some(path[..exit_idx].iter().copied().filter(|p| block.contains(p)).collect())
}

/// Number of block sites visited by both walks before their exits; zero
/// when either walk fails the gate.
pub fn intersection_count(env: &Environment, start: Point, block: &BlockSpec, seeds: (u64, u64), budget: u64, gate: Option<&Gate>) -> u64 {
    let mut r1 = ChaCha8Rng::seed_from_u64(seeds.0);
    let mut r2 = ChaCha8Rng::seed_from_u64(seeds.1);
    let (Some(a), Some(b)) = (gated_visits(env, start, block, &mut r1, budget, gate), gated_visits(env, start, block, &mut r2, budget, gate)) else {
        return 0;
    };
    a.intersection(&b).count() as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionTail {
    pub pairs: usize,
    pub n: u64,
    pub scale: f64,
    /// (t, P(count / R_1(N)^d > t)).
    pub survival: Vec<(f64, f64)>,
    pub fit_rate: f64,
    pub mean_shared: f64,
    /// Mean count for walks in independent environments (annealed mode only).
    pub mean_control: Option<f64>,
    pub r2: f64,
    pub mean_within_r2: bool,
}

pub enum PairSource<'a> {
    Quenched(&'a Environment),
    Annealed(&'a Arc<EnvironmentLaw>),
}

pub fn intersection_tail(source: PairSource, block: &BlockSpec, n_pairs: usize, seed: u64, budget: u64, gate: Option<&Gate>) -> IntersectionTail {
    let d = block.dim();
    let n = block.n;
    let start = block.z;
    let counts: Vec<(u64, Option<u64>)> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let s = replicate_seed(seed, i as u64);
            let seeds = (derive_seed(s, "w1"), derive_seed(s, "w2"));
            match &source {
                PairSource::Quenched(env) => (intersection_count(env, start, block, seeds, budget, gate), None),
                PairSource::Annealed(law) => {
                    let env = annealed_env(law, s);
                    let shared = intersection_count(&env, start, block, seeds, budget, gate);
                    let other = annealed_env(law, derive_seed(s, "control"));
                    let mut r1 = ChaCha8Rng::seed_from_u64(seeds.0);
                    let mut r2 = ChaCha8Rng::seed_from_u64(seeds.1);
                    let control = match (gated_visits(&env, start, block, &mut r1, budget, gate), gated_visits(&other, start, block, &mut r2, budget, gate)) {
                        (Some(a), Some(b)) => a.intersection(&b).count() as u64,
                        _ => 0,
                    };
                    (shared, Some(control))
                }
            }
        })
        .collect();
    let r1 = if n >= 3 { scale_r(1, n as f64).unwrap_or(1.0) } else { 1.0 };
    let scale = r1.powi(d as i32);
    let m = n_pairs.max(1) as f64;
    let scaled: Vec<f64> = counts.iter().map(|(c, _)| *c as f64 / scale).collect();
    let top = scaled.iter().cloned().fold(0.0, f64::max).ceil() as usize;
    let survival: Vec<(f64, f64)> = (0..=top).map(|t| (t as f64, scaled.iter().filter(|&&x| x > t as f64).count() as f64 / m)).collect();
    let pts: Vec<(f64, f64)> = survival.iter().filter(|(_, p)| *p > 0.0).map(|(t, p)| (*t, p.ln())).collect();
    let fit_rate = if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        -linear_fit(&x, &y).1
    } else {
        f64::NAN
    };
    let mean_shared = counts.iter().map(|(c, _)| *c as f64).sum::<f64>() / m;
    let mean_control = counts.first().and_then(|c| c.1).map(|_| counts.iter().filter_map(|c| c.1).map(|c| c as f64).sum::<f64>() / m);
    let r2 = if n >= 3 { scale_r(2, n as f64).unwrap_or(1.0) } else { 1.0 };
    IntersectionTail { pairs: n_pairs, n, scale, survival, fit_rate, mean_shared, mean_control, r2, mean_within_r2: mean_shared <= r2 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingField {
    pub block: BlockSpec,
    pub start: Point,
    pub samples: usize,
    /// Walks rejected by the gate or the step budget.
    pub rejected: usize,
    pub values: BTreeMap<Point, f64>,
    pub sum_of_squares: f64,
    pub r2: f64,
}

impl HittingField {
    pub fn get(&self, x: &Point) -> f64 {
        self.values.get(x).copied().unwrap_or(0.0)
    }
}

/// Per-site probability that a gated walk from `start` visits the site
/// before leaving the block.
pub fn hitting_field(env: &Environment, block: &BlockSpec, start: Point, n_samples: usize, seed: u64, budget: u64, gate: Option<&Gate>) -> HittingField {
    let parts: Vec<(BTreeMap<Point, u64>, usize)> = (0..n_samples.div_ceil(1024))
        .into_par_iter()
        .map(|c| {
            let mut counts = BTreeMap::new();
            let mut rejected = 0;
            for i in c * 1024..((c + 1) * 1024).min(n_samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, i as u64));
                match gated_visits(env, start, block, &mut rng, budget, gate) {
                    Some(v) => {
                        for x in v {
                            *counts.entry(x).or_insert(0) += 1;
                        }
                    }
                    None => rejected += 1,
                }
            }
            (counts, rejected)
        })
        .collect();
    let mut counts: BTreeMap<Point, u64> = BTreeMap::new();
    let mut rejected = 0;
    for (c, r) in parts {
        rejected += r;
        for (x, k) in c {
            *counts.entry(x).or_insert(0) += k;
        }
    }
    let m = n_samples.max(1) as f64;
    let values: BTreeMap<Point, f64> = counts.into_iter().map(|(x, c)| (x, c as f64 / m)).collect();
    let sum_of_squares = values.values().map(|h| h * h).sum();
    let r2 = if block.n >= 3 { scale_r(2, block.n as f64).unwrap_or(1.0) } else { 1.0 };
    HittingField { block: block.clone(), start, samples: n_samples, rejected, values, sum_of_squares, r2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Kernel;

    fn right() -> Environment {
        Environment::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap(), 0)
    }

    #[test]
    fn deterministic_walks_share_the_ray() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let g = Gate::for_scale(3);
        // Ray from the centre: x_1 = 0..8.
        assert_eq!(intersection_count(&right(), Point::zero(2), &b, (1, 2), 1000, Some(&g)), 9);
    }

    #[test]
    fn deterministic_field_is_indicator_of_ray() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let h = hitting_field(&right(), &b, Point::zero(2), 10, 4, 1000, None);
        assert_eq!(h.values.len(), 9);
        assert!((h.sum_of_squares - 9.0).abs() < 1e-12);
    }

    #[test]
    fn empty_field() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let h = hitting_field(&right(), &b, Point::zero(2), 0, 4, 1000, None);
        assert!(h.values.is_empty());
        assert_eq!(h.sum_of_squares, 0.0);
    }
}
