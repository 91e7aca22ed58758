//! Quenched and annealed walk engines with stopping rules.

use crate::env::{Environment, EnvironmentLaw};
use crate::geom::BlockSpec;
use crate::lattice::Point;
use crate::rng::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub enum StopKind {
    /// <x, l> >= level.
    Halfspace { dir: Vec<f64>, level: f64 },
    /// <x, l> >= hi or <x, l> <= lo.
    Slab { dir: Vec<f64>, lo: f64, hi: f64 },
    Set(HashSet<Point>),
    /// Leaving the block.
    Block(BlockSpec),
    /// Leaving the box [lo, hi] (inclusive).
    BoxExit { lo: Point, hi: Point },
    /// Only the step budget applies.
    Budget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StopRule {
    pub kind: StopKind,
    pub max_steps: u64,
}

impl StopRule {
    pub fn new(kind: StopKind, max_steps: u64) -> Self {
        StopRule { kind, max_steps }
    }

    pub fn halfspace(dir: &[f64], level: f64, max_steps: u64) -> Self {
        Self::new(StopKind::Halfspace { dir: dir.to_vec(), level }, max_steps)
    }

    pub fn set(sites: impl IntoIterator<Item = Point>, max_steps: u64) -> Self {
        Self::new(StopKind::Set(sites.into_iter().collect()), max_steps)
    }

    pub fn block(b: BlockSpec, max_steps: u64) -> Self {
        Self::new(StopKind::Block(b), max_steps)
    }

    pub fn budget(max_steps: u64) -> Self {
        Self::new(StopKind::Budget, max_steps)
    }

    #[inline]
    pub fn hit(&self, x: &Point) -> bool {
        match &self.kind {
            StopKind::Halfspace { dir, level } => x.dot(dir) >= *level,
            StopKind::Slab { dir, lo, hi } => {
                let v = x.dot(dir);
                v >= *hi || v <= *lo
            }
            StopKind::Set(s) => s.contains(x),
            StopKind::Block(b) => !b.contains(x),
            StopKind::BoxExit { lo, hi } => (0..x.dim()).any(|i| x.get(i) < lo.get(i) || x.get(i) > hi.get(i)),
            StopKind::Budget => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    Hit,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub walk_seed: u64,
    pub positions: Vec<Point>,
}

impl Trajectory {
    pub fn start(&self) -> Point {
        self.positions[0]
    }

    pub fn end(&self) -> Point {
        *self.positions.last().unwrap()
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.positions.len() == 1
    }

    /// Direction indices of the steps.
    pub fn steps(&self) -> Vec<usize> {
        self.positions.windows(2).map(|w| w[0].dir_to(&w[1]).expect("nearest-neighbour path")).collect()
    }

    pub fn is_nearest_neighbour(&self) -> bool {
        self.positions.windows(2).all(|w| (w[1] - w[0]).norm1() == 1)
    }

    /// CSV rows `t,x_1,...,x_d`.
    pub fn to_csv(&self) -> String {
        let d = self.start().dim();
        let mut out = String::from("t");
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (t, p) in self.positions.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in p.coords() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One step from `x`.
#[inline]
pub fn step<R: Rng>(env: &Environment, x: &Point, rng: &mut R) -> usize {
    env.sample_dir(x, rng.random::<f64>())
}

/// Outcome of a run that keeps only the endpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exit {
    pub position: Point,
    pub steps: u64,
    pub cause: StopCause,
}

/// Run without recording the path.
pub fn run_to_stop<R: Rng>(env: &Environment, start: Point, stop: &StopRule, rng: &mut R) -> Exit {
    let mut x = start;
    let mut n = 0;
    while !stop.hit(&x) {
        if n >= stop.max_steps {
            return Exit { position: x, steps: n, cause: StopCause::BudgetExhausted };
        }
        x = x.step(step(env, &x, rng));
        n += 1;
    }
    Exit { position: x, steps: n, cause: StopCause::Hit }
}

/// Run recording the path into `out` (cleared first).
pub fn run_path<R: Rng>(env: &Environment, start: Point, stop: &StopRule, rng: &mut R, out: &mut Vec<Point>) -> StopCause {
    out.clear();
    let mut x = start;
    out.push(x);
    while !stop.hit(&x) {
        if out.len() as u64 > stop.max_steps {
            return StopCause::BudgetExhausted;
        }
        x = x.step(step(env, &x, rng));
        out.push(x);
    }
    StopCause::Hit
}

pub fn run_quenched(env: &Environment, start: Point, stop: &StopRule, walk_seed: u64) -> (Trajectory, StopCause) {
    let mut rng = ChaCha8Rng::seed_from_u64(walk_seed);
    let mut positions = Vec::new();
    let cause = run_path(env, start, stop, &mut rng, &mut positions);
    (Trajectory { walk_seed, positions }, cause)
}

/// Environment drawn afresh for one annealed trajectory.
pub fn annealed_env(law: &Arc<EnvironmentLaw>, seed: u64) -> Environment {
    Environment::from_arc(law.clone(), derive_seed(seed, "env"))
}

pub fn run_annealed(law: &Arc<EnvironmentLaw>, start: Point, stop: &StopRule, seed: u64) -> (Trajectory, StopCause) {
    let env = annealed_env(law, seed);
    run_quenched(&env, start, stop, derive_seed(seed, "walk"))
}

/// Smallest n with X_n satisfying the rule's hitting condition.
pub fn first_hit_time(traj: &Trajectory, stop: &StopRule) -> Option<usize> {
    traj.positions.iter().position(|x| stop.hit(x))
}

/// Time of the k-th visit to `site` strictly after time 0.
pub fn kth_return_time(traj: &Trajectory, site: &Point, k: usize) -> Option<usize> {
    assert!(k >= 1, "k must be at least 1");
    traj.positions.iter().enumerate().skip(1).filter(|(_, p)| *p == site).nth(k - 1).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Kernel;

    fn path1(v: &[i64]) -> Trajectory {
        Trajectory { walk_seed: 0, positions: v.iter().map(|x| Point::new(&[*x])).collect() }
    }

    #[test]
    fn deterministic_right_halfspace() {
        let law = EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        let env = Environment::new(law, 0);
        let (t, c) = run_quenched(&env, Point::zero(2), &StopRule::halfspace(&[1.0, 0.0], 5.0, 100), 1);
        assert_eq!(c, StopCause::Hit);
        assert_eq!(t.len(), 5);
        assert_eq!(t.end(), Point::new(&[5, 0]));
        assert!(t.is_nearest_neighbour());
    }

    #[test]
    fn zero_budget_keeps_start() {
        let law = Arc::new(EnvironmentLaw::srw(2).unwrap());
        let (t, c) = run_annealed(&law, Point::new(&[1, 1]), &StopRule::budget(0), 4);
        assert_eq!(t.positions, vec![Point::new(&[1, 1])]);
        assert_eq!(c, StopCause::BudgetExhausted);
    }

    #[test]
    fn hit_and_return_times() {
        let t = path1(&[0, 1, 2, 1]);
        assert_eq!(first_hit_time(&t, &StopRule::halfspace(&[1.0], 2.0, 10)), Some(2));
        assert_eq!(first_hit_time(&t, &StopRule::set([Point::new(&[7])], 10)), None);
        let r = path1(&[0, 1, 0, 1, 0]);
        assert_eq!(kth_return_time(&r, &Point::new(&[0]), 2), Some(4));
        assert_eq!(kth_return_time(&r, &Point::new(&[0]), 3), None);
    }

    #[test]
    fn reproducible() {
        let law = Arc::new(EnvironmentLaw::mixture(0.1, vec![Kernel::new(&[0.4, 0.1, 0.25, 0.25]).unwrap(), Kernel::srw(2)], vec![0.5, 0.5]).unwrap());
        let stop = StopRule::budget(500);
        assert_eq!(run_annealed(&law, Point::zero(2), &stop, 9), run_annealed(&law, Point::zero(2), &stop, 9));
        assert_ne!(run_annealed(&law, Point::zero(2), &stop, 9).0, run_annealed(&law, Point::zero(2), &stop, 10).0);
    }
}
