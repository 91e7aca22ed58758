//! Monte Carlo exit histograms.

use super::dist::FiniteDist;
use super::exact::BoxRegion;
use crate::env::{Environment, EnvironmentLaw};
use crate::geom::{BlockSpec, BoundaryClass};
use crate::lattice::Point;
use crate::rng::{derive_seed, replicate_seed};
use crate::walk::{annealed_env, run_to_stop, StopCause, StopKind, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Samples per work unit. Work units are merged in index order, so results
/// do not depend on the number of threads.
pub const CHUNK: usize = 4096;

#[derive(Clone, Debug)]
pub enum ExitMode {
    Quenched(Environment),
    Annealed(Arc<EnvironmentLaw>),
}

impl ExitMode {
    pub fn is_annealed(&self) -> bool {
        matches!(self, ExitMode::Annealed(_))
    }

    /// Environment and walk rng for sample `i`.
    pub fn sample_env(&self, seed: u64, i: u64) -> (Environment, ChaCha8Rng) {
        let s = replicate_seed(seed, i);
        match self {
            ExitMode::Quenched(env) => (env.clone(), ChaCha8Rng::seed_from_u64(s)),
            ExitMode::Annealed(law) => (annealed_env(law, s), ChaCha8Rng::seed_from_u64(derive_seed(s, "walk"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExitRegion {
    Block(BlockSpec),
    Box(BoxRegion),
}

impl ExitRegion {
    pub fn stop_rule(&self, max_steps: u64) -> StopRule {
        match self {
            ExitRegion::Block(b) => StopRule::block(b.clone(), max_steps),
            ExitRegion::Box(r) => StopRule::new(StopKind::BoxExit { lo: r.lo, hi: r.hi }, max_steps),
        }
    }

    pub fn is_front(&self, x: &Point) -> bool {
        match self {
            ExitRegion::Block(b) => b.classify(x) == BoundaryClass::FrontBoundary,
            ExitRegion::Box(r) => x.get(0) == r.hi.get(0) + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitHistogram {
    pub region: ExitRegion,
    pub start: Point,
    pub counts: BTreeMap<Point, u64>,
    pub total: u64,
    pub front_total: u64,
    pub budget_exhausted: u64,
    pub annealed: bool,
}

impl ExitHistogram {
    pub fn dist(&self) -> FiniteDist<f64> {
        FiniteDist::from_counts(self.start.dim(), self.counts.iter())
    }

    /// Exit law conditioned on the front boundary.
    pub fn front_dist(&self) -> FiniteDist<f64> {
        FiniteDist::from_counts(self.start.dim(), self.counts.iter().filter(|(x, _)| self.region.is_front(x)))
    }

    /// Unconditioned masses of front sites.
    pub fn front_masses(&self) -> FiniteDist<f64> {
        let t = self.total.max(1) as f64;
        FiniteDist::from_pairs(
            self.start.dim(),
            self.counts.iter().filter(|(x, _)| self.region.is_front(x)).map(|(x, c)| (*x, *c as f64 / t)),
        )
    }

    pub fn merge(&mut self, other: &ExitHistogram) {
        for (x, c) in &other.counts {
            *self.counts.entry(*x).or_insert(0) += c;
        }
        self.total += other.total;
        self.front_total += other.front_total;
        self.budget_exhausted += other.budget_exhausted;
    }

    /// CSV rows `x_1,...,x_d,count,is_front`.
    pub fn to_csv(&self) -> String {
        let d = self.start.dim();
        let mut s: String = (1..=d).map(|i| format!("x_{i},")).collect();
        s.push_str("count,is_front\n");
        for (x, c) in &self.counts {
            for v in x.coords() {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{c},{}\n", self.region.is_front(x)));
        }
        s
    }
}

pub fn estimate_exit(
    mode: &ExitMode,
    region: &ExitRegion,
    start: Point,
    n_samples: usize,
    seed: u64,
    step_budget: u64,
) -> ExitHistogram {
    let stop = region.stop_rule(step_budget);
    let empty = ExitHistogram {
        region: region.clone(),
        start,
        counts: BTreeMap::new(),
        total: 0,
        front_total: 0,
        budget_exhausted: 0,
        annealed: mode.is_annealed(),
    };
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<ExitHistogram> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = empty.clone();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let (env, mut rng) = mode.sample_env(seed, i as u64);
                let e = run_to_stop(&env, start, &stop, &mut rng);
                if e.cause == StopCause::BudgetExhausted {
                    h.budget_exhausted += 1;
                    continue;
                }
                *h.counts.entry(e.position).or_insert(0) += 1;
                h.total += 1;
                if region.is_front(&e.position) {
                    h.front_total += 1;
                }
            }
            h
        })
        .collect();
    let mut out = empty;
    for p in &parts {
        out.merge(p);
    }
    out
}

/// Annealed law of X_T - z for a walk from the centre z of a size-N block,
/// conditioned on exiting through the front. This is the table D(N).
pub fn front_displacement_table(
    law: &Arc<EnvironmentLaw>,
    n: u64,
    theta: &[f64],
    n_samples: usize,
    seed: u64,
    step_budget: u64,
) -> FiniteDist<f64> {
    let z = Point::zero(law.dim());
    let b = BlockSpec::new(z, n, theta).expect("valid block");
    let h = estimate_exit(&ExitMode::Annealed(law.clone()), &ExitRegion::Block(b), z, n_samples, seed, step_budget);
    h.front_dist()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Kernel;

    #[test]
    fn deterministic_right_hits_single_front_site() {
        let law = EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        let env = Environment::new(law, 0);
        let b = BlockSpec::axial(Point::zero(2), 3);
        let h = estimate_exit(&ExitMode::Quenched(env), &ExitRegion::Block(b), Point::zero(2), 100, 1, 1000);
        assert_eq!(h.total, 100);
        assert_eq!(h.front_total, 100);
        assert_eq!(h.counts.len(), 1);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let law = Arc::new(EnvironmentLaw::mixture(0.1, vec![Kernel::new(&[0.4, 0.1, 0.25, 0.25]).unwrap(), Kernel::srw(2)], vec![0.5, 0.5]).unwrap());
        let r = ExitRegion::Box(BoxRegion { lo: Point::new(&[-3, -3]), hi: Point::new(&[3, 3]) });
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| estimate_exit(&ExitMode::Annealed(law.clone()), &r, Point::zero(2), 10_000, 5, 10_000))
        };
        assert_eq!(run(1), run(4));
    }
}
