use crate::env::{classify_nestling, plant_naive_trap, trap_log_probability, Environment, EnvironmentLaw, Nestling};
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::rng::{derive_seed, replicate_seed};
use crate::stats::binom_se;
use crate::walk::{annealed_env, run_to_stop, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowdownMethod {
    Direct,
    TrapConditioned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowdownReport {
    pub n: u64,
    pub a: Vec<f64>,
    pub eps: f64,
    pub samples: usize,
    pub hits: usize,
    pub estimate: f64,
    pub std_err: f64,
    pub method: SlowdownMethod,
}

fn in_window(x: &Point, n: u64, a: &[f64], eps: f64) -> bool {
    (0..x.dim()).all(|i| (x.get(i) as f64 / n as f64 - a[i]).abs() < eps)
}

fn frequency(n: u64, a: &[f64], eps: f64, n_samples: usize, method: SlowdownMethod, walk: impl Fn(usize) -> Point + Sync) -> SlowdownReport {
    let hits = (0..n_samples).into_par_iter().filter(|&i| in_window(&walk(i), n, a, eps)).count();
    let p = if n_samples > 0 { hits as f64 / n_samples as f64 } else { 0.0 };
    SlowdownReport { n, a: a.to_vec(), eps, samples: n_samples, hits, estimate: p, std_err: binom_se(p, n_samples.max(1)), method }
}

/// Annealed frequency of ||X_n / n - a||_inf < eps.
pub fn slowdown_direct(law: &Arc<EnvironmentLaw>, a: &[f64], eps: f64, n: u64, n_samples: usize, seed: u64) -> Result<SlowdownReport> {
    if a.len() != law.dim() {
        return Err(Error::Domain("target dimension mismatch".into()));
    }
    let stop = StopRule::budget(n);
    let origin = Point::zero(law.dim());
    Ok(frequency(n, a, eps, n_samples, SlowdownMethod::Direct, |i| {
        let s = replicate_seed(seed, i as u64);
        let env = annealed_env(law, s);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, "walk"));
        run_to_stop(&env, origin, &stop, &mut rng).position
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapRadius {
    Fixed(i64),
    /// r = ceil(c ln n).
    Log(f64),
}

impl TrapRadius {
    pub fn radius(&self, n: u64) -> i64 {
        match *self {
            TrapRadius::Fixed(r) => r,
            TrapRadius::Log(c) => (c * (n as f64).ln()).ceil() as i64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub radius: i64,
    pub sites: usize,
    /// Exact log probability that every trap site shows an inward drift.
    pub ledger: f64,
    pub quenched: SlowdownReport,
    /// ln of exp(ledger) times the quenched frequency.
    pub ln_lower_bound: f64,
}

/// Lower bound on the annealed slowdown probability from the naive trap:
/// the exact environment probability of an inward-pointing ball of radius r
/// times the quenched slowdown frequency inside a planted copy of it.
pub fn trap_lower_bound(
    law: &Arc<EnvironmentLaw>,
    n: u64,
    radius: TrapRadius,
    a: &[f64],
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TrapReport> {
    if classify_nestling(law)? != Nestling::PlainNestling {
        return Err(Error::NotNestling);
    }
    let d = law.dim();
    let r = radius.radius(n);
    let probs: Vec<f64> = (0..2 * d).map(|dir| law.prob_drift_along(dir)).collect::<Result<_>>()?;
    let ledger = trap_log_probability(d, r, |dir| probs[dir]);
    let origin = Point::zero(d);
    let base = Environment::from_arc(law.clone(), derive_seed(seed, "env"));
    let env = plant_naive_trap(&base, &origin, r)?;
    let stop = StopRule::budget(n);
    let wseed = derive_seed(seed, "walk");
    let quenched = frequency(n, a, eps, n_samples, SlowdownMethod::TrapConditioned, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(wseed, i as u64));
        run_to_stop(&env, origin, &stop, &mut rng).position
    });
    let ln_lower_bound = ledger + quenched.estimate.ln();
    Ok(TrapReport { radius: r, sites: (2 * r as usize + 1).pow(d as u32), ledger, quenched, ln_lower_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Kernel;

    fn nestling() -> Arc<EnvironmentLaw> {
        let ks = vec![
            Kernel::new(&[0.7, 0.1, 0.1, 0.1]).unwrap(),
            Kernel::new(&[0.1, 0.7, 0.1, 0.1]).unwrap(),
            Kernel::new(&[0.1, 0.1, 0.7, 0.1]).unwrap(),
            Kernel::new(&[0.1, 0.1, 0.1, 0.7]).unwrap(),
        ];
        Arc::new(EnvironmentLaw::mixture(0.1, ks, vec![0.4, 0.1, 0.25, 0.25]).unwrap())
    }

    #[test]
    fn deterministic_right_hits_e1() {
        let law = Arc::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap());
        let r = slowdown_direct(&law, &[1.0, 0.0], 0.1, 50, 100, 1).unwrap();
        assert_eq!(r.estimate, 1.0);
        let far = slowdown_direct(&law, &[-1.0, 0.0], 0.1, 50, 100, 1).unwrap();
        assert_eq!(far.estimate, 0.0);
    }

    #[test]
    fn ledger_is_exact() {
        let law = nestling();
        let rep = trap_lower_bound(&law, 250, TrapRadius::Fixed(5), &[0.0, 0.0], 0.1, 200, 3).unwrap();
        // per direction: +e1 0.4, -e1 0.1, +e2 0.25, -e2 0.25; the centre points -e1
        let mut oracle = 0.0;
        for x in -5i64..=5 {
            for y in -5i64..=5 {
                let dir = if x == 0 && y == 0 {
                    1
                } else if x.abs() >= y.abs() {
                    if x > 0 { 1 } else { 0 }
                } else if y > 0 {
                    3
                } else {
                    2
                };
                oracle += [0.4f64, 0.1, 0.25, 0.25][dir].ln();
            }
        }
        assert!((rep.ledger - oracle).abs() < 1e-9);
        assert!(rep.quenched.estimate > 0.5);
        assert_eq!(rep.sites, 121);
    }

    #[test]
    fn non_nestling_is_rejected() {
        let law = Arc::new(EnvironmentLaw::fixed(0.1, Kernel::new(&[0.5, 0.1, 0.2, 0.2]).unwrap()).unwrap());
        assert_eq!(trap_lower_bound(&law, 100, TrapRadius::Log(1.0), &[0.0, 0.0], 0.1, 10, 0).unwrap_err(), Error::NotNestling);
    }
}
