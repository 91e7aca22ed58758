use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::rng::replicate_seed;
use crate::stats::binom_se;
use crate::walk::step;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnReport {
    pub x: Point,
    #[serde(rename = "L")]
    pub l: f64,
    pub samples: usize,
    pub escapes: usize,
    pub returns: usize,
    pub budget_exhausted: usize,
    /// Escape frequency among runs that finished.
    pub p_hat: f64,
    pub std_err: f64,
    pub reference: Option<f64>,
    pub above_reference: Option<bool>,
}

/// Half-widths of B_{2L}: 2L along e1 and 4L^2 across.
pub fn escape_box(l: f64, d: usize) -> Vec<i64> {
    let mut h = vec![(4.0 * l * l).floor() as i64; d];
    h[0] = (2.0 * l).floor() as i64;
    h
}

fn budget_for(half: &[i64]) -> u64 {
    let m = *half.iter().max().unwrap_or(&1) as f64;
    (200.0 * m * m).max(1e5) as u64
}

#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Escape,
    Return,
    Budget,
}

/// Quenched frequency of leaving x + B_{2L} before coming back to x.
pub fn return_probability(env: &Environment, x: &Point, l: f64, n_samples: usize, seed: u64, reference: Option<f64>) -> Result<ReturnReport> {
    if !(l >= 0.5) {
        return Err(Error::Domain(format!("L = {l} too small for a nontrivial box")));
    }
    if x.dim() != env.dim() {
        return Err(Error::Domain("start dimension mismatch".into()));
    }
    let half = escape_box(l, env.dim());
    let budget = budget_for(&half);
    let outside = |y: &Point| (0..y.dim()).any(|i| (y.get(i) - x.get(i)).abs() > half[i]);
    let outcomes: Vec<Outcome> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, i as u64));
            let mut y = *x;
            for _ in 0..budget {
                y = y.step(step(env, &y, &mut rng));
                if y == *x {
                    return Outcome::Return;
                }
                if outside(&y) {
                    return Outcome::Escape;
                }
            }
            Outcome::Budget
        })
        .collect();
    let escapes = outcomes.iter().filter(|o| **o == Outcome::Escape).count();
    let returns = outcomes.iter().filter(|o| **o == Outcome::Return).count();
    let done = escapes + returns;
    let p = if done > 0 { escapes as f64 / done as f64 } else { f64::NAN };
    Ok(ReturnReport {
        x: *x,
        l,
        samples: n_samples,
        escapes,
        returns,
        budget_exhausted: n_samples - done,
        p_hat: p,
        std_err: if done > 0 { binom_se(p, done) } else { f64::NAN },
        reference,
        above_reference: reference.map(|r| p > r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{plant_naive_trap, EnvironmentLaw, Kernel};
    use crate::exitstats::exact::{exact_exit, SiteRegion};

    #[test]
    fn deterministic_right_always_escapes() {
        let env = Environment::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap(), 0);
        let r = return_probability(&env, &Point::new(&[3, -1]), 2.0, 50, 1, Some(0.5)).unwrap();
        assert_eq!(r.escapes, 50);
        assert_eq!(r.above_reference, Some(true));
    }

    #[test]
    fn srw_matches_absorption_solve() {
        let env = Environment::new(EnvironmentLaw::srw(2).unwrap(), 0);
        let x = Point::zero(2);
        let mut sites = Vec::new();
        for a in -4i64..=4 {
            for b in -16i64..=16 {
                if (a, b) != (0, 0) {
                    sites.push(Point::new(&[a, b]));
                }
            }
        }
        let region = SiteRegion::new(2, sites);
        let mut exact = 0.0;
        for dir in 0..4 {
            let e = exact_exit::<f64, _>(&env, &region, &x.step(dir)).unwrap();
            exact += 0.25 * (1.0 - e.dist.prob(&x));
        }
        let r = return_probability(&env, &x, 2.0, 40_000, 3, None).unwrap();
        assert_eq!(r.budget_exhausted, 0);
        assert!((r.p_hat - exact).abs() < 3.0 * r.std_err, "{} vs {exact}", r.p_hat);
    }

    #[test]
    fn trap_centre_rarely_escapes() {
        let law = EnvironmentLaw::mixture(0.02, vec![Kernel::new(&[0.7, 0.1, 0.1, 0.1]).unwrap(), Kernel::srw(2)], vec![0.5, 0.5]).unwrap();
        let base = Environment::new(law, 4);
        let c = Point::zero(2);
        let env = plant_naive_trap(&base, &c, 4).unwrap();
        let r = return_probability(&env, &c, 2.0, 2000, 5, None).unwrap();
        assert!(r.p_hat < 0.01, "{r:?}");
    }
}
