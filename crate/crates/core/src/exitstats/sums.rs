//! Sums of approximately Gaussian exit displacements: the ladder check that
//! a sum of n close summands stays close to the table at scale N sqrt(n),
//! and the shared-slab decomposition of a two-table convolution.

use super::closeness::{check_closeness, ClauseReport};
use super::dist::FiniteDist;
use crate::env::EnvironmentLaw;
use crate::error::{Error, Result};
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
use std::sync::Arc;

/// The index h in the budget factor R_{h+1}(N).
pub const LADDER_H: u32 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumLadderReport {
    pub n_scale: u64,
    pub summands: usize,
    pub lambda: f64,
    pub k: i64,
    pub r_factor: f64,
    pub budget_lambda: f64,
    pub budget_k: i64,
    /// Closeness of each summand law to D(N) at (lambda, k).
    pub summand_clauses: Vec<ClauseReport>,
    pub sum_clauses: ClauseReport,
    pub passed: bool,
    pub lambda_slack: f64,
    pub k_slack: i64,
}

/// Check that the sum of independent summands, each (lambda, k)-close to
/// `d_n` = D(N), is (lambda R6(N), 2 n k R6(N))-close to `d_target` = D(N sqrt n).
pub fn sum_ladder_check(
    d_n: &FiniteDist<f64>,
    d_target: &FiniteDist<f64>,
    summands: &[FiniteDist<f64>],
    n_scale: u64,
    lambda: f64,
    k: i64,
) -> Result<SumLadderReport> {
    let n = summands.len();
    if n == 0 || !(lambda > 0.0 && lambda < 1.0) || (n as f64) >= 1.0 / lambda || k < 1 {
        return Err(Error::Domain(format!("need 0 < lambda < 1, 1 <= n < 1/lambda and k >= 1; got n={n}, lambda={lambda}, k={k}")));
    }
    let r = scale_r(LADDER_H + 1, n_scale as f64)?;
    let budget_lambda = (lambda * r).min(1.0);
    let budget_k = (2.0 * n as f64 * k as f64 * r).floor() as i64;

    let mut summand_clauses = Vec::new();
    let mut summands_ok = true;
    for s in summands {
        let c = check_closeness(d_n, s, lambda, k)?;
        summands_ok &= c.is_certificate();
        summand_clauses.push(c.clauses().clone());
    }
    let mut sum = summands[0].normalized();
    for s in &summands[1..] {
        sum = sum.convolve(&s.normalized());
    }
    let (passed, sum_clauses) = match check_closeness(d_target, &sum, budget_lambda, budget_k) {
        Ok(c) => (c.is_certificate(), c.clauses().clone()),
        Err(Error::InfeasibleCoupling(_)) => {
            let c = super::closeness::CouplingPlan::build(d_target, &sum, 1)?;
            (false, c.clauses(budget_lambda, budget_k))
        }
        Err(e) => return Err(e),
    };
    Ok(SumLadderReport {
        n_scale,
        summands: n,
        lambda,
        k,
        r_factor: r,
        budget_lambda,
        budget_k,
        summand_clauses,
        lambda_slack: budget_lambda - sum_clauses.mismatch,
        k_slack: budget_k - sum_clauses.displacement,
        sum_clauses,
        passed: passed && summands_ok,
    })
}

/// The most perturbed law of the form (1-a) D + a (D shifted by `dir`)
/// that is still (lambda, k)-close to D, found by bisection on a.
pub fn adversarial_summand(d_n: &FiniteDist<f64>, dir: Point, lambda: f64, k: i64) -> Result<FiniteDist<f64>> {
    let make = |a: f64| {
        let mut out = FiniteDist::empty(d_n.dim());
        for (x, w) in d_n.iter() {
            out.add(*x, (1.0 - a) * w);
            out.add(*x + dir, a * w);
        }
        out
    };
    let ok = |a: f64| -> Result<bool> { Ok(check_closeness(d_n, &make(a), lambda, k).map(|c| c.is_certificate()).unwrap_or(false)) };
    let (mut lo, mut hi) = (0.0, 1.0);
    if ok(hi)? {
        return Ok(make(hi));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(make(lo))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub n_scale: u64,
    pub j: u64,
    pub samples: usize,
    pub skipped: usize,
    /// Samples where the level N^2 (j-1) is crossed before the first regeneration.
    pub first_slab_straddles: usize,
    /// (k, P(|U'| > k)) in the l-infinity norm.
    pub tail: Vec<(u64, f64)>,
    pub median_residual: f64,
    pub mean_residual: f64,
    pub median_slab_radius: f64,
    pub max_slab_radius: f64,
    /// Fit of ln P(|U'| > k) = ln C - c k^gamma.
    pub gamma: f64,
    pub fit_c: f64,
    pub fit_rate: f64,
}

struct Walk {
    positions: Vec<Point>,
    /// Times of certified regenerations.
    taus: Vec<usize>,
    radii: Vec<f64>,
}

fn walk_to(law: &Arc<EnvironmentLaw>, seed: u64, level: i64, min_margin: f64, max_steps: u64) -> Option<Walk> {
    let d = law.dim();
    let env = annealed_env(law, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "walk"));
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let stop = StopRule::halfspace(&e1, level as f64 + 2.0 * min_margin, max_steps);
    let mut positions = Vec::new();
    if run_path(&env, Point::zero(d), &stop, &mut rng, &mut positions) == StopCause::BudgetExhausted {
        return None;
    }
    let recs = detect_regenerations(&positions, &e1);
    let usable = certified(&recs, min_margin);
    Some(Walk { taus: usable.iter().map(|r| r.tau).collect(), radii: usable.iter().map(|r| r.radius as f64).collect(), positions })
}

fn first_hit(path: impl Iterator<Item = Point>, level: i64) -> Option<Point> {
    path.into_iter().find(|p| p.get(0) >= level)
}

fn quantile(xs: &mut [f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    xs[((xs.len() - 1) as f64 * q).round() as usize]
}

/// Couple U ~ D(N) * D(N sqrt(j-1)) with U_hat ~ D(N sqrt j) by sharing
/// regeneration slabs, and report the tail of U' = U - U_hat. Front
/// conditioning is replaced by first passage of the level, which differs
/// only on side exits.
pub fn convolution_decomposition_check(
    law: &Arc<EnvironmentLaw>,
    n_scale: u64,
    j: u64,
    samples: usize,
    seed: u64,
    min_margin: f64,
    max_steps: u64,
    gamma: f64,
) -> Result<DecompositionReport> {
    if j == 0 || n_scale < 1 {
        return Err(Error::Domain("need j >= 1 and N >= 1".into()));
    }
    let n2 = (n_scale * n_scale) as i64;
    let top = n2 * j as i64;
    let mid = n2 * (j as i64 - 1);
    let out: Vec<Option<(f64, bool, Vec<f64>)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = replicate_seed(seed, i as u64);
            let a = walk_to(law, derive_seed(s, "a"), top, min_margin, max_steps)?;
            let u_hat = first_hit(a.positions.iter().copied(), top)?;
            if j == 1 {
                return Some((0.0, false, a.radii));
            }
            let v1 = first_hit(a.positions.iter().copied(), mid)?;
            let b = walk_to(law, derive_seed(s, "b"), n2, min_margin, max_steps)?;
            let tb = *b.taus.first()?;
            // The slab of A that straddles the level N^2 (j-1).
            let idx = a.taus.iter().rposition(|&t| a.positions[t].get(0) < mid);
            let (from, straddle) = match idx {
                Some(h) => (a.taus[h], false),
                None => (0, true),
            };
            let base = a.positions[from];
            let offset = b.positions[tb];
            let v2 = first_hit(
                b.positions[..=tb].iter().copied().chain(a.positions[from..].iter().map(|p| offset + (*p - base))),
                n2,
            )?;
            let u = v1 + v2 - u_hat;
            let mut radii = a.radii;
            radii.extend(b.radii.first());
            Some((u.norm_inf() as f64, straddle, radii))
        })
        .collect();
    let mut residuals = Vec::new();
    let mut radii = Vec::new();
    let mut straddles = 0;
    for (r, s, rad) in out.iter().flatten() {
        residuals.push(*r);
        straddles += *s as usize;
        radii.extend(rad);
    }
    let skipped = samples - residuals.len();
    if residuals.is_empty() {
        return Err(Error::InsufficientData("no completed samples".into()));
    }
    let m = residuals.len() as f64;
    let max_r = residuals.iter().cloned().fold(0.0, f64::max) as u64;
    let tail: Vec<(u64, f64)> = (0..=max_r).map(|k| (k, residuals.iter().filter(|&&r| r > k as f64).count() as f64 / m)).collect();
    let pts: Vec<(f64, f64)> = tail.iter().filter(|(_, p)| *p > 0.0).map(|(k, p)| ((*k as f64).powf(gamma), p.ln())).collect();
    let (fit_c, fit_rate) = if pts.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let (a, b, _) = linear_fit(&xs, &ys);
        (a.exp(), -b)
    } else {
        (f64::NAN, f64::NAN)
    };
    let mean_residual = residuals.iter().sum::<f64>() / m;
    let median_residual = quantile(&mut residuals, 0.5);
    let max_slab_radius = radii.iter().cloned().fold(0.0, f64::max);
    let median_slab_radius = quantile(&mut radii, 0.5);
    Ok(DecompositionReport {
        n_scale,
        j,
        samples,
        skipped,
        first_slab_straddles: straddles,
        tail,
        median_residual,
        mean_residual,
        median_slab_radius,
        max_slab_radius,
        gamma,
        fit_c,
        fit_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FiniteDist<f64> {
        FiniteDist::from_pairs(
            2,
            [(Point::new(&[4, -1]), 0.25), (Point::new(&[4, 0]), 0.5), (Point::new(&[4, 1]), 0.25)],
        )
    }

    #[test]
    fn single_summand_reduces_to_its_certificate() {
        let r = sum_ladder_check(&table(), &table(), &[table()], 10, 0.2, 1).unwrap();
        assert!(r.passed);
        assert_eq!(r.budget_k, 2);
    }

    #[test]
    fn rejects_too_many_summands() {
        let s = vec![table(); 5];
        assert!(sum_ladder_check(&table(), &table(), &s, 10, 0.2, 1).is_err());
    }

    #[test]
    fn adversarial_summand_stays_close() {
        let a = adversarial_summand(&table(), Point::new(&[0, 1]), 0.2, 1).unwrap();
        assert!(check_closeness(&table(), &a, 0.2, 1).unwrap().is_certificate());
        assert!(a.tv(&table()) > 0.0);
    }
}
