use crate::env::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::regen::{detect_regenerations, RegenerationRecord};
use crate::rng::replicate_seed;
use crate::stats::binom_se;
use crate::walk::{run_annealed, StopRule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub count: usize,
    pub of: usize,
    pub p: f64,
    pub std_err: f64,
}

impl Frequency {
    fn new(count: usize, of: usize) -> Self {
        let p = if of > 0 { count as f64 / of as f64 } else { f64::NAN };
        Frequency { count, of, p, std_err: if of > 0 { binom_se(p, of) } else { f64::NAN } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub n: u64,
    pub r: f64,
    pub b: f64,
    /// Whether r / v1 < b < 1, as the decomposition asks.
    pub b_admissible: bool,
    pub rho_hat: f64,
    pub v1_hat: f64,
    pub m: usize,
    pub horizon: u64,
    pub slabs: usize,
    /// X_n . e1 < rn.
    pub lhs: Frequency,
    /// tau_(m+1) > n.
    pub tail: Frequency,
    /// X_(tau_(m+1)) . e1 < rn; runs with tau_(m+1) past the horizon and
    /// max projection below rn count here.
    pub shortfall: Frequency,
    pub censored: usize,
    pub rhs: f64,
    pub slack: f64,
    /// Runs in the left event but in neither right event. Always zero.
    pub violations: usize,
    /// tau_1 and the first m slab durations all below n^(1/8).
    pub a_event: Frequency,
    pub tail_given_a: Frequency,
    pub tail_bound: f64,
}

struct Sample {
    lhs: bool,
    tail: bool,
    shortfall: Option<bool>,
    max_proj: i64,
    records: Vec<RegenerationRecord>,
}

/// Paired estimates of the terms of
/// P(X_n < rn) <= P(tau_(m+1) > n) + P(X_(tau_(m+1)) < rn), m = nb / rho,
/// all in direction e1, plus the truncation at slab durations n^(1/8).
///
/// `b` defaults to the midpoint of (r / v1, 1), with rho and v1 pooled from
/// the slabs of the same runs.
pub fn reduction_diagnostics(law: &Arc<EnvironmentLaw>, n: u64, r: f64, b: Option<f64>, n_samples: usize, seed: u64) -> Result<ReductionReport> {
    if n == 0 || n_samples == 0 {
        return Err(Error::InsufficientData("need n > 0 and at least one sample".into()));
    }
    let d = law.dim();
    let e1: Vec<f64> = Point::unit(d, 0).to_f64();
    let horizon = 2 * n;
    let stop = StopRule::budget(horizon);
    let runs: Vec<(Vec<RegenerationRecord>, i64, i64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let (traj, _) = run_annealed(law, Point::zero(d), &stop, replicate_seed(seed, i as u64));
            let recs = detect_regenerations(&traj.positions, &e1);
            let at_n = traj.positions[n as usize].get(0);
            let max_proj = traj.positions.iter().map(|p| p.get(0)).max().unwrap_or(0);
            (recs, at_n, max_proj)
        })
        .collect();

    // Pool slabs 2.. whose end has at least n steps of lookahead.
    let mut dur = 0.0;
    let mut disp = 0.0;
    let mut slabs = 0usize;
    for (recs, _, _) in &runs {
        for rec in recs.iter().skip(1).filter(|rec| rec.tau as u64 <= n) {
            dur += rec.slab_duration as f64;
            disp += rec.slab_displacement.get(0) as f64;
            slabs += 1;
        }
    }
    if slabs == 0 || dur == 0.0 {
        return Err(Error::InsufficientData(format!("{slabs} slabs within the first {n} steps")));
    }
    let rho = dur / slabs as f64;
    let v1 = disp / dur;
    let lo = r / v1;
    let b = b.unwrap_or(if lo < 1.0 { 0.5 * (lo.max(0.0) + 1.0) } else { 0.5 });
    let b_admissible = lo < b && b < 1.0;
    let m = (n as f64 * b / rho).floor() as usize;
    let rn = r * n as f64;
    let trunc = (n as f64).powf(0.125);

    let samples: Vec<Sample> = runs
        .into_iter()
        .map(|(records, at_n, max_proj)| {
            let tau = records.get(m).map(|rec| rec.tau as u64);
            Sample {
                lhs: (at_n as f64) < rn,
                tail: tau.is_none_or(|t| t > n),
                shortfall: records.get(m).map(|rec| (rec.position.get(0) as f64) < rn),
                max_proj,
                records,
            }
        })
        .collect();
    let total = samples.len();
    let lhs = samples.iter().filter(|s| s.lhs).count();
    let tail = samples.iter().filter(|s| s.tail).count();
    let censored = samples.iter().filter(|s| s.shortfall.is_none()).count();
    let short = samples
        .iter()
        .filter(|s| s.shortfall.unwrap_or_else(|| (s.max_proj as f64) < rn))
        .count();
    let violations = samples
        .iter()
        .filter(|s| s.lhs && !s.tail && !s.shortfall.unwrap_or(true))
        .count();
    let in_a = |s: &Sample| {
        s.records.len() > m
            && (s.records[0].tau as f64) < trunc
            && s.records[1..=m].iter().all(|rec| (rec.slab_duration as f64) < trunc)
    };
    let a = samples.iter().filter(|s| in_a(s)).count();
    let tail_a = samples.iter().filter(|s| in_a(s) && s.tail).count();
    let lhs_f = Frequency::new(lhs, total);
    let tail_f = Frequency::new(tail, total);
    let short_f = Frequency::new(short, total);
    let a_f = Frequency::new(a, total);
    let tail_given_a = Frequency::new(tail_a, a);
    let rhs = tail_f.p + short_f.p;
    let tail_bound = (1.0 - a_f.p) + if a > 0 { tail_given_a.p } else { 0.0 };
    Ok(ReductionReport {
        n,
        r,
        b,
        b_admissible,
        rho_hat: rho,
        v1_hat: v1,
        m,
        horizon,
        slabs,
        slack: rhs - lhs_f.p,
        lhs: lhs_f,
        tail: tail_f,
        shortfall: short_f,
        censored,
        rhs,
        violations,
        a_event: a_f,
        tail_given_a,
        tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Kernel;

    #[test]
    fn deterministic_right_has_empty_terms() {
        let law = Arc::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap());
        let rep = reduction_diagnostics(&law, 100, 0.5, None, 20, 1).unwrap();
        assert_eq!(rep.rho_hat, 1.0);
        assert_eq!(rep.v1_hat, 1.0);
        assert_eq!(rep.m, 75);
        assert_eq!(rep.lhs.count, 0);
        assert_eq!(rep.tail.count, 0);
        assert_eq!(rep.shortfall.count, 0);
        assert_eq!(rep.a_event.count, 20);
        assert_eq!(rep.violations, 0);
    }

    fn drifted() -> Arc<EnvironmentLaw> {
        Arc::new(
            EnvironmentLaw::mixture(0.1, vec![Kernel::new(&[0.4, 0.1, 0.25, 0.25]).unwrap(), Kernel::new(&[0.55, 0.15, 0.15, 0.15]).unwrap()], vec![0.5, 0.5])
                .unwrap(),
        )
    }

    #[test]
    fn drifted_law_inequality_holds() {
        let law = drifted();
        let pilot = reduction_diagnostics(&law, 400, 0.1, None, 200, 2).unwrap();
        let r = 0.5 * pilot.v1_hat;
        let rep = reduction_diagnostics(&law, 400, r, None, 1000, 3).unwrap();
        assert!(rep.b_admissible);
        assert_eq!(rep.violations, 0);
        assert!(rep.rhs >= rep.lhs.p);
        let fast = reduction_diagnostics(&law, 400, 2.0 * pilot.v1_hat, None, 500, 4).unwrap();
        assert!(fast.lhs.p > 0.95, "{:?}", fast.lhs);
        assert_eq!(fast.violations, 0);
        assert!(fast.rhs >= fast.lhs.p);
    }

    #[test]
    fn rejects_empty_input() {
        let law = Arc::new(EnvironmentLaw::srw(1).unwrap());
        let rep = reduction_diagnostics(&law, 10, 0.5, None, 0, 0);
        assert!(matches!(rep, Err(Error::InsufficientData(_))));
    }
}
