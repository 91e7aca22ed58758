use crate::error::{Error, Result};
use crate::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// 2 exp(-K^2 / (2U)) for essential variance U.
pub fn azuma_bound(u: f64, k: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("essential variance must be positive, got {u}")));
    }
    Ok(2.0 * (-k * k / (2.0 * u)).exp())
}

/// A martingale with increments D_1..D_n bounded by U_1..U_n.
pub trait Martingale: Sync {
    fn horizon(&self) -> usize;
    /// Sure bound on |D_k|, k = 1..=n.
    fn bound(&self, k: usize) -> f64;
    fn increment(&self, k: usize, past: &[f64], rng: &mut ChaCha8Rng) -> f64;

    fn essential_variance(&self) -> f64 {
        (1..=self.horizon()).map(|k| self.bound(k).powi(2)).sum()
    }
}

/// Fair +-1 steps.
pub struct FairCoin(pub usize);

impl Martingale for FairCoin {
    fn horizon(&self) -> usize {
        self.0
    }
    fn bound(&self, _: usize) -> f64 {
        1.0
    }
    fn increment(&self, _: usize, _: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        if rng.random::<bool>() { 1.0 } else { -1.0 }
    }
}

/// +-1 with probability p/2 each, 0 otherwise.
pub struct Lazy {
    pub n: usize,
    pub p_move: f64,
}

impl Martingale for Lazy {
    fn horizon(&self) -> usize {
        self.n
    }
    fn bound(&self, _: usize) -> f64 {
        1.0
    }
    fn increment(&self, _: usize, _: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        if u < self.p_move / 2.0 {
            1.0
        } else if u < self.p_move {
            -1.0
        } else {
            0.0
        }
    }
}

/// D_k = +-k.
pub struct Heterogeneous(pub usize);

impl Martingale for Heterogeneous {
    fn horizon(&self) -> usize {
        self.0
    }
    fn bound(&self, k: usize) -> f64 {
        k as f64
    }
    fn increment(&self, k: usize, _: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        if rng.random::<bool>() { k as f64 } else { -(k as f64) }
    }
}

/// Identically zero increments with a nominal unit bound.
pub struct Zero(pub usize);

impl Martingale for Zero {
    fn horizon(&self) -> usize {
        self.0
    }
    fn bound(&self, _: usize) -> f64 {
        1.0
    }
    fn increment(&self, _: usize, _: &[f64], _: &mut ChaCha8Rng) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub k: f64,
    pub statistic: f64,
    pub bound: f64,
    pub slack_sigma: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailAudit {
    pub runs: usize,
    pub essential_variance: f64,
    pub rows: Vec<TailRow>,
    /// Increments seen outside their stated bound.
    pub bound_violations: u64,
    /// Largest |mean D_k| over k in standard errors.
    pub max_drift_sigma: f64,
    pub pass: bool,
    pub failed_k: Option<f64>,
}

/// Compare the empirical P(|M_n| > K) with the Azuma bound on each K.
pub fn martingale_tail_audit<M: Martingale>(m: &M, k_grid: &[f64], n_runs: usize, seed: u64) -> Result<TailAudit> {
    let n = m.horizon();
    let u = m.essential_variance();
    struct Acc {
        finals: Vec<f64>,
        sum: Vec<f64>,
        sum2: Vec<f64>,
        violations: u64,
    }
    let chunks: Vec<Acc> = (0..n_runs.div_ceil(1024))
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc { finals: Vec::new(), sum: vec![0.0; n], sum2: vec![0.0; n], violations: 0 };
            let mut past = Vec::with_capacity(n);
            for r in c * 1024..((c + 1) * 1024).min(n_runs) {
                let mut rng = stream(seed, r as u64);
                past.clear();
                let mut total = 0.0;
                for k in 1..=n {
                    let dk = m.increment(k, &past, &mut rng);
                    if dk.abs() > m.bound(k) + 1e-12 {
                        acc.violations += 1;
                    }
                    acc.sum[k - 1] += dk;
                    acc.sum2[k - 1] += dk * dk;
                    total += dk;
                    past.push(dk);
                }
                acc.finals.push(total);
            }
            acc
        })
        .collect();
    let mut finals = Vec::with_capacity(n_runs);
    let mut sum = vec![0.0; n];
    let mut sum2 = vec![0.0; n];
    let mut violations = 0;
    for a in chunks {
        finals.extend(a.finals);
        violations += a.violations;
        for k in 0..n {
            sum[k] += a.sum[k];
            sum2[k] += a.sum2[k];
        }
    }
    let runs = n_runs as f64;
    let mut max_drift_sigma: f64 = 0.0;
    for k in 0..n {
        let mean = sum[k] / runs;
        let var = (sum2[k] / runs - mean * mean).max(0.0);
        if var > 0.0 {
            max_drift_sigma = max_drift_sigma.max(mean.abs() / (var / runs).sqrt());
        } else if mean != 0.0 {
            max_drift_sigma = f64::INFINITY;
        }
    }
    let mut rows = Vec::new();
    let mut failed_k = None;
    for &k in k_grid {
        let p = finals.iter().filter(|x| x.abs() > k).count() as f64 / runs;
        let bound = if u > 0.0 { azuma_bound(u, k)? } else { 2.0 };
        let se = (p * (1.0 - p) / runs).sqrt().max(1.0 / runs);
        let slack_sigma = (bound - p) / se;
        let pass = p <= bound + 3.0 * se;
        if !pass && failed_k.is_none() {
            failed_k = Some(k);
        }
        rows.push(TailRow { k, statistic: p, bound, slack_sigma, pass });
    }
    Ok(TailAudit {
        runs: n_runs,
        essential_variance: u,
        pass: failed_k.is_none() && violations == 0,
        rows,
        bound_violations: violations,
        max_drift_sigma,
        failed_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        assert!((azuma_bound(100.0, 30.0).unwrap() - 2.0 * (-4.5f64).exp()).abs() < 1e-15);
        assert_eq!(azuma_bound(5.0, 0.0).unwrap(), 2.0);
        assert!(azuma_bound(0.0, 1.0).is_err());
        assert!(azuma_bound(200.0, 30.0).unwrap() > azuma_bound(100.0, 30.0).unwrap());
    }

    #[test]
    fn heterogeneous_variance_is_sum_of_squares() {
        assert_eq!(Heterogeneous(10).essential_variance(), 385.0);
    }

    #[test]
    fn zero_martingale_has_empty_tails() {
        let a = martingale_tail_audit(&Zero(50), &[0.0, 1.0], 100, 3).unwrap();
        assert!(a.pass);
        assert!(a.rows.iter().all(|r| r.statistic == 0.0));
    }
}
