//! Regeneration times, slab statistics and tau_1 tails.

use crate::env::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::scale::scale_r;
use crate::stats::{binom_se, ks_two_sample, lag1_autocorr, z_two_sided};
use crate::walk::{run_annealed, StopRule, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerationRecord {
    pub tau: usize,
    pub position: Point,
    /// tau_n - tau_(n-1); the first record uses tau_0 = 0 and may be zero.
    pub slab_duration: usize,
    pub slab_displacement: Point,
    /// Max l-infinity deviation from the slab's starting point over the slab.
    pub radius: i64,
    /// <X_last, l> - <X_(tau+1), l>: how far the observed future advanced
    /// while staying above the regeneration level.
    pub certified_margin: f64,
}

/// All regeneration times observable on `positions` in direction `dir`.
///
/// A time t qualifies when every earlier projection is strictly below the one
/// at t, the next step increases the projection, and every observed time after
/// t+1 stays strictly above the level of t+1. The last condition is vacuous for
/// t = len-2, where the margin is zero.
pub fn detect_regenerations(positions: &[Point], dir: &[f64]) -> Vec<RegenerationRecord> {
    let n = positions.len();
    if n < 2 {
        return Vec::new();
    }
    let proj: Vec<f64> = positions.iter().map(|p| p.dot(dir)).collect();
    let mut suffix_min = vec![f64::INFINITY; n + 1];
    for s in (0..n).rev() {
        suffix_min[s] = suffix_min[s + 1].min(proj[s]);
    }
    let last = proj[n - 1];
    let mut out: Vec<RegenerationRecord> = Vec::new();
    let mut prefix_max = f64::NEG_INFINITY;
    let mut prev_tau = 0usize;
    for t in 0..n - 1 {
        let ok = prefix_max < proj[t] && proj[t + 1] > proj[t] && suffix_min[t + 2] > proj[t + 1];
        if ok {
            let from = positions[prev_tau];
            let radius = positions[prev_tau..=t].iter().map(|p| (*p - from).norm_inf()).max().unwrap_or(0);
            out.push(RegenerationRecord {
                tau: t,
                position: positions[t],
                slab_duration: t - prev_tau,
                slab_displacement: positions[t] - from,
                radius,
                certified_margin: last - proj[t + 1],
            });
            prev_tau = t;
        }
        prefix_max = prefix_max.max(proj[t]);
    }
    out
}

pub fn detect_in(traj: &Trajectory, dir: &[f64]) -> Vec<RegenerationRecord> {
    detect_regenerations(&traj.positions, dir)
}

/// Records with margin at least `min_margin`. Margins decrease along the list,
/// so this is a prefix.
pub fn certified(records: &[RegenerationRecord], min_margin: f64) -> &[RegenerationRecord] {
    let k = records.iter().take_while(|r| r.certified_margin >= min_margin).count();
    &records[..k]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerationSummary {
    pub count: usize,
    pub rho_hat: f64,
    #[serde(rename = "U_hat")]
    pub u_hat: Vec<f64>,
    pub sigma2: Vec<Vec<f64>>,
    pub v_hat: Vec<f64>,
    pub direction: Vec<f64>,
}

/// Slab moments over slabs 2..n of the usable records.
pub fn summarize(records: &[RegenerationRecord], min_margin: f64) -> Result<RegenerationSummary> {
    let usable = certified(records, min_margin);
    if usable.len() < 2 {
        return Err(Error::InsufficientData(format!("{} usable regenerations", usable.len())));
    }
    let slabs = &usable[1..];
    let d = slabs[0].slab_displacement.dim();
    let m = slabs.len() as f64;
    let rho = slabs.iter().map(|r| r.slab_duration as f64).sum::<f64>() / m;
    let mut u = vec![0.0; d];
    for r in slabs {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui += r.slab_displacement.get(i) as f64;
        }
    }
    for ui in u.iter_mut() {
        *ui /= m;
    }
    let mut cov = vec![vec![0.0; d]; d];
    if slabs.len() > 1 {
        for r in slabs {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (r.slab_displacement.get(i) as f64 - u[i]) * (r.slab_displacement.get(j) as f64 - u[j]);
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= m - 1.0;
            }
        }
    }
    let v: Vec<f64> = u.iter().map(|x| x / rho).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let direction = v.iter().map(|x| x / norm).collect();
    Ok(RegenerationSummary { count: slabs.len(), rho_hat: rho, u_hat: u, sigma2: cov, v_hat: v, direction })
}

/// True iff the first N regeneration radii are all below R_1(N).
pub fn event_a_n(records: &[RegenerationRecord], n: usize) -> Result<bool> {
    if n == 0 {
        return Ok(true);
    }
    if records.len() < n {
        return Err(Error::InsufficientData(format!("{} records, need {n}", records.len())));
    }
    let r = scale_r(1, n as f64)?;
    Ok(records[..n].iter().all(|rec| (rec.radius as f64) < r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidReport {
    pub slabs: usize,
    pub autocorr_duration: f64,
    pub autocorr_projection: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub autocorr_threshold: f64,
    pub significance: f64,
    pub pass: bool,
}

/// Lag-1 autocorrelations and a first-half/second-half KS test on durations.
pub fn iid_diagnostics(records: &[RegenerationRecord], dir: &[f64], significance: f64) -> Result<IidReport> {
    if records.len() < 101 {
        return Err(Error::InsufficientData(format!("{} records, need 101", records.len())));
    }
    let slabs = &records[1..];
    let dur: Vec<f64> = slabs.iter().map(|r| r.slab_duration as f64).collect();
    let proj: Vec<f64> = slabs.iter().map(|r| r.slab_displacement.dot(dir)).collect();
    let r1 = lag1_autocorr(&dur);
    let r2 = lag1_autocorr(&proj);
    let h = dur.len() / 2;
    let (ks, p) = ks_two_sample(&dur[..h], &dur[h..]);
    let thr = z_two_sided(significance) / (dur.len() as f64).sqrt();
    Ok(IidReport {
        slabs: dur.len(),
        autocorr_duration: r1,
        autocorr_projection: r2,
        ks_statistic: ks,
        ks_pvalue: p,
        autocorr_threshold: thr,
        significance,
        pass: r1.abs() <= thr && r2.abs() <= thr && p > significance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub u: f64,
    pub survival: f64,
    pub stderr: f64,
    pub censored_frac: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailOptions {
    pub max_steps: u64,
    pub min_margin: f64,
}

/// Empirical P(tau_1 > u) under the annealed law. Samples without a certified
/// regeneration count as tau_1 > max(u_grid) and are reported as censored.
pub fn tau1_tail(
    law: &Arc<EnvironmentLaw>,
    dir: &[f64],
    u_grid: &[f64],
    n_samples: usize,
    seed: u64,
    opts: TailOptions,
) -> Vec<TailRow> {
    let start = Point::zero(law.dim());
    let stop = StopRule::budget(opts.max_steps);
    let taus: Vec<Option<usize>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let (t, _) = run_annealed(law, start, &stop, crate::rng::replicate_seed(seed, i as u64));
            let recs = detect_in(&t, dir);
            certified(&recs, opts.min_margin).first().map(|r| r.tau)
        })
        .collect();
    let censored = taus.iter().filter(|t| t.is_none()).count() as f64 / n_samples.max(1) as f64;
    u_grid
        .iter()
        .map(|&u| {
            let k = taus.iter().filter(|t| t.map_or(true, |v| v as f64 > u)).count();
            let p = k as f64 / n_samples.max(1) as f64;
            TailRow { u, survival: p, stderr: binom_se(p, n_samples), censored_frac: censored }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(v: &[i64]) -> Vec<Point> {
        v.iter().map(|x| Point::new(&[*x])).collect()
    }

    fn taus(r: &[RegenerationRecord]) -> Vec<usize> {
        r.iter().map(|x| x.tau).collect()
    }

    #[test]
    fn monotone_path() {
        let r = detect_regenerations(&line(&[0, 1, 2, 3, 4]), &[1.0]);
        assert_eq!(taus(&r), vec![0, 1, 2, 3]);
        assert_eq!(r.iter().map(|x| x.certified_margin).collect::<Vec<_>>(), vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(taus(certified(&r, 1.0)), vec![0, 1, 2]);
    }

    #[test]
    fn backtracking_path() {
        let r = detect_regenerations(&line(&[0, 1, 0, 1, 2, 3]), &[1.0]);
        assert_eq!(taus(&r), vec![4]);
    }

    #[test]
    fn summary_of_deterministic_walk() {
        let pos: Vec<Point> = (0..50).map(|i| Point::new(&[i, 0])).collect();
        let r = detect_regenerations(&pos, &[1.0, 0.0]);
        let s = summarize(&r, 1.0).unwrap();
        assert_eq!(s.v_hat, vec![1.0, 0.0]);
        assert!(s.sigma2.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(s.rho_hat, 1.0);
    }

    #[test]
    fn summary_of_synthetic_records() {
        let rec = |t: usize| RegenerationRecord {
            tau: t,
            position: Point::new(&[t as i64, 0]),
            slab_duration: 2,
            slab_displacement: Point::new(&[2, 0]),
            radius: 2,
            certified_margin: 100.0 - t as f64,
        };
        let recs: Vec<_> = (0..5).map(|i| rec(2 * i)).collect();
        let s = summarize(&recs, 0.0).unwrap();
        assert_eq!(s.v_hat, vec![1.0, 0.0]);
        assert!(summarize(&recs[..1], 0.0).is_err());
    }

    #[test]
    fn event_a_examples() {
        let mk = |radii: &[i64]| -> Vec<RegenerationRecord> {
            radii
                .iter()
                .enumerate()
                .map(|(i, r)| RegenerationRecord {
                    tau: i,
                    position: Point::new(&[i as i64]),
                    slab_duration: 1,
                    slab_displacement: Point::new(&[1]),
                    radius: *r,
                    certified_margin: 1.0,
                })
                .collect()
        };
        assert!(!event_a_n(&mk(&[1, 2, 3]), 3).unwrap());
        assert!(event_a_n(&[], 0).unwrap());
        assert!(event_a_n(&mk(&[1, 2]), 3).is_err());
        let ones = mk(&vec![1; 1_000_000]);
        assert!(event_a_n(&ones, 1_000_000).unwrap());
    }

    #[test]
    fn periodic_records_fail_iid() {
        let recs: Vec<RegenerationRecord> = (0..2001)
            .map(|i| RegenerationRecord {
                tau: i,
                position: Point::new(&[i as i64]),
                slab_duration: if i % 2 == 0 { 1 } else { 9 },
                slab_displacement: Point::new(&[1]),
                radius: 1,
                certified_margin: 1.0,
            })
            .collect();
        let rep = iid_diagnostics(&recs, &[1.0], 0.01).unwrap();
        assert!(rep.autocorr_duration < -0.99);
        assert!(!rep.pass);
    }
}
