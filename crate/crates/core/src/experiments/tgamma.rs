use crate::env::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::rng::replicate_seed;
use crate::stats::{binom_se, linear_fit};
use crate::walk::{annealed_env, run_to_stop, StopCause, StopKind, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktrackRow {
    #[serde(rename = "L")]
    pub l: f64,
    pub samples: usize,
    pub backtracks: usize,
    pub budget_exhausted: usize,
    pub p_hat: f64,
    pub std_err: f64,
    /// One-sided 95% upper bound; for zero counts, 1 - 0.05^(1/n).
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGammaFit {
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Coefficient of L^gamma in ln p = ln C - slope L^gamma.
    pub slope: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGammaReport {
    pub direction: Vec<f64>,
    pub rows: Vec<BacktrackRow>,
    pub fit: Option<TGammaFit>,
    /// Every count was zero, so only the upper bounds carry information.
    pub all_zero: bool,
    /// No evidence of decay: the fit is missing or flat, or the last
    /// estimate is within three standard errors of 1/2.
    pub non_ballistic: bool,
}

/// Steps allowed per walk: generous against diffusive exit times.
fn budget_for(l: f64) -> u64 {
    (1000.0 * l * l).max(1e5) as u64
}

/// Annealed frequency of reaching <x, l> <= -L before <x, l> >= L, over a
/// grid of L, with a fit of ln p against L^gamma.
pub fn tgamma_test(law: &Arc<EnvironmentLaw>, dir: &[f64], l_grid: &[f64], n_samples: usize, seed: u64) -> Result<TGammaReport> {
    if dir.len() != law.dim() {
        return Err(Error::Domain("direction dimension mismatch".into()));
    }
    if l_grid.windows(2).any(|w| w[1] <= w[0]) || l_grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Domain("L grid must be positive and increasing".into()));
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ell: Vec<f64> = dir.iter().map(|v| v / norm).collect();
    let origin = Point::zero(law.dim());
    let mut rows = Vec::new();
    for (g, &l) in l_grid.iter().enumerate() {
        let stop = StopRule::new(StopKind::Slab { dir: ell.clone(), lo: -l, hi: l }, budget_for(l));
        let outcomes: Vec<Option<bool>> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let s = replicate_seed(replicate_seed(seed, g as u64), i as u64);
                let env = annealed_env(law, s);
                let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(s, "walk"));
                let e = run_to_stop(&env, origin, &stop, &mut rng);
                (e.cause == StopCause::Hit).then(|| e.position.dot(&ell) <= -l)
            })
            .collect();
        let exhausted = outcomes.iter().filter(|o| o.is_none()).count();
        let n = n_samples - exhausted;
        let b = outcomes.iter().filter(|o| **o == Some(true)).count();
        let p = if n > 0 { b as f64 / n as f64 } else { f64::NAN };
        let se = if n > 0 { binom_se(p, n) } else { f64::NAN };
        let upper = if b == 0 { 1.0 - 0.05f64.powf(1.0 / n.max(1) as f64) } else { (p + 1.645 * se).min(1.0) };
        rows.push(BacktrackRow { l, samples: n, backtracks: b, budget_exhausted: exhausted, p_hat: p, std_err: se, upper });
    }
    let all_zero = rows.iter().all(|r| r.backtracks == 0);
    let usable: Vec<&BacktrackRow> = rows.iter().filter(|r| r.backtracks > 0).collect();
    let fit = if usable.len() >= 3 {
        let y: Vec<f64> = usable.iter().map(|r| r.p_hat.ln()).collect();
        (1..=40)
            .map(|i| i as f64 * 0.025)
            .map(|gamma| {
                let x: Vec<f64> = usable.iter().map(|r| r.l.powf(gamma)).collect();
                let (a, b, r2) = linear_fit(&x, &y);
                TGammaFit { gamma, c: a.exp(), slope: -b, r2 }
            })
            .max_by(|a, b| a.r2.total_cmp(&b.r2))
    } else {
        None
    };
    let last = rows.last();
    let flat = fit.as_ref().is_none_or(|f| !(f.slope > 0.0) || f.r2.is_nan());
    let near_half = last.is_some_and(|r| r.p_hat + 3.0 * r.std_err >= 0.5);
    Ok(TGammaReport { direction: ell, non_ballistic: !all_zero && (flat || near_half), rows, fit, all_zero })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Kernel;

    #[test]
    fn deterministic_right_never_backtracks() {
        let law = Arc::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap());
        let r = tgamma_test(&law, &[1.0, 0.0], &[2.0, 4.0], 500, 1).unwrap();
        assert!(r.all_zero);
        assert!(r.fit.is_none());
        assert!(!r.non_ballistic);
        assert!((r.rows[0].upper - (1.0 - 0.05f64.powf(1.0 / 500.0))).abs() < 1e-15);
    }

    #[test]
    fn srw_is_symmetric() {
        let law = Arc::new(EnvironmentLaw::srw(2).unwrap());
        let r = tgamma_test(&law, &[1.0, 0.0], &[2.0, 3.0, 4.0], 4000, 2).unwrap();
        for row in &r.rows {
            assert!((row.p_hat - 0.5).abs() < 4.0 * row.std_err, "{row:?}");
        }
        assert!(r.non_ballistic);
    }

    #[test]
    fn rejects_bad_grid() {
        let law = Arc::new(EnvironmentLaw::srw(1).unwrap());
        assert!(tgamma_test(&law, &[1.0], &[3.0, 2.0], 10, 0).is_err());
    }
}
