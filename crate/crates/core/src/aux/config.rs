use crate::env::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::exitstats::dist::FiniteDist;
use crate::exitstats::estimate::front_displacement_table;
use crate::geom::ScaleLadder;
use crate::rng::derive_seed;
use crate::scale::ln_scale_r;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Parameters of the auxiliary walk and of the direction event.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuxConfig {
    pub ladder: ScaleLadder,
    /// ln(L^-chi R_{5+k}(L)) per scale, before clamping.
    pub ln_lambda_k: Vec<f64>,
    /// Budgets actually used by the companions, min(1, lambda_k).
    pub lambda_k: Vec<f64>,
    /// Transverse direction, one entry per axis 2..=d.
    pub w: Vec<f64>,
    pub u: f64,
    #[serde(rename = "M")]
    pub m: u64,
    pub a_k: Vec<u64>,
    /// Annealed mean front-exit displacement per scale.
    pub e_k: Vec<Vec<f64>>,
    /// Front-exit displacement laws D(N_k), one per scale.
    #[serde(skip)]
    pub targets: Vec<FiniteDist<f64>>,
    /// Samples per conditional law when building a companion.
    pub n_table: usize,
    pub max_retries: u64,
    pub step_budget: u64,
    /// Largest cube side tried by the companion couplings.
    pub max_side: i64,
}

/// A_1 = 1 and A_k the smallest integer with A_k N_k^2 > (M + A_{k-1}) N_{k-1}^2.
pub fn offsets(ladder: &ScaleLadder, m: u64) -> Vec<u64> {
    let mut a = vec![1u64];
    for k in 2..=ladder.iota {
        let prev = (m + a[k - 2]) as u128 * ladder.layer(k - 1) as u128;
        a.push((prev / ladder.layer(k) as u128) as u64 + 1);
    }
    a
}

/// M = floor((ln u)^(1 - epsilon)).
pub fn layer_count(u: f64, epsilon: f64) -> Result<u64> {
    if !(u > 1.0) {
        return Err(Error::Domain(format!("u={u} must exceed 1")));
    }
    Ok(u.ln().powf(1.0 - epsilon).floor() as u64)
}

impl AuxConfig {
    pub fn new(ladder: ScaleLadder, targets: Vec<FiniteDist<f64>>, w: Vec<f64>, u: f64) -> Result<Self> {
        if targets.len() != ladder.iota {
            return Err(Error::Domain(format!("{} target laws for {} scales", targets.len(), ladder.iota)));
        }
        let d = targets.first().map(|t| t.dim()).unwrap_or(1);
        if w.len() + 1 != d {
            return Err(Error::Domain(format!("direction has {} entries, need {}", w.len(), d - 1)));
        }
        for (k, t) in targets.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::EmptyFront);
            }
            let n2 = ladder.layer(k + 1);
            if t.support().any(|x| x.get(0) != n2) {
                return Err(Error::Domain(format!("target law {} is not supported on layer {n2}", k + 1)));
            }
        }
        let ln_l = ladder.l.ln();
        let ln_lambda_k = (1..=ladder.iota)
            .map(|k| Ok(-ladder.chi * ln_l + ln_scale_r(5 + k as u32, ln_l)?))
            .collect::<Result<Vec<f64>>>()?;
        let lambda_k = ln_lambda_k.iter().map(|v| v.exp().min(1.0)).collect();
        let m = layer_count(u, ladder.epsilon)?;
        let a_k = offsets(&ladder, m);
        let e_k = targets.iter().map(|t| t.mean()).collect();
        Ok(AuxConfig {
            ladder,
            ln_lambda_k,
            lambda_k,
            w,
            u,
            m,
            a_k,
            e_k,
            targets,
            n_table: 32,
            max_retries: 10_000,
            step_budget: 10_000_000,
            max_side: 16,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len() + 1
    }

    /// L^{4 psi}, the bound on every correction.
    pub fn beta_bound(&self) -> f64 {
        self.ladder.l.powf(4.0 * self.ladder.psi)
    }

    /// First coordinate of the stopping face of B_{2L}.
    pub fn exit_layer(&self) -> i64 {
        (2.0 * self.ladder.l).floor() as i64 + 1
    }

    pub fn with_direction(&self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.w.len() {
            return Err(Error::Domain("direction dimension mismatch".into()));
        }
        Ok(AuxConfig { w, ..self.clone() })
    }
}

/// Annealed tables D(N_k) for every scale of the ladder, axial blocks.
pub fn annealed_targets(law: &Arc<EnvironmentLaw>, ladder: &ScaleLadder, n_samples: usize, seed: u64, step_budget: u64) -> Result<Vec<FiniteDist<f64>>> {
    let d = law.dim();
    let mut theta = vec![0.0; d];
    theta[0] = 1.0;
    (1..=ladder.iota)
        .map(|k| {
            let t = front_displacement_table(law, ladder.size(k), &theta, n_samples, derive_seed(seed, &format!("scale{k}")), step_budget);
            if t.is_empty() {
                Err(Error::EmptyFront)
            } else {
                Ok(t)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{build_ladder, choose_constants, ConstantsMode};

    fn ladder(l: f64) -> ScaleLadder {
        let c = choose_constants(1.0, 2, 1.0, ConstantsMode::Relaxed { epsilon: Some(0.1), psi: 0.25, chi: 0.2 }).unwrap();
        build_ladder(l, &c).unwrap()
    }

    #[test]
    fn offsets_follow_the_recursion() {
        let lad = ladder(1e4);
        assert_eq!(lad.sizes, vec![10, 70]);
        // A_2 * 4900 > (M + 1) * 100
        assert_eq!(offsets(&lad, 3), vec![1, 1]);
        assert_eq!(offsets(&lad, 48), vec![1, 2]);
        assert_eq!(offsets(&lad, 49), vec![1, 2]);
    }

    #[test]
    fn layer_count_values() {
        assert_eq!(layer_count(std::f64::consts::E.powf(8.5), 0.0).unwrap(), 8);
        assert_eq!(layer_count(std::f64::consts::E.powf(8.5), 0.25).unwrap(), 4);
        assert!(layer_count(1.0, 0.1).is_err());
    }
}
