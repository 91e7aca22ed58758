//! Lower bound on annealed front-exit masses inside the Gaussian ellipsoid.

use super::dist::FiniteDist;
use super::exact::invert;
use crate::error::{Error, Result};
use crate::geom::BlockSpec;
use crate::regen::RegenerationSummary;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub n: u64,
    pub a: f64,
    pub radius2: f64,
    pub sites_in_ellipsoid: usize,
    /// Smallest exit mass over front sites inside the ellipsoid.
    pub min_mass: f64,
    /// The constant c with min_mass = c N^{1-d} e^{-3a}.
    pub implied_c: f64,
}

/// `masses` holds unconditioned exit probabilities P(X_T = x) from the block
/// centre; `mean_exit` is E X_T.
pub fn lower_bound_check(
    block: &BlockSpec,
    masses: &FiniteDist<f64>,
    mean_exit: &[f64],
    summary: &RegenerationSummary,
    a: f64,
) -> Result<LowerBoundReport> {
    let d = block.dim();
    let trace: f64 = (0..d).map(|i| summary.sigma2[i][i]).sum();
    if !(trace > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let mut m: Vec<f64> = summary.sigma2.iter().flatten().copied().collect();
    let det_scale = trace / d as f64;
    for i in 0..d {
        if summary.sigma2[i][i] <= 1e-12 * det_scale {
            return Err(Error::SingularCovariance);
        }
    }
    let sigma_inv = invert(&mut m, d).map_err(|_| Error::SingularCovariance)?;
    let u1 = summary.u_hat[0];
    if !(u1 > 0.0) {
        return Err(Error::Domain("regeneration displacement must have positive e1 component".into()));
    }
    let n = block.n as f64;
    let radius2 = a * n * n / u1;
    let mut count = 0;
    let mut min_mass = f64::INFINITY;
    for x in block.front_sites() {
        let v: Vec<f64> = (0..d).map(|i| x.get(i) as f64 - mean_exit[i]).collect();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += v[i] * sigma_inv[i * d + j] * v[j];
            }
        }
        if q < radius2 {
            count += 1;
            min_mass = min_mass.min(masses.prob(&x));
        }
    }
    if count == 0 {
        min_mass = f64::NAN;
    }
    let implied_c = min_mass / (n.powi(1 - d as i32) * (-3.0 * a).exp());
    Ok(LowerBoundReport { n: block.n, a, radius2, sites_in_ellipsoid: count, min_mass, implied_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Point;

    fn summary(sigma2: Vec<Vec<f64>>) -> RegenerationSummary {
        RegenerationSummary { count: 10, rho_hat: 1.0, u_hat: vec![1.0, 0.0], sigma2, v_hat: vec![1.0, 0.0], direction: vec![1.0, 0.0] }
    }

    #[test]
    fn zero_covariance_is_singular() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let m = FiniteDist::point(Point::new(&[9, 0]));
        let r = lower_bound_check(&b, &m, &[9.0, 0.0], &summary(vec![vec![0.0, 0.0], vec![0.0, 0.0]]), 1.0);
        assert!(matches!(r, Err(Error::SingularCovariance)));
    }

    #[test]
    fn tiny_a_keeps_only_the_mean_cell() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let m = FiniteDist::from_pairs(2, (-2..=2).map(|y| (Point::new(&[9, y]), 0.2)));
        let r = lower_bound_check(&b, &m, &[9.0, 0.0], &summary(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), 1e-3).unwrap();
        assert_eq!(r.sites_in_ellipsoid, 1);
        assert!((r.min_mass - 0.2).abs() < 1e-12);
    }
}
