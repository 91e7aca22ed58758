//! Sup mass and discrete derivatives of front exit laws.

use super::dist::FiniteDist;
use super::exact::exact_front_exit;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geom::{BlockSpec, BoundaryClass};
use crate::lattice::Point;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeProfile {
    pub n: u64,
    pub sup_mass: f64,
    pub max_first_diff: f64,
    pub max_second_diff: f64,
    pub max_mixed_diff: f64,
}

/// Differences are taken along the transverse axes of the front face, with
/// zero mass off the support.
pub fn derivative_profile<T: Real>(block: &BlockSpec, dist: &FiniteDist<T>) -> Result<DerivativeProfile> {
    let front: Vec<(Point, f64)> = dist
        .iter()
        .filter(|(x, _)| block.classify(x) == BoundaryClass::FrontBoundary)
        .map(|(x, w)| (*x, w.f64()))
        .collect();
    if front.iter().all(|(_, w)| *w <= 0.0) {
        return Err(Error::EmptyFront);
    }
    let d = block.dim();
    let p = |x: &Point| -> f64 {
        if block.classify(x) == BoundaryClass::FrontBoundary {
            dist.prob(x).f64()
        } else {
            0.0
        }
    };
    let mut out = DerivativeProfile { n: block.n, sup_mass: 0.0, max_first_diff: 0.0, max_second_diff: 0.0, max_mixed_diff: 0.0 };
    for (x, w) in &front {
        out.sup_mass = out.sup_mass.max(*w);
        for i in 1..d {
            let up = x.step(2 * i);
            let dn = x.step(2 * i + 1);
            out.max_first_diff = out.max_first_diff.max((p(&up) - w).abs()).max((w - p(&dn)).abs());
            out.max_second_diff = out.max_second_diff.max((p(&up) - 2.0 * w + p(&dn)).abs());
            // centred at x and at its neighbours so edge sites are covered
            out.max_second_diff = out.max_second_diff.max((p(&up.step(2 * i)) - 2.0 * p(&up) + w).abs());
            out.max_second_diff = out.max_second_diff.max((w - 2.0 * p(&dn) + p(&dn.step(2 * i + 1))).abs());
            for j in i + 1..d {
                for (si, sj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let a = x.step(2 * i + si);
                    let b = x.step(2 * j + sj);
                    let c = a.step(2 * j + sj);
                    out.max_mixed_diff = out.max_mixed_diff.max((p(&c) - p(&a) - p(&b) + w).abs());
                }
            }
        }
    }
    Ok(out)
}

/// Exact front profile of the size-N block centred at the origin.
pub fn exact_front_profile(env: &Environment, n: u64, theta: &[f64]) -> Result<DerivativeProfile> {
    let z = Point::zero(env.dim());
    let block = BlockSpec::new(z, n, theta)?;
    let front = exact_front_exit::<f64, _>(env, &block, &z)?;
    derivative_profile(&block, &front)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mass() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let d: FiniteDist<f64> = FiniteDist::point(Point::new(&[9, 0]));
        let p = derivative_profile(&b, &d).unwrap();
        assert_eq!(p.sup_mass, 1.0);
        assert_eq!(p.max_first_diff, 1.0);
        assert!(p.max_second_diff <= 4.0 * p.sup_mass);
    }

    #[test]
    fn no_front_mass() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        let d: FiniteDist<f64> = FiniteDist::point(Point::new(&[0, 3]));
        assert_eq!(derivative_profile(&b, &d), Err(Error::EmptyFront));
    }

    #[test]
    fn uniform_interior_has_flat_differences() {
        // a uniform law on a d=1 front (single site) has no transverse differences
        let b = BlockSpec::axial(Point::zero(1), 3);
        let d: FiniteDist<f64> = FiniteDist::point(Point::new(&[9]));
        let p = derivative_profile(&b, &d).unwrap();
        assert_eq!(p.max_first_diff, 0.0);
        assert_eq!(p.max_second_diff, 0.0);
    }
}
