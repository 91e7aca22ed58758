use crate::error::{Error, Result};
use crate::exitstats::dist::FiniteDist;
use crate::geom::box_points;
use crate::lattice::Point;
use serde::{Deserialize, Serialize};

const TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Second-order Taylor bound |sum mu f| <= L m + J k / 2 for a signed
/// measure `mu` of total mass zero. The smoothness hypotheses on f are
/// checked on the bounding box of supp(mu) and rho, with non-strict
/// inequalities.
pub fn taylor_check(mu: &FiniteDist<f64>, f: impl Fn(&Point) -> f64, m: f64, k: f64, l: f64, j: f64, rho: &Point) -> Result<TaylorReport> {
    let d = rho.dim();
    let mut lo = *rho;
    let mut hi = *rho;
    for x in mu.support() {
        for i in 0..d {
            lo.set(i, lo.get(i).min(x.get(i)));
            hi.set(i, hi.get(i).max(x.get(i)));
        }
    }
    let ranges: Vec<(i64, i64)> = (0..d).map(|i| (lo.get(i), hi.get(i))).collect();
    let inside = |p: &Point| (0..d).all(|i| p.get(i) >= lo.get(i) && p.get(i) <= hi.get(i));
    let grid: Vec<Point> = (lo.get(0)..=hi.get(0))
        .flat_map(|v| {
            let mut b = lo;
            b.set(0, v);
            box_points(b, &ranges[1..])
        })
        .collect();
    for x in grid {
        let fx = f(&x);
        for i in 0..d {
            let y = x.step(2 * i);
            if !inside(&y) {
                continue;
            }
            if (f(&y) - fx).abs() > m + TOL {
                return Err(Error::HypothesisViolated(format!("first difference at {x} along e{} exceeds m", i + 1)));
            }
            for jj in i..d {
                let z = x.step(2 * jj);
                let w = y.step(2 * jj);
                if !inside(&z) || !inside(&w) {
                    continue;
                }
                if (f(&w) + fx - f(&y) - f(&z)).abs() > k + TOL {
                    return Err(Error::HypothesisViolated(format!("second difference at {x} in ({}, {}) exceeds k", i + 1, jj + 1)));
                }
            }
        }
    }
    let total: f64 = mu.iter().map(|(_, w)| *w).sum();
    if total.abs() > 1e-9 {
        return Err(Error::HypothesisViolated(format!("total mass {total} is not zero")));
    }
    let first: f64 = (0..d).map(|i| mu.iter().map(|(x, w)| x.get(i) as f64 * w).sum::<f64>().abs()).sum();
    if first > l + TOL {
        return Err(Error::HypothesisViolated(format!("first moment {first} exceeds L")));
    }
    let second: f64 = mu.iter().map(|(x, w)| ((*x - *rho).norm1() as f64).powi(2) * w.abs()).sum();
    if second > j + TOL {
        return Err(Error::HypothesisViolated(format!("second moment {second} exceeds J")));
    }
    let lhs = mu.iter().map(|(x, w)| w * f(x)).sum::<f64>().abs();
    let bound = l * m + j * k / 2.0;
    Ok(TaylorReport { lhs, bound, holds: lhs <= bound + TOL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_pair() {
        let mu = FiniteDist::from_pairs(2, [(Point::new(&[1, 0]), 1.0), (Point::new(&[0, 0]), -1.0)]);
        let r = taylor_check(&mu, |x| 3.0 * x.get(0) as f64 - x.get(1) as f64, 3.0, 0.0, 1.0, 1.0, &Point::zero(2)).unwrap();
        assert!(r.holds);
        assert!((r.lhs - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_measure() {
        let mu = FiniteDist::empty(2);
        let r = taylor_check(&mu, |_| 5.0, 0.0, 0.0, 0.0, 0.0, &Point::zero(2)).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn names_the_failed_hypothesis() {
        let mu = FiniteDist::from_pairs(1, [(Point::new(&[2]), 1.0), (Point::new(&[0]), -1.0)]);
        let e = taylor_check(&mu, |x| (x.get(0) * x.get(0)) as f64, 10.0, 2.0, 1.0, 100.0, &Point::zero(1)).unwrap_err();
        assert!(matches!(e, Error::HypothesisViolated(s) if s.contains("first moment")));
    }
}
