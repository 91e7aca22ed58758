//! (lambda, K)-closeness of lattice laws via the cube-matching coupling:
//! resample the reference law inside the cube holding Z2, add an independent
//! bounded shift that restores the reference mean, then couple Z1 maximally.

use super::dist::FiniteDist;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::scalar::Real;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const TOL: f64 = 1e-9;

struct Table {
    points: Vec<Point>,
    index: WeightedIndex<f64>,
}

impl Table {
    fn new<T: Real>(pairs: impl IntoIterator<Item = (Point, T)>) -> Option<Self> {
        let (points, w): (Vec<Point>, Vec<f64>) = pairs.into_iter().map(|(p, v)| (p, v.f64())).filter(|(_, v)| *v > 0.0).unzip();
        WeightedIndex::new(&w).ok().map(|index| Table { points, index })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.points[self.index.sample(rng)]
    }
}

/// Per-coordinate shift U_i taking `floor` or `floor + 1`, the latter with probability `p_up`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCoord {
    pub floor: i64,
    pub p_up: f64,
}

impl ShiftCoord {
    fn values(&self) -> impl Iterator<Item = (i64, f64)> {
        [(self.floor, 1.0 - self.p_up), (self.floor + 1, self.p_up)].into_iter().filter(|(_, p)| *p > 0.0)
    }
}

/// A fully specified coupling of (Z1, Z0, Z2).
pub struct CouplingPlan<T: Real> {
    pub cube_side: i64,
    pub anchor: Point,
    pub shift: Vec<ShiftCoord>,
    pub mu1: FiniteDist<T>,
    pub mu2: FiniteDist<T>,
    /// Law of Z0.
    pub z0: FiniteDist<T>,
    /// Largest l-infinity distance between Z0 and Z2 on the support of the coupling.
    pub displacement: i64,
    cubes: BTreeMap<Point, Table>,
    mu2_table: Table,
    residual: Option<Table>,
}

fn cube_of(x: &Point, anchor: &Point, c: i64) -> Point {
    let mut q = *x;
    for i in 0..x.dim() {
        q.set(i, (x.get(i) - anchor.get(i)).div_euclid(c));
    }
    q
}

impl<T: Real> CouplingPlan<T> {
    pub fn build(mu1: &FiniteDist<T>, mu2: &FiniteDist<T>, cube_side: i64) -> Result<Self> {
        if mu1.is_empty() || mu2.is_empty() || mu1.dim() != mu2.dim() {
            return Err(Error::Domain("closeness needs two non-empty laws of equal dimension".into()));
        }
        if cube_side < 1 {
            return Err(Error::Domain("cube side must be positive".into()));
        }
        let d = mu1.dim();
        let mu1 = mu1.normalized();
        let mu2 = mu2.normalized();
        let m1 = mu1.mean();
        let mut anchor = Point::zero(d);
        for i in 0..d {
            anchor.set(i, m1[i].f64().round() as i64 - cube_side / 2);
        }

        let mut by_cube: BTreeMap<Point, Vec<(Point, T)>> = BTreeMap::new();
        for (x, w) in mu1.iter() {
            by_cube.entry(cube_of(x, &anchor, cube_side)).or_default().push((*x, *w));
        }
        let mut cubes = BTreeMap::new();
        for (q, pts) in &by_cube {
            if let Some(t) = Table::new(pts.iter().copied()) {
                cubes.insert(*q, t);
            }
        }

        // Law of Y' and the reachable (y', z2) pairs.
        let mut yp = FiniteDist::empty(d);
        let mut max_gap = vec![(0i64, 0i64); d];
        let mut first = true;
        let mut track = |y: &Point, z: &Point| {
            for i in 0..d {
                let g = y.get(i) - z.get(i);
                if first {
                    max_gap[i] = (g, g);
                } else {
                    max_gap[i] = (max_gap[i].0.min(g), max_gap[i].1.max(g));
                }
            }
            first = false;
        };
        for (z, w2) in mu2.iter() {
            let q = cube_of(z, &anchor, cube_side);
            match by_cube.get(&q) {
                Some(pts) => {
                    let mass: T = pts.iter().map(|(_, w)| *w).sum();
                    for (y, w1) in pts {
                        yp.add(*y, *w2 * *w1 / mass);
                        track(y, z);
                    }
                }
                None => {
                    yp.add(*z, *w2);
                    track(z, z);
                }
            }
        }
        let my = yp.mean();
        let shift: Vec<ShiftCoord> = (0..d)
            .map(|i| {
                let mut m = (m1[i] - my[i]).f64();
                if (m - m.round()).abs() < 1e-12 {
                    m = m.round();
                }
                let f = m.floor();
                ShiftCoord { floor: f as i64, p_up: m - f }
            })
            .collect();

        let mut displacement = 0i64;
        for i in 0..d {
            for (u, _) in shift[i].values() {
                displacement = displacement.max((max_gap[i].0 + u).abs()).max((max_gap[i].1 + u).abs());
            }
        }

        let mut z0 = yp.clone();
        for i in 0..d {
            let step = FiniteDist::from_pairs(d, shift[i].values().map(|(u, p)| (Point::axis(d, i, u), T::of(p))));
            z0 = z0.convolve(&step);
        }

        let residual = Table::new(mu1.iter().map(|(x, w)| (*x, (*w - z0.prob(x)).max(T::zero()))));
        let mu2_table = Table::new(mu2.iter().map(|(x, w)| (*x, *w))).expect("non-empty law");
        Ok(CouplingPlan { cube_side, anchor, shift, mu1, mu2, z0, displacement, cubes, mu2_table, residual })
    }

    /// P(Z1 != Z0) under the maximal coupling.
    pub fn mismatch(&self) -> T {
        self.z0.tv(&self.mu1)
    }

    /// Z0 given Z2 = x.
    pub fn sample_z0<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Point {
        let q = cube_of(x, &self.anchor, self.cube_side);
        let mut y = match self.cubes.get(&q) {
            Some(t) => t.sample(rng),
            None => *x,
        };
        for (i, s) in self.shift.iter().enumerate() {
            let u = if rng.random::<f64>() < s.p_up { s.floor + 1 } else { s.floor };
            y.set(i, y.get(i) + u);
        }
        y
    }

    /// Z1 given Z0 = z under the maximal coupling.
    pub fn sample_z1<R: Rng + ?Sized>(&self, z: &Point, rng: &mut R) -> Point {
        let p0 = self.z0.prob(z).f64();
        let p1 = self.mu1.prob(z).f64();
        if p0 > 0.0 && rng.random::<f64>() * p0 < p1.min(p0) {
            return *z;
        }
        match &self.residual {
            Some(t) => t.sample(rng),
            None => *z,
        }
    }

    /// One draw of (Z1, Z0, Z2).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Point, Point, Point) {
        let z2 = self.mu2_table.sample(rng);
        let z0 = self.sample_z0(&z2, rng);
        let z1 = self.sample_z1(&z0, rng);
        (z1, z0, z2)
    }

    pub fn clauses(&self, lambda: f64, k: i64) -> ClauseReport {
        let mismatch = self.mismatch().f64();
        let m1 = self.mu1.mean();
        let m0 = self.z0.mean();
        let mean_gap = m1.iter().zip(&m0).map(|(a, b)| (*a - *b).f64().abs()).fold(0.0, f64::max);
        let second_moment_sum: f64 = self
            .mu1
            .support()
            .chain(self.z0.support())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|x| {
                let diff = (self.mu1.prob(x) - self.z0.prob(x)).f64().abs();
                let l1: f64 = (0..x.dim()).map(|i| (x.get(i) as f64 - m1[i].f64()).abs()).sum();
                diff * l1 * l1
            })
            .sum();
        let var = self.mu1.trace_var().f64();
        ClauseReport {
            lambda,
            k,
            cube_side: self.cube_side,
            marginals: true,
            mismatch,
            clause2: mismatch <= lambda + TOL,
            displacement: self.displacement,
            clause3: self.displacement <= k,
            mean_gap,
            clause4: mean_gap <= TOL,
            second_moment_sum,
            second_moment_budget: lambda * var,
            clause5: second_moment_sum <= lambda * var + TOL,
        }
    }
}

/// Clause-by-clause numbers for one coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub lambda: f64,
    pub k: i64,
    pub cube_side: i64,
    pub marginals: bool,
    pub mismatch: f64,
    pub clause2: bool,
    pub displacement: i64,
    pub clause3: bool,
    pub mean_gap: f64,
    pub clause4: bool,
    pub second_moment_sum: f64,
    pub second_moment_budget: f64,
    pub clause5: bool,
}

impl ClauseReport {
    pub fn violated(&self) -> Vec<u8> {
        let mut v = Vec::new();
        for (ok, c) in [(self.marginals, 1), (self.clause2, 2), (self.clause3, 3), (self.clause4, 4), (self.clause5, 5)] {
            if !ok {
                v.push(c);
            }
        }
        v
    }

    pub fn holds(&self) -> bool {
        self.violated().is_empty()
    }
}

pub struct ClosenessCertificate<T: Real> {
    pub lambda: f64,
    pub k: i64,
    pub clauses: ClauseReport,
    pub plan: CouplingPlan<T>,
}

pub enum Closeness<T: Real> {
    Certificate(ClosenessCertificate<T>),
    Refusal { violated: Vec<u8>, clauses: ClauseReport },
}

impl<T: Real> Closeness<T> {
    pub fn is_certificate(&self) -> bool {
        matches!(self, Closeness::Certificate(_))
    }

    pub fn clauses(&self) -> &ClauseReport {
        match self {
            Closeness::Certificate(c) => &c.clauses,
            Closeness::Refusal { clauses, .. } => clauses,
        }
    }
}

fn candidates<T: Real>(mu1: &FiniteDist<T>, mu2: &FiniteDist<T>, max_side: i64) -> Result<Vec<CouplingPlan<T>>> {
    (1..=max_side.max(1)).map(|c| CouplingPlan::build(mu1, mu2, c)).collect()
}

/// Is `mu2` (lambda, k)-close to `mu1`? Cube sides 1..=k+1 are tried; among
/// plans with displacement at most k the one passing all clauses with the
/// smallest mismatch wins, otherwise the smallest-mismatch plan is refused.
pub fn check_closeness<T: Real>(mu1: &FiniteDist<T>, mu2: &FiniteDist<T>, lambda: f64, k: i64) -> Result<Closeness<T>> {
    if k < 0 || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain("need lambda in [0,1] and k >= 0".into()));
    }
    let plans: Vec<_> = candidates(mu1, mu2, k + 1)?.into_iter().filter(|p| p.displacement <= k).collect();
    if plans.is_empty() {
        return Err(Error::InfeasibleCoupling(k as u64));
    }
    let mut best: Option<(bool, f64, CouplingPlan<T>, ClauseReport)> = None;
    for p in plans {
        let r = p.clauses(lambda, k);
        let key = (r.holds(), r.mismatch);
        let better = match &best {
            None => true,
            Some((ok, m, _, _)) => (key.0 && !ok) || (key.0 == *ok && key.1 < *m),
        };
        if better {
            best = Some((key.0, key.1, p, r));
        }
    }
    let (ok, _, plan, clauses) = best.expect("at least one plan");
    Ok(if ok {
        Closeness::Certificate(ClosenessCertificate { lambda, k, clauses, plan })
    } else {
        Closeness::Refusal { violated: clauses.violated(), clauses }
    })
}

/// The smallest k for which `mu2` is (lambda, k)-close to `mu1` by some cube
/// side up to `max_side`, with its certificate.
pub fn smallest_k<T: Real>(mu1: &FiniteDist<T>, mu2: &FiniteDist<T>, lambda: f64, max_side: i64) -> Result<ClosenessCertificate<T>> {
    let mut best: Option<ClosenessCertificate<T>> = None;
    for p in candidates(mu1, mu2, max_side)? {
        let k = p.displacement;
        let r = p.clauses(lambda, k);
        if !r.holds() {
            continue;
        }
        if best.as_ref().is_none_or(|b| k < b.k || (k == b.k && r.mismatch < b.clauses.mismatch)) {
            best = Some(ClosenessCertificate { lambda, k, clauses: r, plan: p });
        }
    }
    best.ok_or(Error::InfeasibleCoupling(max_side as u64))
}

/// Joint sampler of (X, companion) with X drawn from `x_law` and the
/// companion drawn as Z0 given Z2 = X.
pub struct Companion<T: Real> {
    pub plan: CouplingPlan<T>,
    pub certified: bool,
    pub clauses: ClauseReport,
}

impl<T: Real> Companion<T> {
    pub fn companion_of<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Point {
        self.plan.sample_z0(x, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Point, Point) {
        let x = self.plan.mu2_table.sample(rng);
        (x, self.plan.sample_z0(&x, rng))
    }
}

/// Companion construction against `target` for X with law `x_law`. The plan
/// with the smallest displacement passing the clauses is used; when none
/// passes, the smallest-mismatch plan is returned uncertified.
pub fn companion_sampler<T: Real>(x_law: &FiniteDist<T>, target: &FiniteDist<T>, lambda: f64, max_side: i64) -> Result<Companion<T>> {
    match smallest_k(target, x_law, lambda, max_side) {
        Ok(c) => Ok(Companion { plan: c.plan, certified: true, clauses: c.clauses }),
        Err(Error::InfeasibleCoupling(_)) => {
            let plan = candidates(target, x_law, max_side)?
                .into_iter()
                .min_by(|a, b| a.mismatch().f64().total_cmp(&b.mismatch().f64()))
                .expect("at least one plan");
            let clauses = plan.clauses(lambda, plan.displacement);
            Ok(Companion { plan, certified: false, clauses })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn blob() -> FiniteDist<f64> {
        FiniteDist::from_pairs(
            2,
            [
                (Point::new(&[0, 0]), 0.4),
                (Point::new(&[1, 0]), 0.2),
                (Point::new(&[-1, 0]), 0.1),
                (Point::new(&[0, 1]), 0.2),
                (Point::new(&[0, -1]), 0.1),
            ],
        )
    }

    #[test]
    fn identical_laws_need_nothing() {
        let c = check_closeness(&blob(), &blob(), 0.0, 0).unwrap();
        let Closeness::Certificate(c) = c else { panic!("refused") };
        assert_eq!(c.clauses.displacement, 0);
        assert!(c.clauses.mismatch < 1e-12);
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let (z1, z0, z2) = c.plan.sample(&mut rng);
            assert_eq!(z1, z0);
            assert_eq!(z0, z2);
        }
    }

    #[test]
    fn shifted_law_within_two() {
        let mu2 = blob().shifted(Point::new(&[1, 0]));
        let c = check_closeness(&blob(), &mu2, 0.05, 2).unwrap();
        let r = c.clauses();
        assert!(c.is_certificate(), "{r:?}");
        assert!(r.displacement <= 2);
        assert!(r.mean_gap < 1e-9);
    }

    #[test]
    fn zero_k_cannot_absorb_a_shift() {
        let mu2 = blob().shifted(Point::new(&[3, 0]));
        assert!(matches!(check_closeness(&blob(), &mu2, 0.5, 0), Err(Error::InfeasibleCoupling(0))));
    }

    #[test]
    fn companion_of_exact_target_is_identity() {
        let c = companion_sampler(&blob(), &blob(), 0.0, 3).unwrap();
        assert!(c.certified);
        let mut rng = stream(2, 0);
        for _ in 0..100 {
            let (x, y) = c.sample(&mut rng);
            assert_eq!(x, y);
        }
    }
}
