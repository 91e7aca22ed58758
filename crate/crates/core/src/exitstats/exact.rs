//! Exact exit laws by solving the absorption system layer by layer.
//!
//! Interior sites are grouped by their first coordinate. Nearest-neighbour
//! steps only couple adjacent layers, so the Green's function system is block
//! tridiagonal and is solved with block Thomas elimination.

use super::dist::FiniteDist;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geom::{box_points, BlockSpec};
use crate::lattice::Point;
use crate::scalar::Real;
use std::collections::{BTreeMap, HashMap, HashSet};

pub const MAX_EXACT_SITES: usize = 100_000;

/// A finite set of interior sites organised in e1-layers.
pub trait LayeredRegion {
    fn dim(&self) -> usize;
    /// Inclusive range of first coordinates that may hold interior sites.
    fn layer_bounds(&self) -> (i64, i64);
    fn layer_sites(&self, x1: i64) -> Vec<Point>;
    fn contains(&self, x: &Point) -> bool;

    fn site_count(&self) -> usize {
        let (a, b) = self.layer_bounds();
        (a..=b).map(|l| self.layer_sites(l).len()).sum()
    }
}

impl LayeredRegion for BlockSpec {
    fn dim(&self) -> usize {
        self.z.dim()
    }
    fn layer_bounds(&self) -> (i64, i64) {
        let r = self.layers();
        (*r.start(), *r.end())
    }
    fn layer_sites(&self, x1: i64) -> Vec<Point> {
        BlockSpec::layer_sites(self, x1)
    }
    fn contains(&self, x: &Point) -> bool {
        BlockSpec::contains(self, x)
    }
    fn site_count(&self) -> usize {
        BlockSpec::site_count(self)
    }
}

/// Axis-aligned box [lo, hi] (inclusive) of interior sites.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    pub lo: Point,
    pub hi: Point,
}

impl LayeredRegion for BoxRegion {
    fn dim(&self) -> usize {
        self.lo.dim()
    }
    fn layer_bounds(&self) -> (i64, i64) {
        (self.lo.get(0), self.hi.get(0))
    }
    fn layer_sites(&self, x1: i64) -> Vec<Point> {
        if x1 < self.lo.get(0) || x1 > self.hi.get(0) {
            return Vec::new();
        }
        let ranges: Vec<(i64, i64)> = (1..self.dim()).map(|i| (self.lo.get(i), self.hi.get(i))).collect();
        let mut base = self.lo;
        base.set(0, x1);
        box_points(base, &ranges)
    }
    fn contains(&self, x: &Point) -> bool {
        (0..self.dim()).all(|i| x.get(i) >= self.lo.get(i) && x.get(i) <= self.hi.get(i))
    }
}

/// Explicit interior site set.
#[derive(Clone, Debug)]
pub struct SiteRegion {
    dim: usize,
    layers: BTreeMap<i64, Vec<Point>>,
    set: HashSet<Point>,
}

impl SiteRegion {
    pub fn new(dim: usize, sites: impl IntoIterator<Item = Point>) -> Self {
        let set: HashSet<Point> = sites.into_iter().collect();
        let mut layers: BTreeMap<i64, Vec<Point>> = BTreeMap::new();
        for p in &set {
            layers.entry(p.get(0)).or_default().push(*p);
        }
        for v in layers.values_mut() {
            v.sort();
        }
        SiteRegion { dim, layers, set }
    }
}

impl LayeredRegion for SiteRegion {
    fn dim(&self) -> usize {
        self.dim
    }
    fn layer_bounds(&self) -> (i64, i64) {
        match (self.layers.keys().next(), self.layers.keys().next_back()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => (0, -1),
        }
    }
    fn layer_sites(&self, x1: i64) -> Vec<Point> {
        self.layers.get(&x1).cloned().unwrap_or_default()
    }
    fn contains(&self, x: &Point) -> bool {
        self.set.contains(x)
    }
    fn site_count(&self) -> usize {
        self.set.len()
    }
}

/// In-place Gauss-Jordan inversion of a row-major m x m matrix.
pub fn invert<T: Real>(a: &mut [T], m: usize) -> Result<Vec<T>> {
    let mut inv = vec![T::zero(); m * m];
    for i in 0..m {
        inv[i * m + i] = T::one();
    }
    for c in 0..m {
        let mut piv = c;
        let mut best = a[c * m + c].abs();
        for r in c + 1..m {
            let v = a[r * m + c].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == T::zero() || !best.is_finite() {
            return Err(Error::SingularSystem);
        }
        if piv != c {
            for k in 0..m {
                a.swap(c * m + k, piv * m + k);
                inv.swap(c * m + k, piv * m + k);
            }
        }
        let d = T::one() / a[c * m + c];
        for k in 0..m {
            a[c * m + k] = a[c * m + k] * d;
            inv[c * m + k] = inv[c * m + k] * d;
        }
        for r in 0..m {
            if r == c {
                continue;
            }
            let f = a[r * m + c];
            if f == T::zero() {
                continue;
            }
            for k in 0..m {
                a[r * m + k] = a[r * m + k] - f * a[c * m + k];
                inv[r * m + k] = inv[r * m + k] - f * inv[c * m + k];
            }
        }
    }
    Ok(inv)
}

struct Layer<T> {
    sites: Vec<Point>,
    index: HashMap<Point, usize>,
    inv: Vec<T>,
    bp: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn apply_inv(&self, v: &[T]) -> Vec<T> {
        let m = self.sites.len();
        (0..m).map(|r| (0..m).map(|c| self.inv[r * m + c] * v[c]).sum()).collect()
    }
}

/// Forward elimination. `keep` receives every finished layer except the last,
/// which is returned.
fn forward<T: Real, R: LayeredRegion + ?Sized>(
    env: &Environment,
    region: &R,
    start: &Point,
    mut keep: impl FnMut(Layer<T>),
) -> Result<Option<Layer<T>>> {
    let (a, b) = region.layer_bounds();
    let mut prev: Option<Layer<T>> = None;
    for l in a..=b {
        let sites = region.layer_sites(l);
        let m = sites.len();
        let index: HashMap<Point, usize> = sites.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut dmat = vec![T::zero(); m * m];
        let mut rhs = vec![T::zero(); m];
        for (c, x) in sites.iter().enumerate() {
            dmat[c * m + c] = T::one();
            let k = env.kernel_at(x);
            for dir in 2..2 * x.dim() {
                if let Some(&r) = index.get(&x.step(dir)) {
                    dmat[r * m + c] = dmat[r * m + c] - T::of(k.prob(dir));
                }
            }
            if x == start {
                rhs[c] = T::one();
            }
        }
        if let Some(p) = &prev {
            if !p.sites.is_empty() {
                let pv = p.apply_inv(&p.bp);
                // coefficient -P(x, -e1) for every x of this layer whose left neighbour is interior
                let up: Vec<(usize, usize, T)> = sites
                    .iter()
                    .enumerate()
                    .filter_map(|(c, x)| p.index.get(&x.step(1)).map(|&ip| (c, ip, T::of(env.kernel_at(x).prob(1)))))
                    .collect();
                let pm = p.sites.len();
                for (ia, a_site) in p.sites.iter().enumerate() {
                    let y = a_site.step(0);
                    let Some(&r) = index.get(&y) else { continue };
                    let coef_l = T::of(env.kernel_at(a_site).prob(0));
                    // D'[y][x] -= L[y][a] * inv[a][x-e1] * U[x-e1][x], L = -coef_l, U = -P(x,-e1)
                    for &(c, ip, pu) in &up {
                        dmat[r * m + c] = dmat[r * m + c] - coef_l * p.inv[ia * pm + ip] * pu;
                    }
                    rhs[r] = rhs[r] + coef_l * pv[ia];
                }
            }
        }
        let inv = invert(&mut dmat, m)?;
        let layer = Layer { sites, index, inv, bp: rhs };
        if let Some(p) = prev.take() {
            keep(p);
        }
        prev = Some(layer);
    }
    Ok(prev)
}

/// Exit law from `start`, plus the expected exit time.
#[derive(Clone, Debug)]
pub struct ExactExit<T: Real> {
    pub dist: FiniteDist<T>,
    pub expected_steps: T,
}

fn add_exits<T: Real, R: LayeredRegion + ?Sized>(
    env: &Environment,
    region: &R,
    sites: &[Point],
    g: &[T],
    dist: &mut FiniteDist<T>,
) {
    for (x, gx) in sites.iter().zip(g) {
        if *gx == T::zero() {
            continue;
        }
        let k = env.kernel_at(x);
        for dir in 0..2 * x.dim() {
            let y = x.step(dir);
            if !region.contains(&y) {
                dist.add(y, *gx * T::of(k.prob(dir)));
            }
        }
    }
}

/// Exact exit distribution from `start` for regions of at most `MAX_EXACT_SITES` sites.
pub fn exact_exit<T: Real, R: LayeredRegion + ?Sized>(env: &Environment, region: &R, start: &Point) -> Result<ExactExit<T>> {
    let n = region.site_count();
    if n > MAX_EXACT_SITES {
        return Err(Error::RegionTooLarge { sites: n, limit: MAX_EXACT_SITES });
    }
    if !region.contains(start) {
        return Ok(ExactExit { dist: FiniteDist::point(*start), expected_steps: T::zero() });
    }
    let mut stored: Vec<Layer<T>> = Vec::new();
    let last = forward::<T, R>(env, region, start, |l| stored.push(l))?;
    if let Some(l) = last {
        stored.push(l);
    }
    let mut dist = FiniteDist::empty(region.dim());
    let mut total = T::zero();
    let mut next: Option<(HashMap<Point, usize>, Vec<T>)> = None;
    for layer in stored.iter().rev() {
        let m = layer.sites.len();
        let mut v = layer.bp.clone();
        if let Some((idx, g_next)) = &next {
            for (r, y) in layer.sites.iter().enumerate() {
                let x = y.step(0);
                if let Some(&c) = idx.get(&x) {
                    v[r] = v[r] + T::of(env.kernel_at(&x).prob(1)) * g_next[c];
                }
            }
        }
        let g = if m == 0 { Vec::new() } else { layer.apply_inv(&v) };
        total = total + g.iter().copied().sum();
        add_exits(env, region, &layer.sites, &g, &mut dist);
        next = Some((layer.index.clone(), g));
    }
    Ok(ExactExit { dist, expected_steps: total })
}

/// Exit masses through the last layer's +e1 face, computed without storing
/// factors. Suitable for blocks far above `MAX_EXACT_SITES`.
pub fn exact_front_exit<T: Real, R: LayeredRegion + ?Sized>(env: &Environment, region: &R, start: &Point) -> Result<FiniteDist<T>> {
    if !region.contains(start) {
        return Err(Error::Domain("start outside region".into()));
    }
    let last = forward::<T, R>(env, region, start, |_| {})?;
    let mut dist = FiniteDist::empty(region.dim());
    if let Some(layer) = last {
        let g = layer.apply_inv(&layer.bp);
        for (x, gx) in layer.sites.iter().zip(&g) {
            let y = x.step(0);
            if !region.contains(&y) {
                dist.add(y, *gx * T::of(env.kernel_at(x).prob(0)));
            }
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentLaw, Kernel};

    #[test]
    fn gamblers_ruin() {
        let env = Environment::new(EnvironmentLaw::srw(1).unwrap(), 0);
        let r = BoxRegion { lo: Point::new(&[1]), hi: Point::new(&[4]) };
        let e = exact_exit::<f64, _>(&env, &r, &Point::new(&[2])).unwrap();
        assert!((e.dist.prob(&Point::new(&[0])) - 0.6).abs() < 1e-12);
        assert!((e.dist.prob(&Point::new(&[5])) - 0.4).abs() < 1e-12);
        assert!((e.expected_steps - 6.0).abs() < 1e-10);
    }

    #[test]
    fn deterministic_right_block() {
        let law = EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        let env = Environment::new(law, 0);
        let b = BlockSpec::axial(Point::zero(2), 3);
        let e = exact_exit::<f64, _>(&env, &b, &Point::zero(2)).unwrap();
        assert!((e.dist.prob(&Point::new(&[9, 0])) - 1.0).abs() < 1e-12);
        assert_eq!(e.dist.len(), 1);
    }

    #[test]
    fn masses_sum_to_one_and_streaming_agrees() {
        let law = EnvironmentLaw::mixture(
            0.05,
            vec![Kernel::new(&[0.4, 0.1, 0.25, 0.25]).unwrap(), Kernel::new(&[0.25, 0.25, 0.2, 0.3]).unwrap()],
            vec![0.5, 0.5],
        )
        .unwrap();
        let env = Environment::new(law, 17);
        let b = BlockSpec::new(Point::new(&[3, 1]), 3, &[2.0, 1.0]).unwrap();
        let e = exact_exit::<f64, _>(&env, &b, &b.z).unwrap();
        assert!((e.dist.total() - 1.0).abs() < 1e-10);
        let front = exact_front_exit::<f64, _>(&env, &b, &b.z).unwrap();
        for (x, w) in front.iter() {
            assert!((e.dist.prob(x) - w).abs() < 1e-12);
        }
        let f32d = exact_exit::<f32, _>(&env, &b, &b.z).unwrap();
        assert!((f32d.dist.total() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn too_large_region() {
        let env = Environment::new(EnvironmentLaw::srw(2).unwrap(), 0);
        let b = BlockSpec::axial(Point::zero(2), 40);
        assert!(matches!(exact_exit::<f64, _>(&env, &b, &b.z), Err(Error::RegionTooLarge { .. })));
    }

    #[test]
    fn inversion() {
        let mut a: Vec<f64> = vec![4.0, 7.0, 2.0, 6.0];
        let inv = invert(&mut a, 2).unwrap();
        assert!((inv[0] - 0.6).abs() < 1e-12 && (inv[1] + 0.7).abs() < 1e-12);
        let mut s: Vec<f64> = vec![1.0, 2.0, 2.0, 4.0];
        assert_eq!(invert(&mut s, 2), Err(Error::SingularSystem));
    }
}
