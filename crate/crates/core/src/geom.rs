//! Basic blocks, middle thirds, basic lattices and the scale ladder.

use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::scale::r5_clamped;
use serde::{Deserialize, Serialize};

/// Ceiling that forgives floating error just above an integer.
pub fn tolerant_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    Interior,
    Boundary,
    FrontBoundary,
    Exterior,
}

/// The basic block P(z, N) with speed direction theta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockRepr", into = "BlockRepr")]
pub struct BlockSpec {
    pub z: Point,
    pub n: u64,
    pub theta: Vec<f64>,
    half_width: f64,
}

#[derive(Serialize, Deserialize)]
struct BlockRepr {
    z: Point,
    n: u64,
    theta: Vec<f64>,
}

impl TryFrom<BlockRepr> for BlockSpec {
    type Error = Error;
    fn try_from(r: BlockRepr) -> Result<Self> {
        BlockSpec::new(r.z, r.n, &r.theta)
    }
}

impl From<BlockSpec> for BlockRepr {
    fn from(b: BlockSpec) -> Self {
        BlockRepr { z: b.z, n: b.n, theta: b.theta }
    }
}

impl BlockSpec {
    pub fn new(z: Point, n: u64, theta: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("block size {n} < 2")));
        }
        if theta.len() != z.dim() {
            return Err(Error::Domain("theta dimension mismatch".into()));
        }
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if !(theta[0] > 0.0) || !(norm > 0.0) {
            return Err(Error::Domain("theta must have positive first component".into()));
        }
        let half_width = n as f64 * r5_clamped(n as f64);
        Ok(BlockSpec { z, n, theta: theta.iter().map(|t| t / norm).collect(), half_width })
    }

    /// Block with theta = e1.
    pub fn axial(z: Point, n: u64) -> Self {
        let mut th = vec![0.0; z.dim()];
        th[0] = 1.0;
        BlockSpec::new(z, n, &th).expect("valid axial block")
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    pub fn depth(&self) -> i64 {
        (self.n * self.n) as i64
    }

    /// Transverse half-width N R_5(N).
    #[inline]
    pub fn width(&self) -> f64 {
        self.half_width
    }

    pub fn with_center(&self, z: Point) -> Self {
        BlockSpec { z, ..self.clone() }
    }

    /// Coordinate `i` of u(z, x) for a point with first coordinate `x1`.
    #[inline]
    fn axis_coord(&self, x1: i64, i: usize) -> f64 {
        self.z.get(i) as f64 + self.theta[i] * (x1 - self.z.get(0)) as f64 / self.theta[0]
    }

    #[inline]
    fn within(&self, x: &Point, depth: f64, width: f64) -> bool {
        if (((x.get(0) - self.z.get(0)).abs()) as f64) >= depth {
            return false;
        }
        (1..self.dim()).all(|i| (x.get(i) as f64 - self.axis_coord(x.get(0), i)).abs() < width)
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        self.within(x, self.depth() as f64, self.width())
    }

    pub fn middle_third_contains(&self, x: &Point) -> bool {
        self.within(x, self.depth() as f64 / 3.0, self.width() / 3.0)
    }

    pub fn classify(&self, x: &Point) -> BoundaryClass {
        if self.contains(x) {
            return BoundaryClass::Interior;
        }
        let touches = (0..2 * self.dim()).any(|dir| self.contains(&x.step(dir)));
        if !touches {
            BoundaryClass::Exterior
        } else if x.get(0) - self.z.get(0) == self.depth() {
            BoundaryClass::FrontBoundary
        } else {
            BoundaryClass::Boundary
        }
    }

    /// Transverse coordinate ranges (inclusive) of the block on layer `x1`.
    pub fn layer_ranges(&self, x1: i64, width: f64) -> Vec<(i64, i64)> {
        (1..self.dim())
            .map(|i| {
                let u = self.axis_coord(x1, i);
                ((u - width).floor() as i64 + 1, (u + width).ceil() as i64 - 1)
            })
            .collect()
    }

    /// Block sites with first coordinate `x1`, in lexicographic order of the
    /// transverse coordinates.
    pub fn layer_sites(&self, x1: i64) -> Vec<Point> {
        if (x1 - self.z.get(0)).abs() >= self.depth() {
            return Vec::new();
        }
        let ranges = self.layer_ranges(x1, self.width());
        let mut p = self.z;
        p.set(0, x1);
        box_points(p, &ranges)
    }

    pub fn layers(&self) -> std::ops::RangeInclusive<i64> {
        self.z.get(0) - self.depth() + 1..=self.z.get(0) + self.depth() - 1
    }

    pub fn sites(&self) -> Vec<Point> {
        self.layers().flat_map(|l| self.layer_sites(l)).collect()
    }

    pub fn site_count(&self) -> usize {
        self.layers().map(|l| self.layer_ranges(l, self.width()).iter().map(|(a, b)| (b - a + 1).max(0) as usize).product::<usize>()).sum()
    }

    /// Front boundary sites, i.e. one step in front of the last layer.
    pub fn front_sites(&self) -> Vec<Point> {
        let last = self.z.get(0) + self.depth() - 1;
        self.layer_sites(last).into_iter().map(|p| p.step(0)).collect()
    }

    pub fn middle_third_sites(&self) -> Vec<Point> {
        self.sites().into_iter().filter(|p| self.middle_third_contains(p)).collect()
    }
}

/// Cartesian product over transverse ranges with the first coordinate of `base`.
pub(crate) fn box_points(base: Point, ranges: &[(i64, i64)]) -> Vec<Point> {
    let mut out = vec![base];
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1).max(0) as usize);
        for p in &out {
            for v in lo..=hi {
                let mut q = *p;
                q.set(i + 1, v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Transverse spacing of the basic lattice, max(1, ceil(N R_5(N) / 4)).
pub fn lattice_spacing(n: u64) -> i64 {
    ((n as f64 * r5_clamped(n as f64) / 4.0).ceil() as i64).max(1)
}

pub fn on_lattice(z: &Point, n: u64) -> bool {
    let s = lattice_spacing(n);
    let n2 = (n * n) as i64;
    z.get(0).rem_euclid(n2) == 0 && (1..z.dim()).all(|i| z.get(i).rem_euclid(s) == 0)
}

/// The lattice point z with first coordinate x1 whose middle third holds x,
/// nearest in l-infinity with the lexicographically smallest choice on ties.
pub fn lattice_cover(x: &Point, n: u64) -> Result<Point> {
    let n2 = (n * n) as i64;
    if x.get(0).rem_euclid(n2) != 0 {
        return Err(Error::NotOnLayer);
    }
    let s = lattice_spacing(n);
    let mut z = *x;
    for i in 1..x.dim() {
        let v = x.get(i);
        let lo = v.div_euclid(s) * s;
        let hi = lo + s;
        // strictly nearer upper point wins, equal distance keeps the lower one
        z.set(i, if hi - v < v - lo { hi } else { lo });
    }
    Ok(z)
}

/// Partition of the basic lattice into 9^d classes with pairwise disjoint blocks.
#[derive(Clone, Debug)]
pub struct LatticeClasses {
    pub n: u64,
    pub d: usize,
    pub spacing: i64,
}

impl LatticeClasses {
    pub fn count(&self) -> usize {
        9usize.pow(self.d as u32)
    }

    pub fn class_of(&self, z: &Point) -> usize {
        let n2 = (self.n * self.n) as i64;
        let mut id = (z.get(0) / n2).rem_euclid(9) as usize;
        for i in 1..self.d {
            id = id * 9 + (z.get(i) / self.spacing).rem_euclid(9) as usize;
        }
        id
    }
}

pub fn sublattice_decomposition(n: u64, d: usize) -> LatticeClasses {
    LatticeClasses { n, d, spacing: lattice_spacing(n) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstantsMode {
    Strict,
    Relaxed { epsilon: Option<f64>, psi: f64, chi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub alpha: f64,
    pub gamma: f64,
    pub d: usize,
    pub epsilon: f64,
    pub psi: f64,
    pub chi: f64,
    pub relaxed: bool,
}

impl Constants {
    /// The three defining inequalities on (epsilon, psi, chi).
    pub fn inequalities(&self) -> [bool; 3] {
        let d = self.d as f64;
        [
            2.0 * d * self.epsilon < d - self.alpha,
            self.psi <= self.gamma * self.epsilon / (30.0 * d),
            self.chi < self.psi * self.psi / 2.0 * (d - 1.0) / (2.0 * (d + 1.0)),
        ]
    }
}

pub fn choose_constants(alpha: f64, d: usize, gamma: f64, mode: ConstantsMode) -> Result<Constants> {
    if !(gamma > 0.0) {
        return Err(Error::InfeasibleConstants("gamma must be positive".into()));
    }
    let df = d as f64;
    let strict_eps = (df - alpha) / (4.0 * df);
    match mode {
        ConstantsMode::Strict => {
            if !(alpha > 0.0 && alpha < df) {
                return Err(Error::InfeasibleConstants(format!("alpha={alpha} must lie in (0, d={d})")));
            }
            let epsilon = strict_eps;
            let psi = gamma * epsilon / (30.0 * df);
            let chi = 0.9 * (psi * psi / 2.0) * (df - 1.0) / (2.0 * (df + 1.0));
            Ok(Constants { alpha, gamma, d, epsilon, psi, chi, relaxed: false })
        }
        ConstantsMode::Relaxed { epsilon, psi, chi } => {
            if !(psi > 0.0 && chi > 0.0) {
                return Err(Error::InfeasibleConstants("psi and chi must be positive".into()));
            }
            let epsilon = epsilon.unwrap_or(if alpha < df { strict_eps } else { 0.0 });
            Ok(Constants { alpha, gamma, d, epsilon, psi, chi, relaxed: true })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    #[serde(rename = "L")]
    pub l: f64,
    pub epsilon: f64,
    pub psi: f64,
    pub chi: f64,
    pub relaxed: bool,
    pub sizes: Vec<u64>,
    pub rhos: Vec<f64>,
    pub iota: usize,
    #[serde(skip)]
    pub near_degenerate: bool,
}

impl ScaleLadder {
    pub fn size(&self, k: usize) -> u64 {
        self.sizes[k - 1]
    }

    pub fn layer(&self, k: usize) -> i64 {
        let n = self.size(k) as i64;
        n * n
    }
}

pub fn build_ladder(l: f64, c: &Constants) -> Result<ScaleLadder> {
    if !(l >= 2.0) {
        return Err(Error::Domain(format!("L={l} < 2")));
    }
    let raw = l.powf(c.psi);
    let n1 = tolerant_ceil(raw) as u64;
    if (n1 as f64).powi(2) >= 2.0 * l {
        return Err(Error::DegenerateLadder);
    }
    let mut sizes = vec![n1];
    let mut rhos = Vec::new();
    loop {
        let k = sizes.len();
        let rho = c.chi / 2.0 + c.chi / 2f64.powi(k as i32);
        let next = sizes[k - 1] * (tolerant_ceil(l.powf(rho)) as u64).max(2);
        if (next as f64).powi(2) >= 2.0 * l {
            break;
        }
        rhos.push(rho);
        sizes.push(next);
    }
    Ok(ScaleLadder {
        l,
        epsilon: c.epsilon,
        psi: c.psi,
        chi: c.chi,
        relaxed: c.relaxed,
        iota: sizes.len(),
        sizes,
        rhos,
        near_degenerate: raw < 2.0,
    })
}

/// B_L = [-L, L] x [-L^2, L^2]^(d-1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlowdownBox {
    pub l: i64,
}

impl SlowdownBox {
    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        x.get(0).abs() <= self.l && (1..x.dim()).all(|i| x.get(i).abs() <= self.l * self.l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[i64]) -> Point {
        Point::new(v)
    }

    #[test]
    fn block_membership_examples() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        assert!(b.contains(&p(&[8, 2])));
        assert!(!b.contains(&p(&[9, 0])));
        assert!(!b.contains(&p(&[0, 3])));
        assert!(b.contains(&b.z) && b.middle_third_contains(&b.z));
        let t = BlockSpec::new(Point::zero(2), 2, &[2.0, 1.0]).unwrap();
        assert!(t.contains(&p(&[2, 1])));
        for n in 2..8 {
            assert!(BlockSpec::new(Point::zero(2), n, &[2.0, 1.0]).unwrap().contains(&p(&[2, 1])));
        }
    }

    #[test]
    fn boundary_examples() {
        let b = BlockSpec::axial(Point::zero(2), 3);
        assert_eq!(b.classify(&p(&[9, 0])), BoundaryClass::FrontBoundary);
        assert_eq!(b.classify(&p(&[0, 3])), BoundaryClass::Boundary);
        assert_eq!(b.classify(&p(&[0, 0])), BoundaryClass::Interior);
        assert_eq!(b.classify(&p(&[20, 0])), BoundaryClass::Exterior);
        assert_eq!(b.classify(&p(&[-9, 0])), BoundaryClass::Boundary);
    }

    #[test]
    fn site_enumeration_matches_membership() {
        let b = BlockSpec::new(p(&[4, -3]), 3, &[3.0, 1.0]).unwrap();
        let sites = b.sites();
        assert_eq!(sites.len(), b.site_count());
        for x in -20..30 {
            for y in -20..20 {
                let q = p(&[x, y]);
                assert_eq!(b.contains(&q), sites.contains(&q));
            }
        }
        for f in b.front_sites() {
            assert_eq!(b.classify(&f), BoundaryClass::FrontBoundary);
        }
    }

    #[test]
    fn cover_examples() {
        assert_eq!(lattice_cover(&Point::zero(2), 3).unwrap(), Point::zero(2));
        let z = lattice_cover(&p(&[9, 2]), 3).unwrap();
        assert_eq!(z, p(&[9, 2]));
        assert!(BlockSpec::axial(z, 3).middle_third_contains(&p(&[9, 2])));
        assert_eq!(lattice_cover(&p(&[5, 0]), 3), Err(Error::NotOnLayer));
        assert_eq!(lattice_spacing(10), 3);
        assert_eq!(lattice_cover(&p(&[100, 4]), 10).unwrap(), p(&[100, 3]));
        assert_eq!(lattice_spacing(6), 2);
        assert_eq!(lattice_cover(&p(&[36, 1]), 6).unwrap(), p(&[36, 0]));
        assert_eq!(lattice_cover(&p(&[36, -1]), 6).unwrap(), p(&[36, -2]));
    }

    #[test]
    fn decomposition_classes() {
        let c = sublattice_decomposition(10, 2);
        assert_eq!(c.count(), 81);
        let z = p(&[300, 9]);
        assert_eq!(c.class_of(&z), c.class_of(&z));
        let z2 = z + p(&[0, 9 * c.spacing]);
        assert_eq!(c.class_of(&z), c.class_of(&z2));
        let a = BlockSpec::axial(z, 10);
        let b = BlockSpec::axial(z2, 10);
        assert!(a.sites().iter().all(|x| !b.contains(x)));
    }

    #[test]
    fn constants_and_ladder() {
        let c = choose_constants(4.9, 5, 0.5, ConstantsMode::Strict).unwrap();
        assert!((c.epsilon - 0.005).abs() < 1e-15);
        assert!((c.psi - 0.5 * 0.005 / 150.0).abs() < 1e-18);
        assert!(c.inequalities().iter().all(|b| *b));
        assert!(choose_constants(5.0, 5, 0.5, ConstantsMode::Strict).is_err());
        let r = choose_constants(1.0, 2, 1.0, ConstantsMode::Relaxed { epsilon: None, psi: 0.25, chi: 0.2 }).unwrap();
        assert!(r.relaxed && r.psi == 0.25 && r.chi == 0.2);

        let lad = build_ladder(1e4, &r).unwrap();
        assert_eq!(lad.sizes, vec![10, 70]);
        assert_eq!(lad.iota, 2);
        assert!((lad.rhos[0] - 0.2).abs() < 1e-15);

        let s = build_ladder(1e6, &c).unwrap();
        assert_eq!(s.sizes[0], 2);
        assert!(s.near_degenerate);

        let big = choose_constants(1.0, 2, 1.0, ConstantsMode::Relaxed { epsilon: None, psi: 0.6, chi: 0.1 }).unwrap();
        assert_eq!(build_ladder(100.0, &big), Err(Error::DegenerateLadder));
    }
}
