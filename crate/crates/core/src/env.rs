//! Single-site kernel laws, site-keyed i.i.d. environments and nestling
//! classification.

use crate::error::{Error, Result};
use crate::lattice::{Point, MAX_DIM};
use crate::rng::{hash_site, unit_f64};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

const SUM_TOL: f64 = 1e-9;

/// Nearest-neighbour transition probabilities in the order +e1, -e1, +e2, -e2, ...
#[derive(Clone, Copy, PartialEq)]
pub struct Kernel {
    d: u8,
    p: [f64; 2 * MAX_DIM],
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Kernel{:?}", self.probs())
    }
}

impl Kernel {
    /// Build a kernel from 2d probabilities. Rows must sum to one within 1e-9;
    /// they are renormalised exactly afterwards.
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() || probs.len() % 2 != 0 || probs.len() > 2 * MAX_DIM {
            return Err(Error::InvalidKernel(format!("{} entries", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidKernel(format!("negative or non-finite entry in {probs:?}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidKernel(format!("{probs:?} sums to {s}")));
        }
        let mut p = [0.0; 2 * MAX_DIM];
        for (i, v) in probs.iter().enumerate() {
            p[i] = v / s;
        }
        Ok(Kernel { d: (probs.len() / 2) as u8, p })
    }

    pub fn srw(d: usize) -> Self {
        let v = vec![1.0 / (2 * d) as f64; 2 * d];
        Kernel::new(&v).unwrap()
    }

    /// Mass `1 - (2d-1) eta` on `dir` and `eta` on every other direction.
    pub fn extreme(d: usize, eta: f64, dir: usize) -> Self {
        let mut v = vec![eta; 2 * d];
        v[dir] = 1.0 - (2 * d - 1) as f64 * eta;
        Kernel::new(&v).unwrap()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d as usize
    }

    pub fn probs(&self) -> &[f64] {
        &self.p[..2 * self.dim()]
    }

    #[inline]
    pub fn prob(&self, dir: usize) -> f64 {
        self.p[dir]
    }

    pub fn min_prob(&self) -> f64 {
        self.probs().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn drift_component(&self, i: usize) -> f64 {
        self.p[2 * i] - self.p[2 * i + 1]
    }

    /// Direction index for a uniform `u` in [0,1).
    #[inline]
    pub fn sample_dir(&self, u: f64) -> usize {
        let n = 2 * self.dim();
        let mut acc = 0.0;
        for i in 0..n - 1 {
            acc += self.p[i];
            if u < acc {
                return i;
            }
        }
        n - 1
    }
}

/// Local drift, the expected one-step displacement.
pub fn local_drift(k: &Kernel) -> Vec<f64> {
    (0..k.dim()).map(|i| k.drift_component(i)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Srw,
    FixedDrift(Kernel),
    FiniteMixture { kernels: Vec<Kernel>, cumulative: Vec<f64>, weights: Vec<f64> },
    DirichletPerturbed { base: Kernel, concentration: f64 },
}

/// Serializable description of a law, as it appears in config files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub dimension: usize,
    pub eta: f64,
    pub family: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
}

/// Distribution Q of the single-site kernel, with ellipticity floor eta.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentLaw {
    d: usize,
    eta: f64,
    family: Family,
}

impl EnvironmentLaw {
    fn check_eta(d: usize, eta: f64) -> Result<()> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidLaw(format!("dimension {d}")));
        }
        if !(0.0..=1.0 / (2 * d) as f64 + 1e-15).contains(&eta) {
            return Err(Error::InvalidLaw(format!("eta {eta} outside [0, 1/(2d)]")));
        }
        Ok(())
    }

    fn check_kernel(d: usize, eta: f64, k: &Kernel) -> Result<()> {
        if k.dim() != d {
            return Err(Error::InvalidKernel(format!("kernel of dimension {} in a d={d} law", k.dim())));
        }
        if k.min_prob() < eta - 1e-12 {
            return Err(Error::InvalidKernel(format!("{k:?} violates eta={eta}")));
        }
        Ok(())
    }

    pub fn srw(d: usize) -> Result<Self> {
        Self::check_eta(d, 0.0)?;
        Ok(EnvironmentLaw { d, eta: 1.0 / (2 * d) as f64, family: Family::Srw })
    }

    pub fn fixed(eta: f64, kernel: Kernel) -> Result<Self> {
        let d = kernel.dim();
        Self::check_eta(d, eta)?;
        Self::check_kernel(d, eta, &kernel)?;
        Ok(EnvironmentLaw { d, eta, family: Family::FixedDrift(kernel) })
    }

    pub fn mixture(eta: f64, kernels: Vec<Kernel>, weights: Vec<f64>) -> Result<Self> {
        if kernels.is_empty() || kernels.len() != weights.len() {
            return Err(Error::InvalidLaw("mixture needs one weight per kernel".into()));
        }
        let d = kernels[0].dim();
        Self::check_eta(d, eta)?;
        for k in &kernels {
            Self::check_kernel(d, eta, k)?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidLaw("negative mixture weight".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidLaw(format!("mixture weights sum to {s}")));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / s).collect();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(EnvironmentLaw { d, eta, family: Family::FiniteMixture { kernels, cumulative, weights } })
    }

    /// Kernel = eta + (1 - 2d eta) * Dirichlet(concentration * base).
    pub fn dirichlet(eta: f64, base: Kernel, concentration: f64) -> Result<Self> {
        let d = base.dim();
        Self::check_eta(d, eta)?;
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(Error::InvalidLaw("concentration must be positive".into()));
        }
        if base.min_prob() <= 0.0 {
            return Err(Error::InvalidLaw("dirichlet base needs positive entries".into()));
        }
        Ok(EnvironmentLaw { d, eta, family: Family::DirichletPerturbed { base, concentration } })
    }

    pub fn from_spec(spec: &LawSpec) -> Result<Self> {
        let d = spec.dimension;
        let row = |i: usize| -> Result<Kernel> {
            let r = spec
                .kernels
                .get(i)
                .ok_or_else(|| Error::InvalidLaw(format!("missing kernel row {i}")))?;
            if r.len() != 2 * d {
                return Err(Error::InvalidKernel(format!("row {i} has {} entries, expected {}", r.len(), 2 * d)));
            }
            Kernel::new(r).map_err(|e| Error::InvalidKernel(format!("row {i}: {e}")))
        };
        match spec.family.as_str() {
            "srw" => Self::srw(d),
            "fixed-drift" => Self::fixed(spec.eta, row(0)?),
            "finite-mixture" => {
                let ks = (0..spec.kernels.len()).map(row).collect::<Result<Vec<_>>>()?;
                Self::mixture(spec.eta, ks, spec.weights.clone())
            }
            "dirichlet-perturbed" => {
                let c = spec
                    .concentration
                    .ok_or_else(|| Error::InvalidLaw("dirichlet needs concentration".into()))?;
                Self::dirichlet(spec.eta, row(0)?, c)
            }
            other => Err(Error::InvalidLaw(format!("unknown family {other}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Support points with their weights, for finite-support laws.
    pub fn support(&self) -> Option<Vec<(Kernel, f64)>> {
        match &self.family {
            Family::Srw => Some(vec![(Kernel::srw(self.d), 1.0)]),
            Family::FixedDrift(k) => Some(vec![(*k, 1.0)]),
            Family::FiniteMixture { kernels, weights, .. } => {
                Some(kernels.iter().cloned().zip(weights.iter().cloned()).collect())
            }
            Family::DirichletPerturbed { .. } => None,
        }
    }

    /// Mean kernel, exact for finite laws and for the dirichlet family.
    pub fn mean_kernel(&self) -> Kernel {
        match &self.family {
            Family::DirichletPerturbed { base, .. } => {
                let free = 1.0 - 2.0 * self.d as f64 * self.eta;
                let v: Vec<f64> = base.probs().iter().map(|b| self.eta + free * b).collect();
                Kernel::new(&v).unwrap()
            }
            _ => {
                let sup = self.support().unwrap();
                let mut v = vec![0.0; 2 * self.d];
                for (k, w) in sup {
                    for (i, x) in v.iter_mut().enumerate() {
                        *x += w * k.prob(i);
                    }
                }
                Kernel::new(&v).unwrap()
            }
        }
    }

    pub fn mean_drift(&self) -> Vec<f64> {
        local_drift(&self.mean_kernel())
    }

    /// Probability that a site's local drift has positive component along `dir`.
    pub fn prob_drift_along(&self, dir: usize) -> Result<f64> {
        let axis = dir / 2;
        let sign = if dir % 2 == 0 { 1.0 } else { -1.0 };
        let sup = self.support().ok_or(Error::UnsupportedLaw)?;
        Ok(sup
            .iter()
            .filter(|(k, _)| sign * k.drift_component(axis) > 0.0)
            .map(|(_, w)| *w)
            .sum())
    }

    /// Kernel at a site given the site's hash key, deterministic in `(seed, site)`.
    pub fn draw(&self, seed: u64, site: &Point) -> Kernel {
        match &self.family {
            Family::Srw => Kernel::srw(self.d),
            Family::FixedDrift(k) => *k,
            Family::FiniteMixture { kernels, cumulative, .. } => {
                let u = unit_f64(hash_site(seed, site, 0));
                let i = cumulative.iter().position(|c| u < *c).unwrap_or(kernels.len() - 1);
                kernels[i]
            }
            Family::DirichletPerturbed { base, concentration } => {
                let mut rng = ChaCha8Rng::seed_from_u64(hash_site(seed, site, 1));
                let mut g = [0.0; 2 * MAX_DIM];
                let mut s = 0.0;
                for (i, gi) in g.iter_mut().enumerate().take(2 * self.d) {
                    let shape = concentration * base.prob(i);
                    *gi = Gamma::new(shape, 1.0).unwrap().sample(&mut rng);
                    s += *gi;
                }
                let free = 1.0 - 2.0 * self.d as f64 * self.eta;
                let v: Vec<f64> = if s > 0.0 {
                    g[..2 * self.d].iter().map(|x| self.eta + free * x / s).collect()
                } else {
                    base.probs().iter().map(|b| self.eta + free * b).collect()
                };
                Kernel::new(&v).unwrap()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nestling {
    PlainNestling,
    MarginallyNestling,
    NonNestling,
}

/// Position of the origin relative to the convex hull of the support drifts.
pub fn classify_nestling(law: &EnvironmentLaw) -> Result<Nestling> {
    let sup = law.support().ok_or(Error::UnsupportedLaw)?;
    let d = law.dim();
    let drifts: Vec<Vec<f64>> = sup.iter().filter(|(_, w)| *w > 0.0).map(|(k, _)| local_drift(k)).collect();

    // maximise t subject to sum lambda_i v_i = 0, sum lambda_i = 1, lambda_i >= t
    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let t = pb.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    let lam: Vec<_> = drifts.iter().map(|_| pb.add_var(0.0, (0.0, 1.0))).collect();
    for i in 0..d {
        let row: Vec<_> = lam.iter().zip(&drifts).map(|(l, v)| (*l, v[i])).collect();
        pb.add_constraint(&row, ComparisonOp::Eq, 0.0);
    }
    let ones: Vec<_> = lam.iter().map(|l| (*l, 1.0)).collect();
    pb.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    for l in &lam {
        pb.add_constraint(&[(*l, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
    }
    let sol = match pb.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return Ok(Nestling::NonNestling),
        Err(e) => return Err(Error::Domain(format!("nestling LP: {e}"))),
    };
    if sol.objective() > 1e-9 && affine_rank(&drifts) == d {
        Ok(Nestling::PlainNestling)
    } else {
        Ok(Nestling::MarginallyNestling)
    }
}

fn affine_rank(pts: &[Vec<f64>]) -> usize {
    if pts.len() < 2 {
        return 0;
    }
    let mut rows: Vec<Vec<f64>> =
        pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| a - b).collect()).collect();
    let cols = pts[0].len();
    let mut rank = 0;
    for c in 0..cols {
        let piv = (rank..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs()));
        let Some(piv) = piv else { break };
        if rows[piv][c].abs() < 1e-12 {
            continue;
        }
        rows.swap(rank, piv);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][c] / rows[rank][c];
                for k in 0..cols {
                    rows[r][k] -= f * rows[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// An environment: a law, a seed and optional planted kernels.
#[derive(Clone, Debug)]
pub struct Environment {
    law: Arc<EnvironmentLaw>,
    seed: u64,
    overlays: Arc<HashMap<Point, Kernel>>,
    constant: Option<Kernel>,
}

impl Environment {
    pub fn new(law: EnvironmentLaw, seed: u64) -> Self {
        Self::from_arc(Arc::new(law), seed)
    }

    pub fn from_arc(law: Arc<EnvironmentLaw>, seed: u64) -> Self {
        let constant = match law.family() {
            Family::Srw => Some(Kernel::srw(law.dim())),
            Family::FixedDrift(k) => Some(*k),
            _ => None,
        };
        Environment { law, seed, overlays: Arc::new(HashMap::new()), constant }
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }

    pub fn law_arc(&self) -> Arc<EnvironmentLaw> {
        self.law.clone()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn overlays(&self) -> &HashMap<Point, Kernel> {
        &self.overlays
    }

    /// Same environment with additional planted kernels. Overlays must respect eta.
    pub fn with_overlays(&self, extra: HashMap<Point, Kernel>) -> Result<Self> {
        let eta = self.law.eta();
        for k in extra.values() {
            EnvironmentLaw::check_kernel(self.dim(), eta, k)?;
        }
        let mut map = (*self.overlays).clone();
        map.extend(extra);
        Ok(Environment { overlays: Arc::new(map), ..self.clone() })
    }

    #[inline]
    pub fn kernel_at(&self, site: &Point) -> Kernel {
        if !self.overlays.is_empty() {
            if let Some(k) = self.overlays.get(site) {
                return *k;
            }
        }
        match self.constant {
            Some(k) => k,
            None => self.law.draw(self.seed, site),
        }
    }

    /// Direction of one step from `site` for a uniform `u`, without copying
    /// the kernel on the common paths. Agrees with `kernel_at(site).sample_dir(u)`.
    #[inline]
    pub fn sample_dir(&self, site: &Point, u: f64) -> usize {
        if !self.overlays.is_empty() {
            if let Some(k) = self.overlays.get(site) {
                return k.sample_dir(u);
            }
        }
        if let Some(k) = &self.constant {
            return k.sample_dir(u);
        }
        match &self.law.family {
            Family::FiniteMixture { kernels, cumulative, .. } => {
                let v = unit_f64(hash_site(self.seed, site, 0));
                let i = cumulative.iter().position(|c| v < *c).unwrap_or(kernels.len() - 1);
                kernels[i].sample_dir(u)
            }
            _ => self.law.draw(self.seed, site).sample_dir(u),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.constant.is_some() && self.overlays.is_empty()
    }
}

/// Inward direction of the naive trap at `offset` from its centre.
pub fn trap_direction(offset: &Point) -> usize {
    let d = offset.dim();
    let mut axis = 0;
    let mut best = -1;
    for i in 0..d {
        if offset.get(i).abs() > best {
            best = offset.get(i).abs();
            axis = i;
        }
    }
    if best == 0 {
        return 1;
    }
    2 * axis + usize::from(offset.get(axis) > 0)
}

/// Sites of the l-infinity ball of `radius` around `center`.
pub fn linf_ball(center: &Point, radius: i64) -> Vec<Point> {
    let d = center.dim();
    let side = (2 * radius + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = *center;
            for i in 0..d {
                p.set(i, center.get(i) - radius + (idx % side) as i64);
                idx /= side;
            }
            p
        })
        .collect()
}

/// Plant inward-pointing extreme kernels on the l-infinity ball around `center`.
pub fn plant_naive_trap(env: &Environment, center: &Point, radius: i64) -> Result<Environment> {
    if radius < 1 {
        return Err(Error::InvalidRadius);
    }
    let d = env.dim();
    let eta = env.law().eta();
    let map = linf_ball(center, radius)
        .into_iter()
        .map(|x| {
            let dir = trap_direction(&(x - *center));
            (x, Kernel::extreme(d, eta, dir))
        })
        .collect();
    env.with_overlays(map)
}

/// Log product-measure probability that every trap site independently shows
/// an inward drift, with per-site probability `p(dir)`.
pub fn trap_log_probability(d: usize, radius: i64, p: impl Fn(usize) -> f64) -> f64 {
    let c = Point::zero(d);
    linf_ball(&c, radius).iter().map(|x| p(trap_direction(x)).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(v: &[f64]) -> Kernel {
        Kernel::new(v).unwrap()
    }

    #[test]
    fn drift_examples() {
        assert_eq!(local_drift(&Kernel::srw(2)), vec![0.0, 0.0]);
        let dr = local_drift(&k(&[0.4, 0.1, 0.25, 0.25]));
        assert!((dr[0] - 0.3).abs() < 1e-15 && dr[1] == 0.0);
        assert_eq!(local_drift(&k(&[1.0, 0.0, 0.0, 0.0])), vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Kernel::new(&[0.5, 0.49]).is_err());
        assert!(Kernel::new(&[0.5, 0.5, 0.1]).is_err());
        assert!(EnvironmentLaw::fixed(0.1, k(&[0.7, 0.05, 0.125, 0.125])).is_err());
        assert!(EnvironmentLaw::fixed(0.3, Kernel::srw(2)).is_err());
    }

    #[test]
    fn constant_laws_return_their_kernel() {
        let env = Environment::new(EnvironmentLaw::srw(2).unwrap(), 3);
        assert_eq!(env.kernel_at(&Point::new(&[5, -2])).probs(), &[0.25; 4]);
        let kk = k(&[0.4, 0.1, 0.25, 0.25]);
        let env = Environment::new(EnvironmentLaw::fixed(0.1, kk).unwrap(), 3);
        assert_eq!(env.kernel_at(&Point::new(&[9, 9])), kk);
    }

    #[test]
    fn nestling_examples() {
        let mix = |ks: Vec<Vec<f64>>| {
            let n = ks.len();
            EnvironmentLaw::mixture(0.05, ks.iter().map(|v| k(v)).collect(), vec![1.0 / n as f64; n]).unwrap()
        };
        let square = mix(vec![
            vec![0.4, 0.1, 0.25, 0.25],
            vec![0.1, 0.4, 0.25, 0.25],
            vec![0.25, 0.25, 0.4, 0.1],
            vec![0.25, 0.25, 0.1, 0.4],
        ]);
        assert_eq!(classify_nestling(&square).unwrap(), Nestling::PlainNestling);
        let edge = mix(vec![vec![0.4, 0.1, 0.25, 0.25], vec![0.25, 0.25, 0.4, 0.1], vec![0.25, 0.25, 0.1, 0.4]]);
        assert_eq!(classify_nestling(&edge).unwrap(), Nestling::MarginallyNestling);
        let fixed = EnvironmentLaw::fixed(0.1, k(&[0.4, 0.1, 0.25, 0.25])).unwrap();
        assert_eq!(classify_nestling(&fixed).unwrap(), Nestling::NonNestling);
        assert_eq!(classify_nestling(&EnvironmentLaw::srw(2).unwrap()).unwrap(), Nestling::MarginallyNestling);
        let dir = EnvironmentLaw::dirichlet(0.05, Kernel::srw(2), 4.0).unwrap();
        assert_eq!(classify_nestling(&dir), Err(Error::UnsupportedLaw));
    }

    #[test]
    fn trap_overlay() {
        let law = EnvironmentLaw::fixed(0.05, k(&[0.7, 0.1, 0.1, 0.1])).unwrap();
        let env = Environment::new(law, 1);
        let c = Point::new(&[10, 10]);
        let t = plant_naive_trap(&env, &c, 1).unwrap();
        assert_eq!(t.overlays().len(), 9);
        assert!(t.kernel_at(&c).drift_component(0) < 0.0);
        let t3 = plant_naive_trap(&env, &c, 3).unwrap();
        assert!(t3.kernel_at(&(c + Point::new(&[3, 1]))).drift_component(0) < 0.0);
        assert!(t3.kernel_at(&(c + Point::new(&[-1, 2]))).drift_component(1) < 0.0);
        assert_eq!(t3.kernel_at(&Point::new(&[0, 0])), env.kernel_at(&Point::new(&[0, 0])));
        assert_eq!(plant_naive_trap(&env, &c, 0).unwrap_err(), Error::InvalidRadius);
    }

    #[test]
    fn trap_ledger_product() {
        let l = trap_log_probability(2, 5, |_| 0.1);
        assert!((l - 121.0 * 0.1f64.ln()).abs() < 1e-9);
        assert!((l + 278.6).abs() < 0.05);
    }

    #[test]
    fn dirichlet_kernels_respect_eta() {
        let law = EnvironmentLaw::dirichlet(0.05, k(&[0.4, 0.1, 0.25, 0.25]), 3.0).unwrap();
        for i in 0..2000 {
            let kk = law.draw(11, &Point::new(&[i, -i]));
            assert!(kk.min_prob() >= 0.05 - 1e-12);
            assert!((kk.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
