use super::classifier::{block_at, count_bad_blocks, level_of, Classifier};
use super::config::AuxConfig;
use super::wevent::{w_event, WOutcome};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::exitstats::closeness::companion_sampler;
use crate::exitstats::dist::FiniteDist;
use crate::geom::{BlockSpec, BoundaryClass};
use crate::lattice::Point;
use crate::rng::derive_seed;
use crate::walk::{run_path, StopCause, StopRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedExit {
    /// Start to front exit, inclusive.
    pub path: Vec<Point>,
    /// Rejected attempts before the accepted one.
    pub retries: u64,
}

fn conditioned_into<R: Rng>(
    env: &Environment,
    block: &BlockSpec,
    start: &Point,
    rng: &mut R,
    max_retries: u64,
    step_budget: u64,
    out: &mut Vec<Point>,
) -> Result<u64> {
    if !block.middle_third_contains(start) {
        return Err(Error::Domain(format!("{start:?} is not in the middle third of the block")));
    }
    let stop = StopRule::block(block.clone(), step_budget);
    for attempt in 0..max_retries.max(1) {
        if run_path(env, *start, &stop, rng, out) == StopCause::BudgetExhausted {
            return Err(Error::BudgetExhausted);
        }
        if block.classify(out.last().expect("non-empty path")) == BoundaryClass::FrontBoundary {
            return Ok(attempt);
        }
    }
    Err(Error::ConditioningTooRare(max_retries))
}

/// Quenched walk from `start` conditioned to leave `block` through its front,
/// by rejection.
pub fn conditioned_front_exit(
    env: &Environment,
    block: &BlockSpec,
    start: &Point,
    seed: u64,
    max_retries: u64,
    step_budget: u64,
) -> Result<ConditionedExit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::new();
    let retries = conditioned_into(env, block, start, &mut rng, max_retries, step_budget, &mut path)?;
    Ok(ConditionedExit { path, retries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Deterministic steps to the right.
    Forced,
    /// Shortest path to the corrected point plus the +e1 bump.
    Correction,
    /// Quenched walk conditioned on a front exit.
    Conditioned,
}

/// `path[start..=end]`; the steps are the ones leaving `start..end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub scale: usize,
    pub block: Option<BlockSpec>,
    pub start: usize,
    pub end: usize,
    pub retries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub k: usize,
    pub j: u64,
    pub beta: Point,
    /// False when the companion had to fall back to an uncertified plan.
    pub certified: bool,
    pub table_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxRun {
    pub seed: u64,
    #[serde(skip)]
    pub path: Vec<Point>,
    #[serde(skip)]
    pub segments: Vec<Segment>,
    /// zeta_n for n >= 1.
    pub zeta: Vec<usize>,
    pub zeta_prime: Vec<usize>,
    pub x_prime: Vec<Point>,
    pub x: Vec<Point>,
    /// k(x_n).
    pub levels: Vec<usize>,
    pub betas: Vec<BetaEntry>,
    pub q_k: Vec<u64>,
    pub stops: u64,
    pub stop_bound: f64,
    pub retries: u64,
    pub dropped_obligations: u64,
    /// Y at T'(layer) for every reached layer on the N_1^2 grid.
    pub layer_points: BTreeMap<i64, Point>,
    pub reached_exit: bool,
    pub w: Option<WOutcome>,
}

impl AuxRun {
    pub fn max_beta(&self) -> i64 {
        self.betas.iter().map(|b| b.beta.norm_inf()).max().unwrap_or(0)
    }

    pub fn returned_to_origin(&self) -> bool {
        let o = Point::zero(self.path.first().map(|p| p.dim()).unwrap_or(1));
        self.path.iter().skip(1).any(|p| *p == o)
    }
}

/// Draw from a finite law by inversion.
fn sample_dist<R: Rng>(d: &FiniteDist<f64>, rng: &mut R) -> Point {
    let u = rng.random::<f64>() * d.total();
    let mut acc = 0.0;
    let mut last = None;
    for (x, w) in d.iter() {
        acc += w;
        last = Some(*x);
        if u < acc {
            return *x;
        }
    }
    last.expect("non-empty law")
}

struct Obligation {
    k: usize,
    j: u64,
    x: Point,
}

struct Engine<'a, C: Classifier + ?Sized> {
    env: &'a Environment,
    cfg: &'a AuxConfig,
    cls: &'a C,
}

impl<C: Classifier + ?Sized> Engine<'_, C> {
    fn target_layer(&self, o: &Obligation) -> i64 {
        o.j as i64 * self.cfg.ladder.layer(o.k)
    }

    fn level(&self, x: &Point) -> usize {
        level_of(x, &self.cfg.ladder, self.env, self.cls)
    }

    /// Scales above k(x) whose grid holds x have bad covering blocks; each
    /// owes a correction at the next layer of its grid.
    fn open(&self, x: &Point, level: usize, cap: usize, obls: &mut Vec<Obligation>) {
        let l = x.get(0);
        for k in level + 1..=cap {
            let n2 = self.cfg.ladder.layer(k);
            if l.rem_euclid(n2) == 0 {
                obls.push(Obligation { k, j: (l / n2) as u64 + 1, x: *x });
            }
        }
    }

    fn segment<R: Rng>(&self, x: &Point, level: usize, rng: &mut R, out: &mut Vec<Point>) -> Result<(Option<BlockSpec>, u64)> {
        if level == 0 {
            out.clear();
            out.extend((0..=self.cfg.ladder.layer(1)).map(|i| *x + Point::axis(x.dim(), 0, i)));
            return Ok((None, 0));
        }
        let block = block_at(x, &self.cfg.ladder, level).ok_or(Error::NotOnLayer)?;
        let retries = conditioned_into(self.env, &block, x, rng, self.cfg.max_retries, self.cfg.step_budget, out)?;
        Ok((Some(block), retries))
    }

    /// Apply the corrections due on the layer of `xp` and return the corrected point.
    fn resolve<R: Rng>(&self, obls: &mut Vec<Obligation>, xp: &Point, rng: &mut R, reg: &mut Vec<BetaEntry>, dropped: &mut u64) -> Result<Point> {
        let layer = xp.get(0);
        let mut due = Vec::new();
        let mut keep = Vec::new();
        for o in obls.drain(..) {
            let t = self.target_layer(&o);
            if t == layer {
                due.push(o);
            } else if t < layer {
                *dropped += 1;
            } else {
                keep.push(o);
            }
        }
        *obls = keep;
        due.sort_by_key(|o| o.k);
        let mut sum = Point::zero(xp.dim());
        for o in &due {
            let x_obs = *xp - o.x + sum;
            let e = self.beta(o, x_obs, rng)?;
            sum = sum + e.beta;
            reg.push(e);
        }
        Ok(*xp + sum)
    }

    fn check_beta(&self, k: usize, j: u64, beta: &Point) -> Result<()> {
        if beta.get(0) != 0 {
            return Err(Error::InvariantViolated(format!("beta_({k},{j}) = {beta:?} moves along e1")));
        }
        if beta.norm_inf() as f64 >= self.cfg.beta_bound() {
            return Err(Error::InvariantViolated(format!("|beta_({k},{j})| = {} >= L^(4 psi) = {}", beta.norm_inf(), self.cfg.beta_bound())));
        }
        Ok(())
    }

    fn beta<R: Rng>(&self, o: &Obligation, x_obs: Point, rng: &mut R) -> Result<BetaEntry> {
        let mut table = FiniteDist::empty(x_obs.dim());
        table.add(x_obs, 1.0);
        for _ in 1..self.cfg.n_table.max(1) {
            let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
            let y = self.continuation(o, &mut sub)?;
            table.add(y - o.x, 1.0);
        }
        let nu = table.normalized();
        let c = companion_sampler(&nu, &self.cfg.targets[o.k - 1], self.cfg.lambda_k[o.k - 1], self.cfg.max_side)?;
        let beta = c.companion_of(&x_obs, rng) - x_obs;
        self.check_beta(o.k, o.j, &beta)?;
        Ok(BetaEntry { k: o.k, j: o.j, beta, certified: c.certified, table_size: self.cfg.n_table.max(1) })
    }

    /// A fresh copy of the dynamics from the obligation's state up to its
    /// target layer; returns the corrected arrival point.
    fn continuation<R: Rng>(&self, o: &Obligation, rng: &mut R) -> Result<Point> {
        let target = self.target_layer(o);
        let mut obls = Vec::new();
        let mut reg = Vec::new();
        let mut dropped = 0;
        let mut buf = Vec::new();
        let mut x = o.x;
        loop {
            let level = self.level(&x);
            self.open(&x, level, o.k - 1, &mut obls);
            self.segment(&x, level, rng, &mut buf)?;
            let xp = *buf.last().expect("non-empty segment");
            let xc = self.resolve(&mut obls, &xp, rng, &mut reg, &mut dropped)?;
            if xp.get(0) >= target {
                return Ok(xc);
            }
            x = xc;
        }
    }
}

struct Recorder {
    path: Vec<Point>,
    segments: Vec<Segment>,
    hits: BTreeMap<i64, usize>,
    max_layer: i64,
    grid: i64,
    exit: i64,
    origin: Point,
}

impl Recorder {
    /// Append `p`; true once the exit face is reached.
    fn push(&mut self, p: Point) -> Result<bool> {
        let last = *self.path.last().expect("path starts at the origin");
        if (p - last).norm1() != 1 {
            return Err(Error::InvariantViolated(format!("non-neighbour step {last:?} -> {p:?}")));
        }
        if p == self.origin {
            return Err(Error::InvariantViolated(format!("returned to the origin at time {}", self.path.len())));
        }
        self.path.push(p);
        if p.get(0) > self.max_layer {
            self.max_layer = p.get(0);
            if p.get(0).rem_euclid(self.grid) == 0 {
                self.hits.insert(p.get(0), self.path.len() - 1);
            }
        }
        Ok(p.get(0) >= self.exit)
    }

    fn time(&self) -> usize {
        self.path.len() - 1
    }

    fn push_segment(&mut self, kind: SegmentKind, scale: usize, block: Option<BlockSpec>, pts: &[Point], retries: u64) -> Result<bool> {
        let start = self.time();
        let mut done = false;
        for p in pts {
            if self.push(*p)? {
                done = true;
                break;
            }
        }
        self.segments.push(Segment { kind, scale, block, start, end: self.time(), retries });
        Ok(done)
    }
}

/// Staircase from `a` to `b` along e2, then e3, ..., excluding `a`.
fn staircase(a: &Point, b: &Point) -> Vec<Point> {
    let mut out = Vec::new();
    let mut p = *a;
    for i in 1..a.dim() {
        while p.get(i) != b.get(i) {
            let s = (b.get(i) - p.get(i)).signum();
            p.set(i, p.get(i) + s);
            out.push(p);
        }
    }
    out
}

/// One run of the auxiliary walk from the origin to the front face of B_{2L}.
/// Violations of the no-return, correction-size and stop-count properties
/// are reported as `InvariantViolated`.
pub fn run_aux<C: Classifier + ?Sized>(env: &Environment, classifier: &C, cfg: &AuxConfig, seed: u64) -> Result<AuxRun> {
    let d = env.dim();
    if cfg.dim() != d {
        return Err(Error::Domain("configuration and environment dimensions differ".into()));
    }
    let lad = &cfg.ladder;
    let eng = Engine { env, cfg, cls: classifier };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "aux"));
    let n1sq = lad.layer(1);
    let origin = Point::zero(d);
    let mut rec = Recorder {
        path: vec![origin],
        segments: Vec::new(),
        hits: BTreeMap::from([(0, 0)]),
        max_layer: 0,
        grid: n1sq,
        exit: cfg.exit_layer(),
        origin,
    };
    let forced: Vec<Point> = (1..=n1sq).map(|i| Point::axis(d, 0, i)).collect();
    let mut done = rec.push_segment(SegmentKind::Forced, 0, None, &forced, 0)?;

    let mut obls: Vec<Obligation> = Vec::new();
    for k in 2..=lad.iota {
        if let Some(b) = block_at(&origin, lad, k) {
            if !classifier.is_good(env, k, &b) {
                obls.push(Obligation { k, j: 1, x: origin });
            }
        }
    }

    let mut run = AuxRun {
        seed,
        path: Vec::new(),
        segments: Vec::new(),
        zeta: Vec::new(),
        zeta_prime: Vec::new(),
        x_prime: Vec::new(),
        x: Vec::new(),
        levels: Vec::new(),
        betas: Vec::new(),
        q_k: Vec::new(),
        stops: 0,
        stop_bound: 0.0,
        retries: 0,
        dropped_obligations: 0,
        layer_points: BTreeMap::new(),
        reached_exit: false,
        w: None,
    };
    let mut buf = Vec::new();
    let mut xp = *rec.path.last().unwrap();
    while !done {
        let zeta = rec.time();
        let x = if run.zeta.is_empty() {
            // beta_{1,1}: a draw from D(N_1) replaces the deterministic first layer.
            let z = sample_dist(&cfg.targets[0], &mut rng);
            let beta = z - xp;
            eng.check_beta(1, 1, &beta)?;
            run.betas.push(BetaEntry { k: 1, j: 1, beta, certified: true, table_size: 0 });
            eng.resolve(&mut obls, &z, &mut rng, &mut run.betas, &mut run.dropped_obligations)?
        } else {
            eng.resolve(&mut obls, &xp, &mut rng, &mut run.betas, &mut run.dropped_obligations)?
        };
        if xp.get(0).rem_euclid(n1sq) != 0 || x.get(0) != xp.get(0) {
            return Err(Error::InvariantViolated(format!("stop {xp:?} -> {x:?} is off the N_1^2 grid")));
        }
        let mut corr = staircase(&xp, &x);
        corr.push(x.step(0));
        corr.push(x);
        if rec.push_segment(SegmentKind::Correction, 0, None, &corr, 0)? {
            break;
        }
        let level = eng.level(&x);
        run.zeta.push(zeta);
        run.zeta_prime.push(rec.time());
        run.x_prime.push(xp);
        run.x.push(x);
        run.levels.push(level);
        eng.open(&x, level, lad.iota, &mut obls);
        let (block, retries) = eng.segment(&x, level, &mut rng, &mut buf)?;
        run.retries += retries;
        let kind = if level == 0 { SegmentKind::Forced } else { SegmentKind::Conditioned };
        done = rec.push_segment(kind, level, block, &buf[1..], retries)?;
        xp = *rec.path.last().unwrap();
    }
    run.reached_exit = true;

    let stop_layers: BTreeMap<i64, usize> = run.x_prime.iter().enumerate().map(|(n, p)| (p.get(0), n)).collect();
    for (&layer, &t) in &rec.hits {
        let p = match stop_layers.get(&layer) {
            Some(&n) if run.zeta[n] == t => run.x[n],
            _ => rec.path[t],
        };
        run.layer_points.insert(layer, p);
    }
    run.q_k = count_bad_blocks(&rec.path, lad, env, classifier);
    run.stops = run.zeta.len() as u64;
    run.stop_bound = stop_count_bound(cfg, &run.q_k);
    run.path = rec.path;
    run.segments = rec.segments;
    if run.stops as f64 > run.stop_bound {
        return Err(Error::InvariantViolated(format!("{} stops exceed the bound {}", run.stops, run.stop_bound)));
    }
    run.w = w_event(&run, cfg).ok();
    Ok(run)
}

/// L^{2 chi} (iota + 2 + sum Q_k).
pub fn stop_count_bound(cfg: &AuxConfig, q_k: &[u64]) -> f64 {
    let l = &cfg.ladder;
    l.l.powf(2.0 * l.chi) * (l.iota as f64 + 2.0 + q_k.iter().sum::<u64>() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadVisitReport {
    pub q_k: Vec<u64>,
    pub stops: u64,
    pub bound: f64,
    pub holds: bool,
}

/// Bad lattice blocks met by the run, per scale, and the stop-count bound.
pub fn bad_visit_counts<C: Classifier + ?Sized>(env: &Environment, classifier: &C, cfg: &AuxConfig, run: &AuxRun) -> BadVisitReport {
    let q_k = count_bad_blocks(&run.path, &cfg.ladder, env, classifier);
    let bound = stop_count_bound(cfg, &q_k);
    let stops = run.zeta.len() as u64;
    BadVisitReport { q_k, stops, bound, holds: stops as f64 <= bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aux::classifier::{AllGood, PlantedBad};
    use crate::aux::config::annealed_targets;
    use crate::aux::likelihood::likelihood_audit;
    use crate::env::{EnvironmentLaw, Kernel};
    use crate::geom::{build_ladder, choose_constants, ConstantsMode, ScaleLadder};
    use std::sync::Arc;

    fn small_ladder() -> ScaleLadder {
        let c = choose_constants(1.0, 2, 1.0, ConstantsMode::Relaxed { epsilon: Some(0.1), psi: 0.25, chi: 0.2 }).unwrap();
        build_ladder(200.0, &c).unwrap()
    }

    fn right_env() -> Environment {
        Environment::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap(), 0)
    }

    fn point_targets(l: &ScaleLadder) -> Vec<FiniteDist<f64>> {
        (1..=l.iota).map(|k| FiniteDist::point(Point::new(&[l.layer(k), 0]))).collect()
    }

    fn drifted() -> Arc<EnvironmentLaw> {
        Arc::new(
            EnvironmentLaw::mixture(
                0.05,
                vec![Kernel::new(&[0.8, 0.05, 0.075, 0.075]).unwrap(), Kernel::new(&[0.6, 0.1, 0.15, 0.15]).unwrap()],
                vec![0.5, 0.5],
            )
            .unwrap(),
        )
    }

    struct BadLayer(usize, i64);
    impl Classifier for BadLayer {
        fn is_good(&self, _: &Environment, k: usize, b: &BlockSpec) -> bool {
            !(k == self.0 && b.z.get(0) == self.1)
        }
    }

    #[test]
    fn ladder_shape() {
        let l = small_ladder();
        assert_eq!(l.sizes, vec![4, 12]);
    }

    #[test]
    fn deterministic_right_is_a_ray() {
        let l = small_ladder();
        let cfg = AuxConfig::new(l.clone(), point_targets(&l), vec![0.0], 100.0).unwrap();
        let run = run_aux(&right_env(), &AllGood, &cfg, 1).unwrap();
        assert!(run.path.iter().all(|p| p.get(1) == 0));
        assert!(run.betas.iter().all(|b| b.beta == Point::zero(2)));
        assert!(!run.returned_to_origin());
        assert_eq!(run.path.last().unwrap().get(0), cfg.exit_layer());
        // stops at 16, 32, ..., 144 then every 144 layers
        let layers: Vec<i64> = run.x_prime.iter().map(|p| p.get(0)).collect();
        assert_eq!(layers, vec![16, 32, 48, 64, 80, 96, 112, 128, 144, 288]);
        assert_eq!(run.levels, vec![1, 1, 1, 1, 1, 1, 1, 1, 2, 2]);
        // every stop is a block exit: the time before it is one step from the previous correction
        for n in 1..run.zeta.len() {
            let steps = run.zeta[n] - run.zeta_prime[n - 1];
            assert_eq!(steps as i64, run.x_prime[n].get(0) - run.x[n - 1].get(0));
        }
        assert_eq!(run.q_k, vec![0, 0]);
        assert!(run.stops as f64 <= run.stop_bound);
        // the +e1 bump of each correction needs a -e1 step, impossible for X here,
        // and with eta = 0 the floor is zero as well
        let audit = likelihood_audit(&right_env(), &run, &cfg).unwrap();
        assert_eq!(audit.ln_ratio, Some(f64::NEG_INFINITY));
        assert_eq!(audit.ln_floor, f64::NEG_INFINITY);
        assert_eq!(audit.holds, Some(true));
    }

    #[test]
    fn one_planted_block_is_counted() {
        let l = small_ladder();
        let cfg = AuxConfig::new(l.clone(), point_targets(&l), vec![0.0], 100.0).unwrap();
        let planted = PlantedBad::new(&l, [(1, Point::new(&[32, 0]))]).unwrap();
        let run = run_aux(&right_env(), &planted, &cfg, 1).unwrap();
        assert_eq!(run.q_k.iter().sum::<u64>(), 1);
        assert_eq!(run.levels[1], 0);
        assert!(run.betas.iter().any(|b| b.k == 1 && b.j == 3));
        let r = bad_visit_counts(&right_env(), &planted, &cfg, &run);
        assert!(r.holds);
        assert_eq!(r.q_k, run.q_k);
    }

    #[test]
    fn corrections_on_a_bad_layer() {
        let l = small_ladder();
        let law = drifted();
        let targets = annealed_targets(&law, &l, 4000, 3, 1_000_000).unwrap();
        let mut cfg = AuxConfig::new(l.clone(), targets, vec![0.0], 100.0).unwrap();
        cfg.n_table = 8;
        let env = Environment::from_arc(law, 11);
        let cls = BadLayer(1, 48);
        for seed in 0..20 {
            let run = run_aux(&env, &cls, &cfg, seed).unwrap();
            assert!(!run.returned_to_origin());
            let keys: Vec<(usize, u64)> = run.betas.iter().map(|b| (b.k, b.j)).collect();
            assert_eq!(keys, vec![(1, 1), (1, 4)]);
            for b in &run.betas {
                assert_eq!(b.beta.get(0), 0);
                assert!((b.beta.norm_inf() as f64) < cfg.beta_bound());
            }
            assert!(run.q_k[0] >= 1);
            assert!(run.stops as f64 <= run.stop_bound);
        }
    }

    #[test]
    fn scale_two_obligation_uses_nested_tables() {
        let l = small_ladder();
        let law = drifted();
        let targets = annealed_targets(&law, &l, 4000, 3, 1_000_000).unwrap();
        let mut cfg = AuxConfig::new(l.clone(), targets, vec![0.0], 100.0).unwrap();
        cfg.n_table = 6;
        let env = Environment::from_arc(law, 5);
        // every scale-2 block on layer 144 is bad, and so are scale-1 blocks on 160
        struct Both;
        impl Classifier for Both {
            fn is_good(&self, _: &Environment, k: usize, b: &BlockSpec) -> bool {
                !((k == 2 && b.z.get(0) == 144) || (k == 1 && b.z.get(0) == 160))
            }
        }
        for seed in 0..5 {
            let run = run_aux(&env, &Both, &cfg, seed).unwrap();
            assert!(run.betas.iter().any(|b| (b.k, b.j) == (2, 2)));
            assert!(run.betas.iter().any(|b| (b.k, b.j) == (1, 11)));
            let audit = likelihood_audit(&env, &run, &cfg).unwrap();
            assert_eq!(audit.holds, Some(true), "{audit:?}");
        }
    }

    #[test]
    fn conditioned_exit_cases() {
        let b = BlockSpec::axial(Point::zero(2), 4);
        let e = conditioned_front_exit(&right_env(), &b, &Point::zero(2), 1, 10, 1000).unwrap();
        assert_eq!(e.retries, 0);
        assert_eq!(*e.path.last().unwrap(), Point::new(&[16, 0]));
        let left = Environment::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[0.0, 1.0, 0.0, 0.0]).unwrap()).unwrap(), 0);
        assert_eq!(conditioned_front_exit(&left, &b, &Point::zero(2), 1, 50, 1000), Err(Error::ConditioningTooRare(50)));
        assert!(conditioned_front_exit(&right_env(), &b, &Point::new(&[10, 0]), 1, 10, 1000).is_err());
    }

    #[test]
    fn json_dump_round_trips() {
        let l = small_ladder();
        let cfg = AuxConfig::new(l.clone(), point_targets(&l), vec![0.0], 100.0).unwrap();
        let run = run_aux(&right_env(), &AllGood, &cfg, 1).unwrap();
        let s = serde_json::to_string(&run).unwrap();
        let back: AuxRun = serde_json::from_str(&s).unwrap();
        assert_eq!(back.zeta, run.zeta);
        assert_eq!(back.betas, run.betas);
        assert_eq!(back.layer_points, run.layer_points);
        assert_eq!(back.w, run.w);
    }
}
