use crate::env::Environment;
use crate::error::{Error, Result};
use crate::exitstats::classify::{classify_block, BlockClass, ClassifyOptions};
use crate::geom::{lattice_cover, lattice_spacing, on_lattice, BlockSpec, ScaleLadder};
use crate::lattice::Point;
use crate::rng::hash_words;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

/// Good/bad labels for lattice blocks of the ladder. Scale indices start at 1.
pub trait Classifier: Sync {
    fn is_good(&self, env: &Environment, k: usize, block: &BlockSpec) -> bool;

    /// All bad blocks of scale `k` when the classifier knows them up front.
    fn bad_blocks(&self, _k: usize, _n: u64) -> Option<Vec<BlockSpec>> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AllGood;

impl Classifier for AllGood {
    fn is_good(&self, _: &Environment, _: usize, _: &BlockSpec) -> bool {
        true
    }

    fn bad_blocks(&self, _: usize, _: u64) -> Option<Vec<BlockSpec>> {
        Some(Vec::new())
    }
}

/// Every block good except an explicit list of (scale, centre).
#[derive(Clone, Debug, Default)]
pub struct PlantedBad {
    bad: HashSet<(usize, Point)>,
}

impl PlantedBad {
    pub fn new(ladder: &ScaleLadder, bad: impl IntoIterator<Item = (usize, Point)>) -> Result<Self> {
        let bad: HashSet<_> = bad.into_iter().collect();
        for (k, z) in &bad {
            if *k == 0 || *k > ladder.iota {
                return Err(Error::Domain(format!("scale {k} outside 1..={}", ladder.iota)));
            }
            if !on_lattice(z, ladder.size(*k)) {
                return Err(Error::Domain(format!("{z:?} is not on the scale-{k} lattice")));
            }
        }
        Ok(PlantedBad { bad })
    }
}

impl Classifier for PlantedBad {
    fn is_good(&self, _: &Environment, k: usize, block: &BlockSpec) -> bool {
        !self.bad.contains(&(k, block.z))
    }

    fn bad_blocks(&self, k: usize, n: u64) -> Option<Vec<BlockSpec>> {
        let mut zs: Vec<Point> = self.bad.iter().filter(|(s, _)| *s == k).map(|(_, z)| *z).collect();
        zs.sort();
        Some(zs.into_iter().map(|z| BlockSpec::axial(z, n)).collect())
    }
}

/// Classifies blocks by Monte Carlo on first use and caches the label. Each
/// block gets a seed derived from its own coordinates, so labels do not
/// depend on the order in which blocks are first asked about.
pub struct EmpiricalClassifier {
    pub theta_cube: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub opts: ClassifyOptions,
    cache: Mutex<HashMap<(usize, Point), bool>>,
}

impl EmpiricalClassifier {
    pub fn new(theta_cube: f64, n_samples: usize, seed: u64, opts: ClassifyOptions) -> Self {
        EmpiricalClassifier { theta_cube, n_samples, seed, opts, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("classifier cache").len()
    }
}

impl Classifier for EmpiricalClassifier {
    fn is_good(&self, env: &Environment, k: usize, block: &BlockSpec) -> bool {
        if let Some(v) = self.cache.lock().expect("classifier cache").get(&(k, block.z)) {
            return *v;
        }
        let mut words = vec![k as u64];
        words.extend(block.z.coords().iter().map(|c| *c as u64));
        let s = hash_words(self.seed, &words);
        let good = classify_block(env, block, self.theta_cube, self.n_samples, s, &self.opts).class == BlockClass::Good;
        self.cache.lock().expect("classifier cache").insert((k, block.z), good);
        good
    }
}

/// The block P^(k)(x), defined when the first coordinate of x is on the N_k^2 grid.
pub fn block_at(x: &Point, ladder: &ScaleLadder, k: usize) -> Option<BlockSpec> {
    let n = ladder.size(k);
    lattice_cover(x, n).ok().map(|z| BlockSpec::axial(z, n))
}

/// k(x): the largest scale whose grid holds x and whose covering block is good, 0 if none.
pub fn level_of<C: Classifier + ?Sized>(x: &Point, ladder: &ScaleLadder, env: &Environment, classifier: &C) -> usize {
    (1..=ladder.iota)
        .rev()
        .find(|&k| block_at(x, ladder, k).is_some_and(|b| classifier.is_good(env, k, &b)))
        .unwrap_or(0)
}

/// Centres of scale-`n` lattice blocks that contain `x`.
fn covering_centres(x: &Point, n: u64) -> Vec<Point> {
    let n2 = (n * n) as i64;
    let s = lattice_spacing(n);
    let probe = BlockSpec::axial(Point::zero(x.dim()), n);
    let w = probe.width();
    let lo1 = x.get(0).div_euclid(n2) * n2;
    let firsts: Vec<i64> = if lo1 == x.get(0) { vec![lo1] } else { vec![lo1, lo1 + n2] };
    let mut out = Vec::new();
    for z1 in firsts {
        let mut zs = vec![{
            let mut z = Point::zero(x.dim());
            z.set(0, z1);
            z
        }];
        for i in 1..x.dim() {
            let v = x.get(i) as f64;
            let a = ((v - w) / s as f64).floor() as i64;
            let b = ((v + w) / s as f64).ceil() as i64;
            let mut next = Vec::new();
            for z in &zs {
                for m in a..=b {
                    let mut q = *z;
                    q.set(i, m * s);
                    next.push(q);
                }
            }
            zs = next;
        }
        out.extend(zs.into_iter().filter(|z| BlockSpec::axial(*z, n).contains(x)));
    }
    out
}

/// Q_k: the number of bad scale-k lattice blocks met by the visited set.
pub fn count_bad_blocks<C: Classifier + ?Sized>(path: &[Point], ladder: &ScaleLadder, env: &Environment, classifier: &C) -> Vec<u64> {
    let mut visited: Option<HashSet<Point>> = None;
    (1..=ladder.iota)
        .map(|k| {
            let n = ladder.size(k);
            match classifier.bad_blocks(k, n) {
                Some(blocks) => blocks.iter().filter(|b| path.iter().any(|x| b.contains(x))).count() as u64,
                None => {
                    let visited = visited.get_or_insert_with(|| path.iter().copied().collect());
                    let centres: BTreeSet<Point> = visited.iter().flat_map(|x| covering_centres(x, n)).collect();
                    centres.into_iter().filter(|z| !classifier.is_good(env, k, &BlockSpec::axial(*z, n))).count() as u64
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentLaw, Kernel};
    use crate::geom::{build_ladder, choose_constants, ConstantsMode};

    fn ladder() -> ScaleLadder {
        let c = choose_constants(1.0, 2, 1.0, ConstantsMode::Relaxed { epsilon: Some(0.1), psi: 0.25, chi: 0.2 }).unwrap();
        build_ladder(1e4, &c).unwrap()
    }

    fn env() -> Environment {
        Environment::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap(), 0)
    }

    #[test]
    fn levels() {
        let lad = ladder();
        let e = env();
        assert_eq!(level_of(&Point::new(&[37, 0]), &lad, &e, &AllGood), 0);
        assert_eq!(level_of(&Point::new(&[4900, 3]), &lad, &e, &AllGood), 2);
        assert_eq!(level_of(&Point::new(&[200, 3]), &lad, &e, &AllGood), 1);
        let planted = PlantedBad::new(&lad, [(2, Point::new(&[4900, 0]))]).unwrap();
        assert_eq!(level_of(&Point::new(&[4900, 3]), &lad, &e, &planted), 1);
        let both = PlantedBad::new(&lad, [(2, Point::new(&[4900, 0])), (1, Point::new(&[4900, 3]))]).unwrap();
        assert_eq!(level_of(&Point::new(&[4900, 3]), &lad, &e, &both), 0);
        assert!(PlantedBad::new(&lad, [(1, Point::new(&[50, 0]))]).is_err());
    }

    #[test]
    fn covering_centres_contain_the_point() {
        for x in [Point::new(&[130, 7]), Point::new(&[200, -4]), Point::new(&[5, 0])] {
            let cs = covering_centres(&x, 10);
            assert!(!cs.is_empty());
            let brute: Vec<Point> = (-2..=4)
                .flat_map(|a| (-20..=20).map(move |b| Point::new(&[a * 100, b * lattice_spacing(10)])))
                .filter(|z| BlockSpec::axial(*z, 10).contains(&x))
                .collect();
            let mut cs = cs;
            cs.sort();
            assert_eq!(cs, brute);
        }
    }

    #[test]
    fn planted_counts_agree_with_enumeration() {
        struct Opaque(PlantedBad);
        impl Classifier for Opaque {
            fn is_good(&self, e: &Environment, k: usize, b: &BlockSpec) -> bool {
                self.0.is_good(e, k, b)
            }
        }
        let lad = ladder();
        let p = PlantedBad::new(&lad, [(1, Point::new(&[100, 0])), (1, Point::new(&[300, 0]))]).unwrap();
        let path: Vec<Point> = (0..=250).map(|i| Point::new(&[i, 0])).collect();
        let e = env();
        assert_eq!(count_bad_blocks(&path, &lad, &e, &p), vec![2, 0]);
        assert_eq!(count_bad_blocks(&path, &lad, &e, &Opaque(p)), vec![2, 0]);
        assert_eq!(count_bad_blocks(&[], &lad, &e, &AllGood), vec![0, 0]);
    }
}
