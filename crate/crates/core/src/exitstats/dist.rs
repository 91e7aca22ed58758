//! Finitely supported (sub-)probability measures on Z^d.

use crate::lattice::Point;
use crate::scalar::Real;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDist<T: Real> {
    dim: usize,
    mass: BTreeMap<Point, T>,
}

impl<T: Real> FiniteDist<T> {
    pub fn empty(dim: usize) -> Self {
        FiniteDist { dim, mass: BTreeMap::new() }
    }

    pub fn point(x: Point) -> Self {
        let mut d = Self::empty(x.dim());
        d.add(x, T::one());
        d
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (Point, T)>) -> Self {
        let mut d = Self::empty(dim);
        for (x, w) in pairs {
            d.add(x, w);
        }
        d
    }

    /// Normalised empirical law of integer counts.
    pub fn from_counts<'a>(dim: usize, counts: impl IntoIterator<Item = (&'a Point, &'a u64)>) -> Self {
        let mut d = Self::empty(dim);
        for (x, c) in counts {
            d.add(*x, T::of(*c as f64));
        }
        d.normalized()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(&mut self, x: Point, w: T) {
        if w == T::zero() {
            return;
        }
        let e = self.mass.entry(x).or_insert_with(T::zero);
        *e = *e + w;
    }

    pub fn prob(&self, x: &Point) -> T {
        self.mass.get(x).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &T)> {
        self.mass.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Point> {
        self.mass.keys()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> T {
        self.mass.values().copied().sum()
    }

    pub fn normalized(&self) -> Self {
        let t = self.total();
        if t == T::zero() {
            return self.clone();
        }
        FiniteDist { dim: self.dim, mass: self.mass.iter().map(|(x, w)| (*x, *w / t)).collect() }
    }

    pub fn filter(&self, keep: impl Fn(&Point) -> bool) -> Self {
        FiniteDist { dim: self.dim, mass: self.mass.iter().filter(|(x, _)| keep(x)).map(|(x, w)| (*x, *w)).collect() }
    }

    pub fn shifted(&self, v: Point) -> Self {
        FiniteDist { dim: self.dim, mass: self.mass.iter().map(|(x, w)| (*x + v, *w)).collect() }
    }

    pub fn mean(&self) -> Vec<T> {
        let t = self.total();
        let mut m = vec![T::zero(); self.dim];
        for (x, w) in &self.mass {
            for (i, mi) in m.iter_mut().enumerate() {
                *mi = *mi + *w * T::of(x.get(i) as f64);
            }
        }
        m.iter().map(|v| *v / t).collect()
    }

    pub fn covariance(&self) -> Vec<Vec<T>> {
        let t = self.total();
        let m = self.mean();
        let d = self.dim;
        let mut c = vec![vec![T::zero(); d]; d];
        for (x, w) in &self.mass {
            for i in 0..d {
                let a = T::of(x.get(i) as f64) - m[i];
                for j in 0..d {
                    let b = T::of(x.get(j) as f64) - m[j];
                    c[i][j] = c[i][j] + *w * a * b;
                }
            }
        }
        c.iter().map(|r| r.iter().map(|v| *v / t).collect()).collect()
    }

    pub fn trace_var(&self) -> T {
        let c = self.covariance();
        (0..self.dim).map(|i| c[i][i]).sum()
    }

    /// Total variation distance, half the l1 distance.
    pub fn tv(&self, other: &Self) -> T {
        let mut s = T::zero();
        for (x, w) in &self.mass {
            s = s + (*w - other.prob(x)).abs();
        }
        for (x, w) in &other.mass {
            if !self.mass.contains_key(x) {
                s = s + w.abs();
            }
        }
        s / T::of(2.0)
    }

    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = Self::empty(self.dim);
        for (x, a) in &self.mass {
            for (y, b) in &other.mass {
                out.add(*x + *y, *a * *b);
            }
        }
        out
    }

    /// n-fold convolution power by repeated squaring.
    pub fn convolve_power(&self, n: usize) -> Self {
        let mut result = Self::point(Point::zero(self.dim));
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = result.convolve(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.convolve(&base);
            }
        }
        result
    }

    pub fn max_prob(&self) -> T {
        self.mass.values().copied().fold(T::zero(), T::max)
    }

    pub fn cast<U: Real>(&self) -> FiniteDist<U> {
        FiniteDist { dim: self.dim, mass: self.mass.iter().map(|(x, w)| (*x, U::of(w.f64()))).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(x: i64) -> Point {
        Point::new(&[x])
    }

    #[test]
    fn moments_and_tv() {
        let d: FiniteDist<f64> = FiniteDist::from_pairs(1, [(p1(-1), 0.5), (p1(1), 0.5)]);
        assert_eq!(d.mean(), vec![0.0]);
        assert_eq!(d.trace_var(), 1.0);
        let e = d.shifted(p1(2));
        assert_eq!(d.tv(&e), 0.5);
        assert_eq!(d.tv(&d), 0.0);
    }

    #[test]
    fn convolution_power_is_binomial() {
        let step: FiniteDist<f64> = FiniteDist::from_pairs(1, [(p1(-1), 0.5), (p1(1), 0.5)]);
        let s = step.convolve_power(10);
        assert!((s.prob(&p1(0)) - 252.0 / 1024.0).abs() < 1e-15);
        assert!((s.total() - 1.0).abs() < 1e-14);
        let s32: FiniteDist<f32> = step.cast::<f32>().convolve_power(10);
        assert!((s32.prob(&p1(0)) - 0.24609375).abs() < 1e-6);
    }
}
