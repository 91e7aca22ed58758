//! Local limit bounds for sums of i.i.d. lattice steps by characteristic
//! function quadrature, checked against exact convolution.

use super::dist::FiniteDist;
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::scalar::Real;
use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

/// Largest dense grid used for the exact convolution.
pub const MAX_EXACT_CELLS: usize = 4_000_000;
const QUAD_TOL: f64 = 1e-8;

/// A dense array of values on a box of Z^d, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrid<T> {
    pub origin: Point,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> DenseGrid<T> {
    fn zeros(origin: Point, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DenseGrid { origin, shape, data: vec![T::zero(); n] }
    }

    fn offset(&self, x: &Point) -> Option<usize> {
        let mut idx = 0usize;
        for (i, &s) in self.shape.iter().enumerate() {
            let v = x.get(i) - self.origin.get(i);
            if v < 0 || v as usize >= s {
                return None;
            }
            idx = idx * s + v as usize;
        }
        Some(idx)
    }

    fn point_of(&self, mut idx: usize) -> Point {
        let mut p = self.origin;
        for i in (0..self.shape.len()).rev() {
            p.set(i, self.origin.get(i) + (idx % self.shape[i]) as i64);
            idx /= self.shape[i];
        }
        p
    }

    pub fn get(&self, x: &Point) -> T {
        self.offset(x).map(|i| self.data[i]).unwrap_or_else(T::zero)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }

    pub fn to_dist(&self) -> FiniteDist<T> {
        FiniteDist::from_pairs(
            self.origin.dim(),
            self.data.iter().enumerate().filter(|(_, v)| **v != T::zero()).map(|(i, v)| (self.point_of(i), *v)),
        )
    }

    /// Largest first, pure second and mixed second differences.
    pub fn differences(&self) -> (T, T, T) {
        let d = self.shape.len();
        let (mut f, mut s, mut m) = (T::zero(), T::zero(), T::zero());
        let two = T::of(2.0);
        for idx in 0..self.data.len() {
            let x = self.point_of(idx);
            let w = self.data[idx];
            for i in 0..d {
                let up = x.step(2 * i);
                let dn = x.step(2 * i + 1);
                f = f.max((self.get(&up) - w).abs());
                s = s.max((self.get(&up) - two * w + self.get(&dn)).abs());
                for j in i + 1..d {
                    let b = x.step(2 * j);
                    m = m.max((self.get(&up.step(2 * j)) - self.get(&up) - self.get(&b) + w).abs());
                }
            }
        }
        (f, s, m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LltBounds {
    pub sup: f64,
    pub first: f64,
    pub second: f64,
    pub mixed: f64,
}

#[derive(Clone, Debug)]
pub struct LltReport<T: Real> {
    pub n: usize,
    pub bounds: LltBounds,
    /// Difference between the M and 2M quadratures.
    pub quadrature_error: f64,
    /// P(S_n = x) from the inverse transform.
    pub quadrature: DenseGrid<T>,
    pub exact: Option<DenseGrid<T>>,
    pub max_abs_diff: Option<f64>,
}

fn bounding_box<T: Real>(step: &FiniteDist<T>) -> (Point, Point) {
    let d = step.dim();
    let mut lo = *step.support().next().expect("non-empty step law");
    let mut hi = lo;
    for x in step.support() {
        for i in 0..d {
            lo.set(i, lo.get(i).min(x.get(i)));
            hi.set(i, hi.get(i).max(x.get(i)));
        }
    }
    (lo, hi)
}

fn fft_nd<T: FftNum>(data: &mut [Complex<T>], shape: &[usize], inverse: bool, planner: &mut FftPlanner<T>) {
    let total: usize = shape.iter().product();
    let mut stride = 1;
    for axis in (0..shape.len()).rev() {
        let len = shape[axis];
        let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let mut line = vec![Complex::new(T::zero(), T::zero()); len];
        let block = stride * len;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                for k in 0..len {
                    line[k] = data[outer + inner + k * stride];
                }
                fft.process(&mut line);
                for k in 0..len {
                    data[outer + inner + k * stride] = line[k];
                }
            }
        }
        stride *= len;
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(g: usize) -> Vec<(f64, f64)> {
    (0..g)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (g as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=g {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = g as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

const GL_ORDER: usize = 8;
const MAX_QUAD_POINTS: usize = 1 << 24;

/// The four Fourier bound integrals over [0, 2pi]^d with `panels` panels per axis.
fn bound_integrals(step: &[(Vec<f64>, f64)], d: usize, n: usize, panels: usize) -> LltBounds {
    use rayon::prelude::*;
    let gl = gauss_legendre(GL_ORDER);
    let h = 2.0 * std::f64::consts::PI / panels as f64;
    let axis: Vec<(f64, f64, f64)> = (0..panels)
        .flat_map(|p| gl.iter().map(move |&(x, w)| (p, x, w)))
        .map(|(p, x, w)| {
            let t = h * (p as f64 + (1.0 + x) / 2.0);
            (t, w * h / 2.0, (t / 2.0).sin())
        })
        .collect();
    let m = axis.len();
    let total = m.pow(d as u32);
    // fixed chunks summed in order keep the result independent of the thread count
    const CHUNK: usize = 4096;
    let width = 1 + 2 * d + d * d;
    let parts: Vec<Vec<f64>> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for mut idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut t = [0.0; crate::lattice::MAX_DIM];
                let mut s = [0.0; crate::lattice::MAX_DIM];
                let mut w = 1.0;
                for i in (0..d).rev() {
                    let (ti, wi, si) = axis[idx % m];
                    idx /= m;
                    t[i] = ti;
                    s[i] = si;
                    w *= wi;
                }
                let (mut re, mut im) = (0.0, 0.0);
                for (x, p) in step {
                    let a: f64 = x.iter().zip(&t).map(|(xi, ti)| xi * ti).sum();
                    re += p * a.cos();
                    im += p * a.sin();
                }
                let a = w * (re * re + im * im).sqrt().powi(n as i32);
                acc[0] += a;
                for i in 0..d {
                    acc[1 + i] += a * 2.0 * s[i];
                    acc[1 + d + i] += a * 4.0 * s[i] * s[i];
                    for j in i + 1..d {
                        acc[1 + 2 * d + i * d + j] += a * 4.0 * s[i] * s[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut sums = vec![0.0; width];
    for p in &parts {
        for (a, b) in sums.iter_mut().zip(p) {
            *a += b;
        }
    }
    let norm = (2.0 * std::f64::consts::PI).powi(d as i32);
    let max_of = |r: std::ops::Range<usize>| sums[r].iter().cloned().fold(0.0, f64::max) / norm;
    LltBounds {
        sup: sums[0] / norm,
        first: max_of(1..1 + d),
        second: max_of(1 + d..1 + 2 * d),
        mixed: max_of(1 + 2 * d..1 + 2 * d + d * d),
    }
}

fn bound_gap(a: &LltBounds, b: &LltBounds) -> f64 {
    [(a.sup - b.sup).abs(), (a.first - b.first).abs(), (a.second - b.second).abs(), (a.mixed - b.mixed).abs()]
        .into_iter()
        .fold(0.0, f64::max)
}

fn quadrature<T: Real + FftNum>(step: &FiniteDist<T>, n: usize, lo: Point, width: &[usize], shape: &[usize]) -> DenseGrid<T> {
    let d = step.dim();
    let total: usize = shape.iter().product();
    let mut buf = vec![Complex::new(T::zero(), T::zero()); total];
    for (x, w) in step.iter() {
        let mut idx = 0;
        for i in 0..d {
            idx = idx * shape[i] + (x.get(i) - lo.get(i)) as usize;
        }
        buf[idx].re = buf[idx].re + *w;
    }
    let mut planner = FftPlanner::new();
    fft_nd(&mut buf, shape, false, &mut planner);

    for c in buf.iter_mut() {
        *c = c.powu(n as u32);
    }
    fft_nd(&mut buf, shape, true, &mut planner);
    let origin = {
        let mut o = lo;
        for i in 0..d {
            o.set(i, lo.get(i) * n as i64);
        }
        o
    };
    let mut grid = DenseGrid::zeros(origin, width.to_vec());
    let scale = T::of(total as f64);
    for idx in 0..grid.data.len() {
        let mut r = idx;
        let mut flat = 0;
        let mut mult = 1;
        for i in (0..d).rev() {
            let k = r % width[i];
            r /= width[i];
            flat += k * mult;
            mult *= shape[i];
        }
        grid.data[idx] = buf[flat].re / scale;
    }
    grid
}

/// Exact law of S_n on a dense grid by n successive convolutions with the step.
pub fn exact_convolution<T: Real>(step: &FiniteDist<T>, n: usize) -> Result<DenseGrid<T>> {
    let (lo, hi) = bounding_box(step);
    let d = step.dim();
    let width: Vec<usize> = (0..d).map(|i| n * (hi.get(i) - lo.get(i)) as usize + 1).collect();
    let cells: usize = width.iter().product();
    if cells > MAX_EXACT_CELLS {
        return Err(Error::Domain(format!("exact convolution needs {cells} cells")));
    }
    let mut origin = lo;
    for i in 0..d {
        origin.set(i, 0);
    }
    let mut cur = DenseGrid::zeros(origin, width.clone());
    cur.data[0] = T::one();
    let offsets: Vec<(usize, T)> = step
        .iter()
        .map(|(x, w)| {
            let mut off = 0;
            for i in 0..d {
                off = off * width[i] + (x.get(i) - lo.get(i)) as usize;
            }
            (off, *w)
        })
        .collect();
    for _ in 0..n {
        let mut next = vec![T::zero(); cells];
        for (idx, v) in cur.data.iter().enumerate() {
            if *v == T::zero() {
                continue;
            }
            for &(off, w) in &offsets {
                if idx + off < cells {
                    next[idx + off] = next[idx + off] + *v * w;
                }
            }
        }
        cur.data = next;
    }
    for i in 0..d {
        cur.origin.set(i, lo.get(i) * n as i64);
    }
    Ok(cur)
}

/// Law of S_n by discrete Fourier inversion, with the gap between two
/// grid sizes as error estimate.
pub fn fourier_law<T: Real + FftNum>(step: &FiniteDist<T>, n: usize) -> Result<(DenseGrid<T>, f64)> {
    if n == 0 || step.is_empty() {
        return Err(Error::Domain("need n >= 1 and a non-empty step law".into()));
    }
    let (lo, hi) = bounding_box(step);
    let d = step.dim();
    let width: Vec<usize> = (0..d).map(|i| n * (hi.get(i) - lo.get(i)) as usize + 1).collect();
    let shape: Vec<usize> = width.iter().map(|w| w.next_power_of_two().max(2)).collect();
    let shape2: Vec<usize> = shape.iter().map(|s| 2 * s).collect();
    let q1 = quadrature(step, n, lo, &width, &shape);
    let q2 = quadrature(step, n, lo, &width, &shape2);
    let err = q1.data.iter().zip(&q2.data).map(|(a, b)| (a.f64() - b.f64()).abs()).fold(0.0, f64::max);
    let tol = QUAD_TOL.max(100.0 * T::epsilon().f64());
    if !(err <= tol) {
        return Err(Error::QuadratureFailure(err));
    }
    Ok((q2, err))
}

pub fn llt_bounds<T: Real + FftNum>(step: &FiniteDist<T>, n: usize) -> Result<LltReport<T>> {
    let (q2, mut err) = fourier_law(step, n)?;
    let d = step.dim();

    let pts: Vec<(Vec<f64>, f64)> = step.iter().map(|(x, w)| (x.to_f64(), w.f64())).collect();
    let mut panels = 8.max(((n as f64).sqrt() * 4.0).ceil() as usize);
    let mut prev = bound_integrals(&pts, d, n, panels);
    let bounds = loop {
        panels *= 2;
        if (panels * GL_ORDER).pow(d as u32) > MAX_QUAD_POINTS {
            return Err(Error::QuadratureFailure(err));
        }
        let next = bound_integrals(&pts, d, n, panels);
        let gap = bound_gap(&prev, &next);
        prev = next;
        if gap <= QUAD_TOL {
            err = err.max(gap);
            break prev;
        }
        err = gap;
    };
    let exact = exact_convolution(step, n).ok();
    let max_abs_diff = exact
        .as_ref()
        .map(|e| e.data.iter().zip(&q2.data).map(|(a, b)| (a.f64() - b.f64()).abs()).fold(0.0, f64::max));
    Ok(LltReport { n, bounds, quadrature_error: err, quadrature: q2, exact, max_abs_diff })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srw1() -> FiniteDist<f64> {
        FiniteDist::from_pairs(1, [(Point::new(&[1]), 0.5), (Point::new(&[-1]), 0.5)])
    }

    #[test]
    fn binomial_center() {
        let r = llt_bounds(&srw1(), 10).unwrap();
        assert!((r.quadrature.get(&Point::new(&[0])) - 0.24609375).abs() < 1e-10);
        assert!(r.max_abs_diff.unwrap() < 1e-12);
        // for even n the bound is attained at the origin
        assert!((r.bounds.sup - 0.24609375).abs() < 1e-9);
    }

    #[test]
    fn single_step_sup_bound() {
        let step: FiniteDist<f64> = FiniteDist::from_pairs(1, [(Point::new(&[0]), 0.7), (Point::new(&[1]), 0.3)]);
        let r = llt_bounds(&step, 1).unwrap();
        assert!((r.quadrature.max() - 0.7).abs() < 1e-12);
        assert!(r.bounds.sup >= 0.7 - 1e-12);
    }

    #[test]
    fn fourier_law_for_one_step_in_the_plane() {
        let step: FiniteDist<f64> = FiniteDist::from_pairs(2, (0..4).map(|i| (Point::zero(2).step(i), 0.25)));
        let (g, _) = fourier_law(&step, 1).unwrap();
        assert!((g.get(&Point::new(&[1, 0])) - 0.25).abs() < 1e-15);
        assert!(g.get(&Point::zero(2)).abs() < 1e-15);
    }

    #[test]
    fn single_precision_runs() {
        let step: FiniteDist<f32> = srw1().cast();
        let r = llt_bounds(&step, 4).unwrap();
        assert!((r.quadrature.get(&Point::new(&[0])) - 0.375).abs() < 1e-6);
    }
}
