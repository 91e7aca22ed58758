//! Integer lattice points of Z^d for d up to `MAX_DIM`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Neg, Sub};

pub const MAX_DIM: usize = 6;

/// A point of Z^d. Unused trailing coordinates are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    c: [i64; MAX_DIM],
}

impl Point {
    pub fn zero(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "dimension {d} out of range");
        Point { dim: d as u8, c: [0; MAX_DIM] }
    }

    pub fn new(coords: &[i64]) -> Self {
        let mut p = Point::zero(coords.len());
        p.c[..coords.len()].copy_from_slice(coords);
        p
    }

    /// Unit vector along direction index `dir` in the order +e1, -e1, +e2, -e2, ...
    pub fn unit(d: usize, dir: usize) -> Self {
        let mut p = Point::zero(d);
        p.c[dir / 2] = if dir % 2 == 0 { 1 } else { -1 };
        p
    }

    pub fn axis(d: usize, i: usize, v: i64) -> Self {
        let mut p = Point::zero(d);
        p.c[i] = v;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn get(&self, i: usize) -> i64 {
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: i64) {
        debug_assert!(i < self.dim());
        self.c[i] = v;
    }

    pub fn coords(&self) -> &[i64] {
        &self.c[..self.dim()]
    }

    /// Move one step along direction index `dir`.
    #[inline]
    pub fn step(&self, dir: usize) -> Self {
        let mut p = *self;
        if dir % 2 == 0 {
            p.c[dir / 2] += 1;
        } else {
            p.c[dir / 2] -= 1;
        }
        p
    }

    pub fn norm_inf(&self) -> i64 {
        self.coords().iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    pub fn norm1(&self) -> i64 {
        self.coords().iter().map(|v| v.abs()).sum()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.coords().iter().zip(v).map(|(a, b)| *a as f64 * b).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords().iter().map(|&v| v as f64).collect()
    }

    /// Direction index of the unit step `other - self`, if they are neighbours.
    pub fn dir_to(&self, other: &Point) -> Option<usize> {
        let diff = *other - *self;
        if diff.norm1() != 1 {
            return None;
        }
        let i = (0..self.dim()).find(|&i| diff.c[i] != 0)?;
        Some(2 * i + usize::from(diff.c[i] < 0))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(mut self, o: Point) -> Point {
        for i in 0..MAX_DIM {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(mut self, o: Point) -> Point {
        for i in 0..MAX_DIM {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(mut self) -> Point {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<i64> = Vec::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom("point dimension out of range"));
        }
        Ok(Point::new(&v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_steps_follow_direction_order() {
        let o = Point::zero(2);
        assert_eq!(o.step(0), Point::new(&[1, 0]));
        assert_eq!(o.step(1), Point::new(&[-1, 0]));
        assert_eq!(o.step(2), Point::new(&[0, 1]));
        assert_eq!(o.step(3), Point::new(&[0, -1]));
        for dir in 0..4 {
            assert_eq!(o.dir_to(&o.step(dir)), Some(dir));
        }
    }

    #[test]
    fn norms() {
        let p = Point::new(&[3, -4, 1]);
        assert_eq!(p.norm1(), 8);
        assert_eq!(p.norm_inf(), 4);
        assert_eq!((p - p), Point::zero(3));
    }
}
