//! Dense vectors and the clip operator.
//!
//! Every [`RealVector`] holds at least one component and never stores NaN or
//! infinity. The slice-level helpers (`dot`, `l2_norm`, `clip_into`,
//! `clip_score`) are what the hot loops in the diagnostics and optimizers
//! use; the methods on `RealVector` call the same helpers, so both paths
//! round identically.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("vector must have dim >= 1".into()));
        }
        if let Some(i) = components.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "component {i} is not finite ({})",
                components[i]
            )));
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector must have dim >= 1");
        Self(vec![0.0; dim])
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    /// Wraps components produced internally from finite arithmetic.
    /// Overflow to infinity is still rejected.
    pub(crate) fn from_finite(components: Vec<f64>) -> Result<Self> {
        Self::new(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn norm_squared(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn inner(&self, other: &RealVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn add(&self, other: &RealVector) -> Result<RealVector> {
        check_dim(self.dim(), other.dim())?;
        Self::from_finite(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &RealVector) -> Result<RealVector> {
        check_dim(self.dim(), other.dim())?;
        Self::from_finite(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> Result<RealVector> {
        Self::from_finite(self.0.iter().map(|a| a * factor).collect())
    }

    pub fn neg(&self) -> RealVector {
        // -0.0 is normalised so that negation never creates a distinct atom key.
        RealVector(self.0.iter().map(|&a| if a == 0.0 { 0.0 } else { -a }).collect())
    }

    pub fn distance(&self, other: &RealVector) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    /// Arithmetic mean of a non-empty list of equal-dimension vectors.
    pub fn mean(vectors: &[RealVector]) -> Result<RealVector> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidInput("mean of an empty list".into()))?;
        let dim = first.dim();
        let mut acc = vec![0.0; dim];
        for v in vectors {
            check_dim(dim, v.dim())?;
            for (a, x) in acc.iter_mut().zip(&v.0) {
                *a += x;
            }
        }
        let n = vectors.len() as f64;
        Self::from_finite(acc.into_iter().map(|a| a / n).collect())
    }
}

impl TryFrom<Vec<f64>> for RealVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<RealVector> for Vec<f64> {
    fn from(value: RealVector) -> Self {
        value.0
    }
}

impl Index<usize> for RealVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl fmt::Display for RealVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Positive clipping norm. `f64::INFINITY` is allowed and disables clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ClipThreshold(f64);

impl ClipThreshold {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::InvalidInput(format!("clip threshold must be > 0, got {c}")))
        }
    }

    pub const fn unbounded() -> Self {
        Self(f64::INFINITY)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ClipThreshold {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ClipThreshold> for f64 {
    fn from(value: ClipThreshold) -> Self {
        value.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm. The plain sum of squares is used unless it overflows or
/// underflows, in which case a scaled accumulation takes over.
pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    let sq = dot(v, v);
    if sq.is_finite() && sq > 1e-280 {
        return sq.sqrt();
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

/// Writes `clip(g, c)` into `out`. The result is guaranteed to have
/// `l2_norm(out) <= c` in floating point, not just in exact arithmetic.
pub(crate) fn clip_into(g: &[f64], c: f64, out: &mut [f64]) {
    debug_assert_eq!(g.len(), out.len());
    let n = l2_norm(g);
    if n <= c {
        out.copy_from_slice(g);
        return;
    }
    // Normalizing first keeps one-dimensional results exactly at +-c.
    for (o, x) in out.iter_mut().zip(g) {
        *o = x / n * c;
    }
    if l2_norm(out) <= c {
        return;
    }
    let mut factor = c / n;
    loop {
        for (o, x) in out.iter_mut().zip(g) {
            *o = x * factor;
        }
        if l2_norm(out) <= c {
            return;
        }
        factor = factor.next_down();
    }
}

/// `<v, clip(v + xi, c)>` using `scratch` as workspace.
#[inline]
pub(crate) fn clip_score(v: &[f64], xi: &[f64], c: f64, scratch: &mut Vec<f64>) -> f64 {
    let d = v.len();
    scratch.resize(2 * d, 0.0);
    let (g, out) = scratch.split_at_mut(d);
    for ((gj, a), b) in g.iter_mut().zip(v).zip(xi) {
        *gj = a + b;
    }
    clip_into(g, c, out);
    dot(v, out)
}

/// Clip operator: `g * min(1, c / |g|)`, with `clip(0, c) = 0`.
/// At `|g| == c` the vector is returned unchanged.
pub fn clip(g: &RealVector, c: ClipThreshold) -> RealVector {
    let mut out = vec![0.0; g.dim()];
    clip_into(g.as_slice(), c.value(), &mut out);
    RealVector(out)
}

pub fn norm(v: &RealVector) -> f64 {
    v.norm()
}

pub fn inner(a: &RealVector, b: &RealVector) -> Result<f64> {
    a.inner(b)
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &RealVector, b: &RealVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    Ok((dot(a.as_slice(), b.as_slice()) / (na * nb)).clamp(-1.0, 1.0))
}
