//! Symmetry probes on per-sample gradient ensembles: random 2-D projections,
//! a histogram symmetry score, cosine histograms and the four norm /
//! inner-product histograms used to eyeball the probability term.

use std::io::{self, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::SeededStream;
use crate::vector::{clip_score, cosine, dot, l2_norm, ClipThreshold, RealVector};

pub const DEFAULT_BINS: usize = 50;

const PROBE_STREAM: u64 = 0x7072_6f6a;

/// A `d x 2` matrix with i.i.d. standard normal entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionProbe {
    pub seed: u64,
    /// Row `j` holds the two entries multiplying coordinate `j`.
    pub matrix: Vec<[f64; 2]>,
}

impl ProjectionProbe {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("probe dimension must be >= 1".into()));
        }
        let mut rng = SeededStream::new(seed, PROBE_STREAM).draw(0);
        let matrix = (0..dim)
            .map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        Ok(Self { seed, matrix })
    }

    pub fn from_matrix(matrix: Vec<[f64; 2]>, seed: u64) -> Result<Self> {
        if matrix.is_empty() || matrix.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("probe matrix must be non-empty and finite".into()));
        }
        Ok(Self { seed, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn project(&self, g: &RealVector) -> Result<(f64, f64)> {
        check_dim(self.dim(), g.dim())?;
        let mut out = (0.0, 0.0);
        for (x, row) in g.as_slice().iter().zip(&self.matrix) {
            out.0 += x * row[0];
            out.1 += x * row[1];
        }
        Ok(out)
    }
}

/// `g^T M` for every gradient.
pub fn project2d(gradients: &[RealVector], probe: &ProjectionProbe) -> Result<Vec<(f64, f64)>> {
    gradients.iter().map(|g| probe.project(g)).collect()
}

/// Writes an `x,y` scatter CSV.
pub fn write_scatter_csv<W: Write>(points: &[(f64, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "x,y")?;
    for (x, y) in points {
        writeln!(out, "{x},{y}")?;
    }
    Ok(())
}

/// Point the cloud is reflected through when scoring symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reflection {
    #[default]
    Origin,
    Mean,
}

/// Total-variation distance between the `bins x bins` histogram of the
/// points and that of their reflection. The grid is the square
/// `[-R, R)^2` around the reflection point, with `R` 5% beyond the largest
/// coordinate, so reflecting never moves mass off the grid.
pub fn symmetry_score(points: &[(f64, f64)], bins: usize, reflect: Reflection) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("symmetry score needs at least 2 points".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidInput("bin count must be >= 1".into()));
    }
    let n = points.len() as f64;
    let center = match reflect {
        Reflection::Origin => (0.0, 0.0),
        Reflection::Mean => (
            points.iter().map(|p| p.0).sum::<f64>() / n,
            points.iter().map(|p| p.1).sum::<f64>() / n,
        ),
    };
    let shifted: Vec<(f64, f64)> = points.iter().map(|p| (p.0 - center.0, p.1 - center.1)).collect();
    let reach = shifted.iter().fold(0.0f64, |m, p| m.max(p.0.abs()).max(p.1.abs()));
    if !(reach > 0.0 && reach.is_finite()) {
        return Err(Error::InvalidInput("degenerate range: every point sits on the reflection point".into()));
    }
    let r = 1.05 * reach;
    let cell = |x: f64| (((x + r) / (2.0 * r) * bins as f64).floor() as usize).min(bins - 1);
    let mut diff = vec![0i64; bins * bins];
    for &(x, y) in &shifted {
        diff[cell(x) * bins + cell(y)] += 1;
        diff[cell(-x) * bins + cell(-y)] -= 1;
    }
    let tv = diff.iter().map(|d| d.unsigned_abs()).sum::<u64>() as f64 / (2.0 * n);
    Ok(tv.min(1.0))
}

/// Uniform bins over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_count: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HistogramSpec {
    pub fn new(bin_count: usize, lo: f64, hi: f64) -> Result<Self> {
        if bin_count == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "histogram needs >= 1 bin and finite lo < hi, got {bin_count} bins on [{lo}, {hi}]"
            )));
        }
        Ok(Self { bin_count, lo, hi })
    }

    /// Range fitted to the data with a 5% margin on each side. Constant data
    /// gets a window of half-width `max(5% of |value|, 0.5)`.
    pub fn auto(values: &[f64], bin_count: usize) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput("histogram data must be non-empty and finite".into()));
        }
        let pad = if hi > lo {
            0.05 * (hi - lo)
        } else {
            (0.05 * lo.abs()).max(0.5)
        };
        Self::new(bin_count, lo - pad, hi + pad)
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let k = ((x - self.lo) / (self.hi - self.lo) * self.bin_count as f64).floor() as usize;
        Some(k.min(self.bin_count - 1))
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bin_count as f64;
        let lo = self.lo + k as f64 * w;
        let hi = if k + 1 == self.bin_count { self.hi } else { self.lo + (k + 1) as f64 * w };
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    /// Values that fell outside `[lo, hi]`.
    pub outside: u64,
}

impl Histogram {
    pub fn from_values(values: &[f64], spec: HistogramSpec) -> Self {
        let mut counts = vec![0; spec.bin_count];
        let mut outside = 0;
        for &x in values {
            match spec.bin_of(x) {
                Some(k) => counts[k] += 1,
                None => outside += 1,
            }
        }
        Self { spec, counts, outside }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.spec.edges(k);
            writeln!(out, "{lo},{hi},{c}")?;
        }
        Ok(())
    }
}

/// Histogram of `cos(g_i, grad)` over `[-1, 1]`.
pub fn cosine_histogram(per_sample: &[RealVector], true_grad: &RealVector, bins: usize) -> Result<Histogram> {
    if true_grad.is_zero() {
        return Err(Error::UndefinedCosine);
    }
    let values = per_sample
        .iter()
        .map(|g| cosine(g, true_grad))
        .collect::<Result<Vec<_>>>()?;
    Ok(Histogram::from_values(&values, HistogramSpec::new(bins, -1.0, 1.0)?))
}

/// The four per-sample panels plus the raw statistics behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePanels {
    /// `|grad + xi_i|`.
    pub sample_norm: Histogram,
    /// `|xi_i|`.
    pub noise_norm: Histogram,
    /// `<grad, clip(grad + xi_i, c)>`.
    pub clipped_inner: Histogram,
    /// `<grad, grad + xi_i>`.
    pub inner: Histogram,
    /// Fraction of samples with `|xi_i| < c/4`.
    pub prob_term: f64,
    pub mean_inner: f64,
    pub mean_clipped_inner: f64,
}

/// Each panel gets its own auto-fitted range.
pub fn sample_panels(
    per_sample: &[RealVector],
    true_grad: &RealVector,
    c: ClipThreshold,
    bins: usize,
) -> Result<SamplePanels> {
    if per_sample.is_empty() {
        return Err(Error::InvalidInput("no per-sample gradients".into()));
    }
    let v = true_grad.as_slice();
    let d = v.len();
    let mut sample_norm = Vec::with_capacity(per_sample.len());
    let mut noise_norm = Vec::with_capacity(per_sample.len());
    let mut clipped_inner = Vec::with_capacity(per_sample.len());
    let mut inner = Vec::with_capacity(per_sample.len());
    let mut xi = vec![0.0; d];
    let mut scratch = Vec::with_capacity(2 * d);
    for g in per_sample {
        check_dim(d, g.dim())?;
        for ((x, a), b) in xi.iter_mut().zip(g.as_slice()).zip(v) {
            *x = a - b;
        }
        sample_norm.push(g.norm());
        noise_norm.push(l2_norm(&xi));
        clipped_inner.push(clip_score(v, &xi, c.value(), &mut scratch));
        inner.push(dot(v, g.as_slice()));
    }
    let n = per_sample.len() as f64;
    let quarter = 0.25 * c.value();
    let prob_term = noise_norm.iter().filter(|&&r| r < quarter).count() as f64 / n;
    let hist = |vals: &[f64]| -> Result<Histogram> { Ok(Histogram::from_values(vals, HistogramSpec::auto(vals, bins)?)) };
    Ok(SamplePanels {
        sample_norm: hist(&sample_norm)?,
        noise_norm: hist(&noise_norm)?,
        clipped_inner: hist(&clipped_inner)?,
        inner: hist(&inner)?,
        prob_term,
        mean_inner: inner.iter().sum::<f64>() / n,
        mean_clipped_inner: clipped_inner.iter().sum::<f64>() / n,
    })
}
