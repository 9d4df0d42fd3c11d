//! Gaussian special functions and the deterministic Monte Carlo driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma;

use crate::rng::{DrawRng, SeededStream};

/// A point estimate with its standard error. `samples == 0` marks a value
/// computed exactly, in which case `std_error` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self {
            mean,
            std_error: 0.0,
            samples: 0,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.samples == 0
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(|s Z| < r)` for `Z ~ N(0, I_dim)`, i.e. the chi distribution CDF.
pub fn gaussian_norm_below(scale: f64, dim: usize, radius: f64) -> f64 {
    if radius <= 0.0 {
        return 0.0;
    }
    if scale == 0.0 {
        return 1.0;
    }
    let t = radius / scale;
    if dim == 1 {
        libm::erf(t / std::f64::consts::SQRT_2)
    } else {
        gamma::gamma_lr(dim as f64 / 2.0, t * t / 2.0)
    }
}

/// Running mean / sum of squared deviations (Welford), mergeable with Chan's
/// formula. Merging in a fixed order keeps results bit-identical across
/// thread counts.
#[derive(Debug, Clone, Default)]
pub(crate) struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = other.clone();
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n / n;
        self.m2 += other.m2 + d * d * self.n * other.n / n;
        self.n = n;
    }

    pub(crate) fn estimate(&self) -> Estimate {
        let n = self.n;
        let var = if n > 1.0 { (self.m2 / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate {
            mean: self.mean,
            std_error: (var / n.max(1.0)).sqrt(),
            samples: n as usize,
        }
    }
}

const CHUNK: u64 = 4096;

/// Averages `f(draw_rng(i))` over `i in 0..count`.
pub(crate) fn monte_carlo<F>(stream: &SeededStream, count: usize, f: F) -> Estimate
where
    F: Fn(&mut DrawRng) -> f64 + Sync,
{
    let count = count as u64;
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut m = Moments::default();
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(count) {
                m.push(f(&mut stream.draw(i)));
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total.estimate()
}

/// Vector-valued variant of [`monte_carlo`]; returns per-coordinate
/// estimates.
pub(crate) fn monte_carlo_vec<F>(stream: &SeededStream, count: usize, dim: usize, f: F) -> Vec<Estimate>
where
    F: Fn(&mut DrawRng, &mut [f64]) + Sync,
{
    let count = count as u64;
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut m = vec![Moments::default(); dim];
            let mut buf = vec![0.0; dim];
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(count) {
                f(&mut stream.draw(i), &mut buf);
                for (mj, &x) in m.iter_mut().zip(&buf) {
                    mj.push(x);
                }
            }
            m
        })
        .collect();
    let mut total = vec![Moments::default(); dim];
    for p in &parts {
        for (t, m) in total.iter_mut().zip(p) {
            t.merge(m);
        }
    }
    total.iter().map(Moments::estimate).collect()
}
