//! Finite-sum objectives with per-sample gradient oracles.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::noise::{Empirical, EmpiricalJson};
use crate::rng::SeededStream;
use crate::vector::RealVector;

/// Smoothness constant, optimum and optimal value of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub smoothness: f64,
    pub optimum: RealVector,
    pub min_value: f64,
}

/// `f(x) = (1/n) sum_i f(x, s_i)` with access to every per-sample gradient.
pub trait Problem: Sync {
    fn dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    fn meta(&self) -> &ProblemMeta;

    fn objective(&self, x: &RealVector) -> Result<f64>;

    /// Writes `grad f(x, s_i)` into `out` (0-based `i`). No bounds or
    /// dimension checks: the optimizers call this in their inner loop.
    fn per_sample_gradient_into(&self, x: &[f64], i: usize, out: &mut [f64]);

    fn full_gradient(&self, x: &RealVector) -> Result<RealVector>;

    /// `grad f(x, s_i)` for a 0-based sample index.
    fn per_sample_gradient(&self, x: &RealVector, i: usize) -> Result<RealVector> {
        check_dim(self.dim(), x.dim())?;
        if i >= self.num_samples() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.num_samples(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.per_sample_gradient_into(x.as_slice(), i, &mut out);
        RealVector::new(out)
    }

    /// Uniform empirical model over `grad f(x, s_i) - grad f(x)`.
    fn noise_residuals(&self, x: &RealVector) -> Result<Empirical> {
        let full = self.full_gradient(x)?;
        let atoms = (0..self.num_samples())
            .map(|i| self.per_sample_gradient(x, i)?.sub(&full))
            .collect::<Result<Vec<_>>>()?;
        Empirical::uniform(atoms)
    }

    /// False when `noise_residuals` returns the same distribution at every
    /// point, which lets per-step diagnostics compute it once.
    fn residuals_depend_on_x(&self) -> bool {
        true
    }

    /// `f(x) - min f`.
    fn gap(&self, x: &RealVector) -> Result<f64> {
        Ok(self.objective(x)? - self.meta().min_value)
    }
}

/// `f(x) = (1/n) sum_i 0.5 |x - a_i|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    centers: Vec<RealVector>,
    meta: ProblemMeta,
}

impl QuadraticProblem {
    pub fn new(centers: Vec<RealVector>) -> Result<Self> {
        let optimum = RealVector::mean(&centers)?;
        let n = centers.len() as f64;
        let min_value = centers
            .iter()
            .map(|a| optimum.sub(a).map(|d| 0.5 * d.norm_squared()))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum::<f64>()
            / n;
        Ok(Self {
            centers,
            meta: ProblemMeta {
                smoothness: 1.0,
                optimum,
                min_value,
            },
        })
    }

    pub fn centers(&self) -> &[RealVector] {
        &self.centers
    }

    /// Centers as an empirical JSON document (uniform weights).
    pub fn to_json(&self) -> EmpiricalJson {
        let n = self.centers.len();
        EmpiricalJson {
            dim: self.dim(),
            atoms: self.centers.iter().map(|c| c.as_slice().to_vec()).collect(),
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Reads centers from the empirical JSON schema. Weights must be uniform.
    pub fn from_json(doc: EmpiricalJson) -> Result<Self> {
        let model = Empirical::try_from(doc)?;
        let n = model.len() as f64;
        if model.weights().iter().any(|w| (w - 1.0 / n).abs() > 1e-12) {
            return Err(Error::InvalidInput(
                "problem centers must carry uniform weights".into(),
            ));
        }
        Self::new(model.atoms().to_vec())
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.meta.optimum.dim()
    }

    fn num_samples(&self) -> usize {
        self.centers.len()
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn objective(&self, x: &RealVector) -> Result<f64> {
        check_dim(self.dim(), x.dim())?;
        let total: f64 = self
            .centers
            .iter()
            .map(|a| {
                let d: f64 = x
                    .as_slice()
                    .iter()
                    .zip(a.as_slice())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                0.5 * d
            })
            .sum();
        Ok(total / self.centers.len() as f64)
    }

    fn per_sample_gradient_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        for ((o, xj), aj) in out.iter_mut().zip(x).zip(self.centers[i].as_slice()) {
            *o = xj - aj;
        }
    }

    /// Mean of the per-sample gradients, accumulated in sample order.
    fn full_gradient(&self, x: &RealVector) -> Result<RealVector> {
        check_dim(self.dim(), x.dim())?;
        let mut acc = vec![0.0; self.dim()];
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.centers.len() {
            self.per_sample_gradient_into(x.as_slice(), i, &mut g);
            for (s, v) in acc.iter_mut().zip(&g) {
                *s += v;
            }
        }
        let n = self.centers.len() as f64;
        RealVector::new(acc.into_iter().map(|s| s / n).collect())
    }

    /// `mean(a) - a_i`, which is independent of `x` for this family.
    fn noise_residuals(&self, x: &RealVector) -> Result<Empirical> {
        check_dim(self.dim(), x.dim())?;
        let atoms = self
            .centers
            .iter()
            .map(|a| self.meta.optimum.sub(a))
            .collect::<Result<Vec<_>>>()?;
        Empirical::uniform(atoms)
    }

    fn residuals_depend_on_x(&self) -> bool {
        false
    }
}

fn scalar_centers(values: &[f64]) -> Vec<RealVector> {
    values.iter().map(|&a| RealVector::scalar(a).expect("finite")).collect()
}

/// Three samples at -3, -3, 9: optimum 1, but clipped SGD drifts away.
pub fn make_example1() -> QuadraticProblem {
    QuadraticProblem::new(scalar_centers(&[-3.0, -3.0, 9.0])).expect("valid centers")
}

/// Two samples at -3, 3: every point of [-2, 2] is stationary under clipping.
pub fn make_example2() -> QuadraticProblem {
    QuadraticProblem::new(scalar_centers(&[-3.0, 3.0])).expect("valid centers")
}

/// Settings for the Gaussian-mixture dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n: usize,
    pub dim: usize,
    /// Standard deviations of the component-mean priors.
    pub mean_scales: Vec<f64>,
    /// Component proportions; `None` means uniform.
    pub proportions: Option<Vec<f64>>,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            dim: 10,
            mean_scales: vec![6.0, 2.0, 1.0],
            proportions: None,
        }
    }
}

pub fn make_synthetic_mixture(seed: u64) -> QuadraticProblem {
    make_mixture_problem(&MixtureSpec::default(), seed).expect("default spec is valid")
}

/// Component means `mu_j ~ N(0, s_j^2 I)`; each center is `mu_j + N(0, I)`
/// for a component `j` drawn from `proportions`.
pub fn make_mixture_problem(spec: &MixtureSpec, seed: u64) -> Result<QuadraticProblem> {
    let k = spec.mean_scales.len();
    if spec.n == 0 || spec.dim == 0 || k == 0 {
        return Err(Error::InvalidInput("mixture needs n, dim and components >= 1".into()));
    }
    let proportions = match &spec.proportions {
        Some(p) if p.len() != k => {
            return Err(Error::InvalidInput(format!("{} proportions for {k} components", p.len())))
        }
        Some(p) => p.clone(),
        None => vec![1.0 / k as f64; k],
    };
    let total: f64 = proportions.iter().sum();
    if proportions.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("proportions must be >= 0 and sum to 1".into()));
    }
    let root = SeededStream::new(seed, 0x6d69_7874);
    let means_stream = root.child(0);
    let means: Vec<Vec<f64>> = spec
        .mean_scales
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = means_stream.draw(j as u64);
            (0..spec.dim)
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let centers_stream = root.child(1);
    let centers = (0..spec.n)
        .map(|i| {
            let mut rng = centers_stream.draw(i as u64);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut comp = k - 1;
            for (j, p) in proportions.iter().enumerate() {
                acc += p;
                if u < acc {
                    comp = j;
                    break;
                }
            }
            RealVector::new(
                means[comp]
                    .iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    QuadraticProblem::new(centers)
}
