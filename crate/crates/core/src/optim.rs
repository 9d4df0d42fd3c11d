//! Clipped SGD, DP-SGD and DP-SGD with pre-clipping perturbation.
//!
//! One loop implements all three. Each step `t` takes its randomness from
//! three independent child streams of the run seed (minibatch indices,
//! per-sample perturbation, privacy noise), all indexed by `t`. Switching a
//! noise source off therefore leaves the remaining draws untouched, which is
//! what makes `dp_sgd(sigma = 0)` reproduce `clipped_sgd` bit for bit.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::privacy::{calibrate_sigma, PrivacyBudget};
use crate::problems::Problem;
use crate::rng::SeededStream;
use crate::vector::{clip_into, dot, l2_norm, ClipThreshold, RealVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    /// Every sample, every step; no sampling randomness.
    Full,
    /// `m` indices drawn uniformly with replacement.
    Sampled(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub clip: ClipThreshold,
    pub iterations: usize,
    pub batch: Batch,
    /// Per-coordinate std of the privacy noise added to the clipped mean.
    pub sigma: f64,
    /// Scale of the Gaussian noise added to each per-sample gradient before
    /// clipping.
    pub k: f64,
    pub seed: u64,
    pub x0: RealVector,
}

impl OptimizerConfig {
    pub fn new(alpha: f64, clip: ClipThreshold, iterations: usize, x0: RealVector) -> Self {
        Self {
            alpha,
            clip,
            iterations,
            batch: Batch::Sampled(1),
            sigma: 0.0,
            k: 0.0,
            seed: 0,
            x0,
        }
    }

    pub fn with_batch(mut self, batch: Batch) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sets `sigma` from the Gaussian-mechanism calibration.
    pub fn with_calibrated_sigma(mut self, budget: &PrivacyBudget) -> Result<Self> {
        self.sigma = calibrate_sigma(budget, self.clip)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("step size must be > 0, got {}", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be >= 1".into()));
        }
        if self.batch == Batch::Sampled(0) {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        for (name, v) in [("sigma", self.sigma), ("k", self.k)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: OptimizerConfig,
    /// `x_0 .. x_T`.
    pub iterates: Vec<RealVector>,
    /// Realized clipped minibatch means `g_0 .. g_{T-1}` (before privacy noise).
    pub clipped_means: Vec<RealVector>,
    /// True gradients at `x_0 .. x_{T-1}`.
    pub gradients: Vec<RealVector>,
    /// `f(x_0) .. f(x_T)`.
    pub objective: Vec<f64>,
    /// `|Z_t|` of the privacy noise added at each step (0 when sigma = 0).
    pub privacy_noise_norms: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.clipped_means.len()
    }

    pub fn last(&self) -> &RealVector {
        self.iterates.last().expect("trajectory always holds x_0")
    }

    pub fn distance_to(&self, target: &RealVector) -> Result<Vec<f64>> {
        self.iterates.iter().map(|x| x.distance(target)).collect()
    }

    /// `(1/T) sum_t <grad f(x_t), g_t>`.
    pub fn mean_descent_inner(&self) -> f64 {
        let total: f64 = self
            .gradients
            .iter()
            .zip(&self.clipped_means)
            .map(|(g, m)| dot(g.as_slice(), m.as_slice()))
            .sum();
        total / self.steps() as f64
    }

    /// First step `t` such that every move in `t..t+window` is shorter than
    /// `10 * alpha * tol`.
    pub fn fixed_point_step(&self, window: usize, tol: f64) -> Option<usize> {
        let limit = 10.0 * self.config.alpha * tol;
        let moves: Vec<f64> = self
            .iterates
            .windows(2)
            .map(|w| l2_norm(&w[1].as_slice().iter().zip(w[0].as_slice()).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .collect();
        if moves.len() < window {
            return None;
        }
        (0..=moves.len() - window).find(|&t| moves[t..t + window].iter().all(|&m| m < limit))
    }

    /// CSV with columns `step,f,grad_norm,clipped_mean_norm,distance_to_opt`.
    /// The final row (`step = T`) has no clipped mean and leaves it empty.
    pub fn write_csv<W: Write>(&self, problem: &dyn Problem, mut out: W) -> io::Result<()> {
        writeln!(out, "step,f,grad_norm,clipped_mean_norm,distance_to_opt")?;
        let opt = &problem.meta().optimum;
        for (t, x) in self.iterates.iter().enumerate() {
            let grad_norm = match self.gradients.get(t) {
                Some(g) => g.norm(),
                None => problem.full_gradient(x).map(|g| g.norm()).unwrap_or(f64::NAN),
            };
            let dist = x.distance(opt).unwrap_or(f64::NAN);
            match self.clipped_means.get(t) {
                Some(g) => writeln!(out, "{t},{},{grad_norm},{},{dist}", self.objective[t], g.norm())?,
                None => writeln!(out, "{t},{},{grad_norm},,{dist}", self.objective[t])?,
            }
        }
        Ok(())
    }
}

const STREAM_BATCH: u64 = 1;
const STREAM_PERTURB: u64 = 2;
const STREAM_PRIVACY: u64 = 3;

/// The shared update
/// `x_{t+1} = x_t - alpha * (mean_i clip(grad f(x_t, s_i) + k zeta_{t,i}, c) + sigma Z_t)`.
pub fn run(problem: &dyn Problem, cfg: &OptimizerConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_dim(problem.dim(), cfg.x0.dim())?;
    let d = problem.dim();
    let n = problem.num_samples();
    let c = cfg.clip.value();
    let root = SeededStream::new(cfg.seed, 0x6f70_7469);
    let batch_stream = root.child(STREAM_BATCH);
    let perturb_stream = root.child(STREAM_PERTURB);
    let privacy_stream = root.child(STREAM_PRIVACY);
    let m = match cfg.batch {
        Batch::Full => n,
        Batch::Sampled(m) => m,
    };

    let t_max = cfg.iterations;
    let mut iterates = Vec::with_capacity(t_max + 1);
    let mut clipped_means = Vec::with_capacity(t_max);
    let mut gradients = Vec::with_capacity(t_max);
    let mut objective = Vec::with_capacity(t_max + 1);
    let mut privacy_noise_norms = Vec::with_capacity(t_max);

    let mut x = cfg.x0.clone();
    let mut sample_grad = vec![0.0; d];
    let mut clipped = vec![0.0; d];
    let mut mean = vec![0.0; d];
    let mut z = vec![0.0; d];

    for t in 0..t_max as u64 {
        objective.push(problem.objective(&x)?);
        gradients.push(problem.full_gradient(&x)?);

        let mut batch_rng = batch_stream.draw(t);
        let mut perturb_rng = (cfg.k != 0.0).then(|| perturb_stream.draw(t));
        mean.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let i = match cfg.batch {
                Batch::Full => j,
                Batch::Sampled(_) => batch_rng.random_range(0..n),
            };
            problem.per_sample_gradient_into(x.as_slice(), i, &mut sample_grad);
            if let Some(rng) = perturb_rng.as_mut() {
                for g in sample_grad.iter_mut() {
                    let zeta: f64 = rng.sample(StandardNormal);
                    *g += cfg.k * zeta;
                }
            }
            clip_into(&sample_grad, c, &mut clipped);
            for (s, v) in mean.iter_mut().zip(&clipped) {
                *s += v;
            }
        }
        let inv_m = 1.0 / m as f64;
        mean.iter_mut().for_each(|v| *v *= inv_m);

        let mut next: Vec<f64> = x.as_slice().to_vec();
        if cfg.sigma != 0.0 {
            let mut rng = privacy_stream.draw(t);
            for zj in z.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *zj = cfg.sigma * e;
            }
            for ((xj, gj), zj) in next.iter_mut().zip(&mean).zip(&z) {
                *xj -= cfg.alpha * (gj + zj);
            }
            privacy_noise_norms.push(l2_norm(&z));
        } else {
            for (xj, gj) in next.iter_mut().zip(&mean) {
                *xj -= cfg.alpha * gj;
            }
            privacy_noise_norms.push(0.0);
        }

        clipped_means.push(RealVector::new(mean.clone())?);
        iterates.push(std::mem::replace(&mut x, RealVector::new(next)?));
    }
    objective.push(problem.objective(&x)?);
    iterates.push(x);

    Ok(Trajectory {
        config: cfg.clone(),
        iterates,
        clipped_means,
        gradients,
        objective,
        privacy_noise_norms,
    })
}

/// Clipped SGD. `Batch::Full` gives deterministic full-batch clipped GD and
/// `Batch::Sampled(1)` the single-draw stochastic oracle.
pub fn clipped_sgd(problem: &dyn Problem, cfg: &OptimizerConfig) -> Result<Trajectory> {
    if cfg.sigma != 0.0 || cfg.k != 0.0 {
        return Err(Error::Precondition(
            "clipped SGD takes sigma = 0 and k = 0; use dp_sgd / dp_sgd_perturbed".into(),
        ));
    }
    run(problem, cfg)
}

/// DP-SGD with privacy noise `Z_t ~ N(0, sigma^2 I)`.
pub fn dp_sgd(problem: &dyn Problem, cfg: &OptimizerConfig) -> Result<Trajectory> {
    if cfg.k != 0.0 {
        return Err(Error::Precondition(
            "dp_sgd takes k = 0; use dp_sgd_perturbed".into(),
        ));
    }
    run(problem, cfg)
}

/// DP-SGD where each per-sample gradient gets independent `N(0, k^2 I)`
/// noise before clipping.
pub fn dp_sgd_perturbed(problem: &dyn Problem, cfg: &OptimizerConfig) -> Result<Trajectory> {
    run(problem, cfg)
}

/// `alpha = sqrt(D_f d ln(1/delta)) / (n eps c sqrt(G))`.
pub fn dp_step_size(
    gap_bound: f64,
    dim: usize,
    budget: &PrivacyBudget,
    c: ClipThreshold,
    smoothness: f64,
) -> Result<f64> {
    budget.validate()?;
    if !(gap_bound >= 0.0 && smoothness > 0.0 && c.value().is_finite()) {
        return Err(Error::InvalidInput(
            "step size needs D_f >= 0, G > 0 and a finite clip threshold".into(),
        ));
    }
    let num = (gap_bound * dim as f64 * (1.0 / budget.delta).ln()).sqrt();
    Ok(num / (budget.n as f64 * budget.epsilon * c.value() * smoothness.sqrt()))
}
