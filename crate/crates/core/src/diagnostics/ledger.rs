//! Per-step descent ledger for a clipped SGD run.
//!
//! At every step the noise distribution `p` is the empirical residual
//! distribution of the problem at `x_t` and the reference `p~` is its
//! symmetrization. Both are finite, so `E_p`, `E_p~`, `b_t` and the
//! probability term are exact sums.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::wasserstein::transport_1d;
use super::{EXACT_SLACK, MC_SIGMAS};
use crate::error::{Error, Result};
use crate::noise::Empirical;
use crate::optim::{Batch, Trajectory};
use crate::problems::Problem;
use crate::vector::{clip_score, dot, l2_norm, ClipThreshold};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerOptions {
    /// Threshold fraction for the probability term.
    pub z: f64,
    /// Compute `W_{v,c}(p~, p)` on every n-th step; `None` skips it.
    pub wasserstein_every: Option<usize>,
}

impl Default for LedgerOptions {
    fn default() -> Self {
        Self {
            z: super::DEFAULT_Z,
            wasserstein_every: Some(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    pub grad_norm: f64,
    /// `P_p~(|xi| < z c) min(|grad|, (1 - z) c) |grad|`.
    pub lhs: f64,
    /// `E_p <grad, clip(grad + xi, c)>`.
    pub e_p: f64,
    /// Same expectation under `p~`.
    pub e_ptilde: f64,
    pub b_t: f64,
    pub w_bound: Option<f64>,
    pub prob_term: f64,
    /// `Var_p` of the clipped score; drives the standard error.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasLedger {
    pub rows: Vec<LedgerRow>,
    pub clip: ClipThreshold,
    pub alpha: f64,
    /// `f(x_0) - min f`.
    pub gap0: f64,
    pub smoothness: f64,
    pub mean_lhs: f64,
    pub mean_bias: f64,
    /// `D_f / (alpha T) + G alpha c^2 / 2`.
    pub rhs: f64,
    /// Standard error of `(1/T) sum_t E_p[score_t]` around the realized
    /// descent; 0 for full-batch runs.
    pub std_error: f64,
    /// `mean_lhs + mean_bias <= rhs + 3 SE`.
    pub holds: bool,
    /// `alpha sum_t <grad f(x_t), g_t>`.
    pub pathwise_descent: f64,
    /// `f(x_0) - f(x_T) + G alpha^2 / 2 sum_t |g_t|^2`.
    pub pathwise_budget: f64,
    pub pathwise_holds: bool,
}

impl BiasLedger {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    /// Columns `step,grad_norm,lhs,b_t,w_bound,prob_term`; `w_bound` is
    /// empty on steps where it was not computed.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,grad_norm,lhs,b_t,w_bound,prob_term")?;
        for r in &self.rows {
            let w = r.w_bound.map(|w| w.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{}", r.step, r.grad_norm, r.lhs, r.b_t, w, r.prob_term)?;
        }
        Ok(())
    }
}

/// Score of every atom and of its reflection.
struct StepScores {
    plus: Vec<f64>,
    minus: Vec<f64>,
}

fn step_scores(v: &[f64], p: &Empirical, c: f64, scratch: &mut Vec<f64>, neg: &mut [f64]) -> StepScores {
    let mut plus = Vec::with_capacity(p.len());
    let mut minus = Vec::with_capacity(p.len());
    for a in p.atoms() {
        plus.push(clip_score(v, a.as_slice(), c, scratch));
        for (n, x) in neg.iter_mut().zip(a.as_slice()) {
            *n = -x;
        }
        minus.push(clip_score(v, neg, c, scratch));
    }
    StepScores { plus, minus }
}

/// Builds the ledger for a clipped SGD trajectory (no privacy noise, no
/// perturbation).
pub fn descent_ledger(traj: &Trajectory, problem: &dyn Problem, opts: LedgerOptions) -> Result<BiasLedger> {
    let cfg = &traj.config;
    if cfg.sigma != 0.0 || cfg.k != 0.0 {
        return Err(Error::Precondition(
            "the ledger covers clipped SGD only (sigma = 0, k = 0)".into(),
        ));
    }
    if !(opts.z > 0.0 && opts.z < 1.0) {
        return Err(Error::InvalidInput(format!("threshold fraction z must lie in (0, 1), got {}", opts.z)));
    }
    if opts.wasserstein_every == Some(0) {
        return Err(Error::InvalidInput("wasserstein_every must be >= 1".into()));
    }
    let steps = traj.steps();
    if steps == 0 {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let c = cfg.clip.value();
    let zc = opts.z * c;
    let knee = (1.0 - opts.z) * c;
    let d = problem.dim();
    let batch = match cfg.batch {
        Batch::Full => None,
        Batch::Sampled(m) => Some(m as f64),
    };

    let mut cached: Option<(Empirical, f64)> = None;
    let mut scratch = Vec::with_capacity(2 * d);
    let mut neg = vec![0.0; d];
    let mut rows = Vec::with_capacity(steps);
    let mut var_sum = 0.0;

    for (t, grad) in traj.gradients.iter().enumerate() {
        let fresh = problem.residuals_depend_on_x() || cached.is_none();
        if fresh {
            let p = problem.noise_residuals(&traj.iterates[t])?;
            // |xi| and |-xi| agree, so p and its symmetrization share this.
            let prob = p.prob_norm_below(zc);
            cached = Some((p, prob));
        }
        let (p, prob) = cached.as_ref().expect("filled above");
        let v = grad.as_slice();
        let scores = step_scores(v, p, c, &mut scratch, &mut neg);

        let mut e_p = 0.0;
        let mut e_ptilde = 0.0;
        let mut second = 0.0;
        for ((s, r), w) in scores.plus.iter().zip(&scores.minus).zip(p.weights()) {
            e_p += w * s;
            e_ptilde += w * 0.5 * (s + r);
            second += w * s * s;
        }
        let variance = (second - e_p * e_p).max(0.0);
        let b_t = e_p - e_ptilde;

        let w_bound = match opts.wasserstein_every {
            Some(every) if t % every == 0 => {
                let a: Vec<(f64, f64)> = scores.plus.iter().copied().zip(p.weights().iter().copied()).collect();
                let b: Vec<(f64, f64)> = scores
                    .plus
                    .iter()
                    .chain(&scores.minus)
                    .copied()
                    .zip(p.weights().iter().chain(p.weights()).map(|w| 0.5 * w))
                    .collect();
                Some(transport_1d(&b, &a))
            }
            _ => None,
        };

        let gn = grad.norm();
        rows.push(LedgerRow {
            step: t,
            grad_norm: gn,
            lhs: prob * gn.min(knee) * gn,
            e_p,
            e_ptilde,
            b_t,
            w_bound,
            prob_term: *prob,
            variance,
        });
        if let Some(m) = batch {
            var_sum += variance / m;
        }
    }

    let t_f = steps as f64;
    let meta = problem.meta();
    let gap0 = traj.objective[0] - meta.min_value;
    let g = meta.smoothness;
    let alpha = cfg.alpha;
    let mean_lhs = rows.iter().map(|r| r.lhs).fold(0.0, |a, x| a + x) / t_f;
    let mean_bias = rows.iter().map(|r| r.b_t).fold(0.0, |a, x| a + x) / t_f;
    let rhs = gap0 / (alpha * t_f) + g * alpha * c * c / 2.0;
    let std_error = var_sum.sqrt() / t_f;
    let holds = mean_lhs + mean_bias <= rhs + MC_SIGMAS * std_error + EXACT_SLACK;

    let pathwise_descent = alpha
        * traj
            .gradients
            .iter()
            .zip(&traj.clipped_means)
            .map(|(gr, m)| dot(gr.as_slice(), m.as_slice()))
            .sum::<f64>();
    let sq: f64 = traj.clipped_means.iter().map(|m| l2_norm(m.as_slice()).powi(2)).sum();
    let pathwise_budget = traj.objective[0] - traj.objective[steps] + g * alpha * alpha / 2.0 * sq;
    let scale = pathwise_descent.abs().max(pathwise_budget.abs()).max(1.0);
    let pathwise_holds = pathwise_descent <= pathwise_budget + 1e-9 * scale;

    Ok(BiasLedger {
        rows,
        clip: cfg.clip,
        alpha,
        gap0,
        smoothness: g,
        mean_lhs,
        mean_bias,
        rhs,
        std_error,
        holds,
        pathwise_descent,
        pathwise_budget,
        pathwise_holds,
    })
}
