//! Analytical quantities of clipped SGD evaluated on concrete distributions:
//! expected clipped inner products, the symmetric-noise lower bounds, the
//! exact clipping bias and its transport bound, and the per-step ledger.
//!
//! Finite distributions are always summed exactly; Monte Carlo is only used
//! where a Gaussian part is involved. Monte Carlo comparisons use a 3
//! standard-error allowance.

mod censored;
mod ledger;
mod wasserstein;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use censored::censored_normal_clip_mean;
pub use ledger::{descent_ledger, BiasLedger, LedgerOptions, LedgerRow};
pub use wasserstein::{clip_scores, transport_1d, wasserstein_clip};

use crate::error::{check_dim, Error, Result};
use crate::noise::{perturb, Empirical, NoiseModel, SphericalMixture};
use crate::rng::SeededStream;
use crate::stats::{gaussian_norm_below, monte_carlo, monte_carlo_vec, Estimate};
use crate::vector::{clip_into, clip_score, cosine, dot, ClipThreshold, RealVector};

/// Default threshold fraction: the probability term looks at `|xi| < c/4`
/// and the descent branch switches at `3c/4`.
pub const DEFAULT_Z: f64 = 0.25;

/// Number of standard errors allowed in Monte Carlo comparisons.
pub const MC_SIGMAS: f64 = 3.0;

/// Absolute slack for comparisons between exactly summed quantities; covers
/// accumulated double rounding in cases where the bound is tight.
pub const EXACT_SLACK: f64 = 1e-10;

/// `E_{xi ~ model} <v, clip(v + xi, c)>`.
pub fn expected_clipped_inner(
    v: &RealVector,
    model: &NoiseModel,
    c: ClipThreshold,
    stream: &SeededStream,
    mc_samples: usize,
) -> Result<Estimate> {
    check_dim(v.dim(), model.dim())?;
    if let NoiseModel::Empirical(e) = model {
        let scores = clip_scores(v, e, c)?;
        return Ok(Estimate::exact(scores.iter().zip(e.weights()).map(|(s, w)| s * w).sum()));
    }
    let d = v.dim();
    Ok(monte_carlo(stream, mc_samples, |rng| {
        let mut xi = vec![0.0; d];
        let mut scratch = Vec::with_capacity(2 * d);
        model.sample_into(rng, &mut xi);
        clip_score(v.as_slice(), &xi, c.value(), &mut scratch)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEstimate {
    pub mean: RealVector,
    /// Per-coordinate standard errors; all zero for exact results.
    pub std_error: Vec<f64>,
}

/// `E_{xi ~ model} clip(v + xi, c)`.
pub fn expected_clipped_gradient(
    v: &RealVector,
    model: &NoiseModel,
    c: ClipThreshold,
    stream: &SeededStream,
    mc_samples: usize,
) -> Result<VectorEstimate> {
    check_dim(v.dim(), model.dim())?;
    let d = v.dim();
    if let NoiseModel::Empirical(e) = model {
        let mut acc = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut out = vec![0.0; d];
        for (a, w) in e.iter() {
            for ((gj, vj), aj) in g.iter_mut().zip(v.as_slice()).zip(a.as_slice()) {
                *gj = vj + aj;
            }
            clip_into(&g, c.value(), &mut out);
            for (s, o) in acc.iter_mut().zip(&out) {
                *s += w * o;
            }
        }
        return Ok(VectorEstimate {
            mean: RealVector::new(acc)?,
            std_error: vec![0.0; d],
        });
    }
    let per_coord = monte_carlo_vec(stream, mc_samples, d, |rng, out| {
        let mut g = vec![0.0; d];
        model.sample_into(rng, &mut g);
        for (gj, vj) in g.iter_mut().zip(v.as_slice()) {
            *gj += vj;
        }
        clip_into(&g, c.value(), out);
    });
    Ok(VectorEstimate {
        mean: RealVector::new(per_coord.iter().map(|e| e.mean).collect())?,
        std_error: per_coord.iter().map(|e| e.std_error).collect(),
    })
}

/// A lower bound next to the quantity it bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub estimate: f64,
    /// 0 when the estimate is exact.
    pub std_error: f64,
    pub lower_bound: f64,
    pub prob_term: f64,
    pub z: f64,
    /// `estimate >= lower_bound - 1e-10` (exact) or
    /// `estimate >= lower_bound - 3 SE`.
    pub holds: bool,
}

impl BoundReport {
    fn new(estimate: Estimate, lower_bound: f64, prob_term: f64, z: f64) -> Self {
        let holds = if estimate.is_exact() {
            estimate.mean >= lower_bound - EXACT_SLACK
        } else {
            estimate.mean >= lower_bound - MC_SIGMAS * estimate.std_error
        };
        Self {
            estimate: estimate.mean,
            std_error: estimate.std_error,
            lower_bound,
            prob_term,
            z,
            holds,
        }
    }
}

fn check_z(z: f64) -> Result<()> {
    if z > 0.0 && z < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("threshold fraction z must lie in (0, 1), got {z}")))
    }
}

/// `min(y^2, 3/4 c y)`.
pub fn h_c(y: f64, c: ClipThreshold) -> f64 {
    (y * y).min(0.75 * c.value() * y)
}

/// `min(|v|^2, (1 - z) c |v|) * P(|xi| < z c)`; at `z = 1/4` this is
/// `h_c(|v|) P(|xi| < c/4)`.
pub fn symmetric_lower_bound(v_norm: f64, c: ClipThreshold, z: f64, prob_term: f64) -> f64 {
    let knee = (1.0 - z) * c.value();
    if v_norm <= knee {
        v_norm * v_norm * prob_term
    } else {
        knee * v_norm * prob_term
    }
}

/// Lower bound on `E <v, clip(v + xi, c)>` for symmetric noise, with the
/// expectation itself (exact for finite models, Monte Carlo otherwise).
pub fn symmetric_descent_bound(
    v: &RealVector,
    model: &NoiseModel,
    c: ClipThreshold,
    z: f64,
    stream: &SeededStream,
    mc_samples: usize,
) -> Result<BoundReport> {
    check_z(z)?;
    check_dim(v.dim(), model.dim())?;
    if let Some(why) = model.symmetry_defect() {
        return Err(Error::SymmetryViolation(why));
    }
    let prob = model.prob_norm_below(z * c.value(), &stream.child(1), mc_samples);
    let estimate = expected_clipped_inner(v, model, c, &stream.child(2), mc_samples)?;
    let bound = symmetric_lower_bound(v.norm(), c, z, prob.mean);
    Ok(BoundReport::new(estimate, bound, prob.mean, z))
}

/// Bound for gradients drawn from a mixture of spherical Gaussians whose
/// weighted centers average to `v`:
/// `|v| sum_i w_i min(|u_i|, (1-z) c) cos(v, u_i) P(|radial_i| < z c)`.
/// The estimate averages `<v, clip(g, c)>` over `g ~ mixture`.
pub fn mixture_descent_bound(
    v: &RealVector,
    mixture: &SphericalMixture,
    c: ClipThreshold,
    z: f64,
    stream: &SeededStream,
    mc_samples: usize,
) -> Result<BoundReport> {
    check_z(z)?;
    check_dim(v.dim(), mixture.dim())?;
    let mean = mixture.mean();
    let off = mean.distance(v)?;
    if off > 1e-9 {
        return Err(Error::Precondition(format!(
            "v must equal the weighted mean of the centers (off by {off})"
        )));
    }
    let d = v.dim();
    let mut bound = 0.0;
    let mut prob_mix = 0.0;
    let v_norm = v.norm();
    for (i, comp) in mixture.components().iter().enumerate() {
        let align = dot(comp.center.as_slice(), v.as_slice());
        if align < 0.0 {
            return Err(Error::Precondition(format!(
                "component {i} has <u_i, v> = {align} < 0"
            )));
        }
        let p = gaussian_norm_below(comp.radial_scale, d, z * c.value());
        prob_mix += comp.weight * p;
        if v_norm == 0.0 || comp.center.is_zero() {
            continue;
        }
        let cos = cosine(v, &comp.center)?;
        bound += comp.weight * comp.center.norm().min((1.0 - z) * c.value()) * cos * p;
    }
    bound *= v_norm;
    let gradients = NoiseModel::SphericalMixture(mixture.clone());
    let estimate = monte_carlo(&stream.child(2), mc_samples, |rng| {
        let mut g = vec![0.0; d];
        let mut out = vec![0.0; d];
        gradients.sample_into(rng, &mut g);
        clip_into(&g, c.value(), &mut out);
        dot(v.as_slice(), &out)
    });
    Ok(BoundReport::new(estimate, bound, prob_mix, z))
}

/// Two finite distributions laid out on their common support.
#[derive(Debug, Clone)]
pub(crate) struct PairedSupport {
    pub atoms: Vec<RealVector>,
    pub weight_p: Vec<f64>,
    pub weight_q: Vec<f64>,
}

impl PairedSupport {
    pub(crate) fn new(p: &Empirical, q: &Empirical) -> Result<Self> {
        check_dim(p.dim(), q.dim())?;
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out = PairedSupport {
            atoms: Vec::new(),
            weight_p: Vec::new(),
            weight_q: Vec::new(),
        };
        let key = |a: &RealVector| -> Vec<u64> {
            a.as_slice()
                .iter()
                .map(|&x| if x == 0.0 { 0 } else { x.to_bits() })
                .collect()
        };
        for (side, model) in [(0, p), (1, q)] {
            for (a, w) in model.iter() {
                let slot = *index.entry(key(a)).or_insert_with(|| {
                    out.atoms.push(a.clone());
                    out.weight_p.push(0.0);
                    out.weight_q.push(0.0);
                    out.atoms.len() - 1
                });
                if side == 0 {
                    out.weight_p[slot] += w;
                } else {
                    out.weight_q[slot] += w;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn scores(&self, v: &RealVector, c: ClipThreshold) -> Vec<f64> {
        let mut scratch = Vec::new();
        self.atoms
            .iter()
            .map(|a| clip_score(v.as_slice(), a.as_slice(), c.value(), &mut scratch))
            .collect()
    }

    /// `sum_xi s(xi) (p(xi) - q(xi))`.
    pub(crate) fn bias(&self, scores: &[f64]) -> f64 {
        scores
            .iter()
            .zip(self.weight_p.iter().zip(&self.weight_q))
            .map(|(s, (wp, wq))| s * (wp - wq))
            .sum()
    }
}

/// `b = sum_xi <v, clip(v + xi, c)> (p(xi) - p~(xi))` over the union of
/// both supports.
pub fn clipping_bias(v: &RealVector, p: &Empirical, p_tilde: &Empirical, c: ClipThreshold) -> Result<f64> {
    check_dim(v.dim(), p.dim())?;
    let support = PairedSupport::new(p, p_tilde)?;
    Ok(support.bias(&support.scores(v, c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationGapReport {
    /// `E <v, clip(v + xi + k zeta, c)>`.
    pub estimate: f64,
    pub std_error: f64,
    /// `|v| min(|v|, 3c/4) P(|k zeta| < c/4)`.
    pub lower_bound: f64,
    /// `estimate - lower_bound`.
    pub gap: f64,
    /// Total variance of the unperturbed noise.
    pub noise_variance: f64,
}

/// Pre-clipping perturbation: compares the perturbed expectation with the
/// symmetric-noise bound of `k zeta` alone. In one dimension the expectation
/// is exact (a censored-normal mean per atom); otherwise Monte Carlo.
pub fn perturbation_gap(
    v: &RealVector,
    model: &Empirical,
    c: ClipThreshold,
    k: f64,
    stream: &SeededStream,
    mc_samples: usize,
) -> Result<PerturbationGapReport> {
    check_dim(v.dim(), model.dim())?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Precondition(format!("perturbation scale must be > 0, got {k}")));
    }
    let d = v.dim();
    let estimate = if d == 1 {
        let v1 = v[0];
        Estimate::exact(
            model
                .iter()
                .map(|(a, w)| w * v1 * censored_normal_clip_mean(v1 + a[0], k, c.value()))
                .sum(),
        )
    } else {
        let perturbed = perturb(NoiseModel::Empirical(model.clone()), k)?;
        expected_clipped_inner(v, &perturbed, c, stream, mc_samples)?
    };
    let v_norm = v.norm();
    let prob = gaussian_norm_below(k, d, 0.25 * c.value());
    let lower_bound = v_norm * v_norm.min(0.75 * c.value()) * prob;
    Ok(PerturbationGapReport {
        estimate: estimate.mean,
        std_error: estimate.std_error,
        lower_bound,
        gap: estimate.mean - lower_bound,
        noise_variance: model.variance(),
    })
}
