//! Transport distance under the ground cost
//! `d_{v,c}(a, b) = |<v, clip(v + a, c)> - <v, clip(v + b, c)>|`.
//!
//! The cost only sees its arguments through the scalar score
//! `s(xi) = <v, clip(v + xi, c)>`, so the optimal plan between two finite
//! distributions is the monotone (quantile) coupling of the pushed-forward
//! scores.

use crate::error::{check_dim, Result};
use crate::noise::Empirical;
use crate::vector::{clip_score, ClipThreshold, RealVector};

/// Scores `s(xi)` for every atom of `model`, in atom order.
pub fn clip_scores(v: &RealVector, model: &Empirical, c: ClipThreshold) -> Result<Vec<f64>> {
    check_dim(v.dim(), model.dim())?;
    let mut scratch = Vec::new();
    Ok(model
        .atoms()
        .iter()
        .map(|a| clip_score(v.as_slice(), a.as_slice(), c.value(), &mut scratch))
        .collect())
}

/// Exact 1-D earth mover's distance between two weighted point sets.
/// Weights are taken as given (each side should sum to the same mass).
pub fn transport_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut a: Vec<(f64, f64)> = a.iter().copied().filter(|p| p.1 > 0.0).collect();
    let mut b: Vec<(f64, f64)> = b.iter().copied().filter(|p| p.1 > 0.0).collect();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));

    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a.first().map_or(0.0, |p| p.1), b.first().map_or(0.0, |p| p.1));
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let gap = (a[i].0 - b[j].0).abs();
        if ra <= rb {
            cost += ra * gap;
            rb -= ra;
            i += 1;
            ra = a.get(i).map_or(0.0, |p| p.1);
        } else {
            cost += rb * gap;
            ra -= rb;
            j += 1;
            rb = b.get(j).map_or(0.0, |p| p.1);
        }
    }
    cost
}

/// `W_{v,c}(p, q)`.
pub fn wasserstein_clip(v: &RealVector, c: ClipThreshold, p: &Empirical, q: &Empirical) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    let sp = clip_scores(v, p, c)?;
    let sq = clip_scores(v, q, c)?;
    let a: Vec<(f64, f64)> = sp.into_iter().zip(p.weights().iter().copied()).collect();
    let b: Vec<(f64, f64)> = sq.into_iter().zip(q.weights().iter().copied()).collect();
    Ok(transport_1d(&a, &b))
}
