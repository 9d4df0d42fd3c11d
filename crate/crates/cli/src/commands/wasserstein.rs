//! Exact clipping bias and transport bound for a pair of finite
//! distributions read from JSON.
//!
//! Input: `{"v": [..], "clip": 1.0, "p": {"dim", "atoms", "weights"},
//! "q": {..}}`. `clip` may come from `--clip` instead; a missing `q` means
//! the symmetrization of `p`.

use std::fs;

use clipbias::diagnostics::{clip_scores, clipping_bias, expected_clipped_inner, wasserstein_clip};
use clipbias::{Empirical, EmpiricalJson, NoiseModel, RealVector, SeededStream};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{clip_threshold, write_summary, Check};
use crate::config::Settings;
use crate::output::RunDir;
use crate::CliResult;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairInput {
    v: Vec<f64>,
    #[serde(default)]
    clip: Option<f64>,
    p: EmpiricalJson,
    #[serde(default)]
    q: Option<EmpiricalJson>,
}

pub(super) fn run(s: &Settings, dir: &mut RunDir) -> CliResult<(serde_json::Value, Vec<Check>)> {
    let path = s.input.as_ref().ok_or("wasserstein needs --input <pair.json>")?;
    let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut input: PairInput = serde_json::from_str(&text)?;
    input.clip = s.clip.or(input.clip).or(Some(1.0));
    let c = clip_threshold(input.clip.unwrap_or(1.0))?;
    let v = RealVector::new(input.v.clone())?;
    let p = Empirical::try_from(input.p.clone())?;
    let q = match &input.q {
        Some(q) => Empirical::try_from(q.clone())?,
        None => p.symmetrize(),
    };
    input.q = Some(EmpiricalJson::from(q.clone()));

    let w = wasserstein_clip(&v, c, &p, &q)?;
    let b = clipping_bias(&v, &p, &q, c)?;
    let stream = SeededStream::new(0, 0);
    let e_p = expected_clipped_inner(&v, &NoiseModel::Empirical(p.clone()), c, &stream, 0)?.mean;
    let e_q = expected_clipped_inner(&v, &NoiseModel::Empirical(q.clone()), c, &stream, 0)?.mean;
    let radius = c.value() * v.norm();

    let checks = vec![
        Check::new("bias_within_transport", b.abs() <= w + 1e-10, format!("|b| = {} <= W = {w}", b.abs())),
        Check::new("decomposition", (e_p - e_q - b).abs() <= 1e-10, format!("E_p - E_q - b = {}", e_p - e_q - b)),
        Check::new("transport_within_score_range", w <= 2.0 * radius + 1e-12, format!("W = {w} <= 2 c |v| = {}", 2.0 * radius)),
    ];
    let body = json!({
        "wasserstein": w,
        "bias": b,
        "e_p": e_p,
        "e_q": e_q,
        "c_times_grad_norm": radius,
        "scores_p": clip_scores(&v, &p, c)?,
        "scores_q": clip_scores(&v, &q, c)?,
    });
    let config = write_summary(dir, &input, body, &checks)?;
    Ok((config, checks))
}
