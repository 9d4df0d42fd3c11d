//! Privacy arithmetic: noise scale for a budget, the small-epsilon regime
//! check and, given `--gap` and `--dim`, the matching step size.

use clipbias::optim::dp_step_size;
use clipbias::{calibrate_sigma, check_epsilon_regime, PrivacyBudget};
use serde::Serialize;
use serde_json::json;

use super::{clip_threshold, write_summary, Check};
use crate::config::Settings;
use crate::output::RunDir;
use crate::CliResult;

#[derive(Debug, Serialize)]
struct CalibrateConfig {
    epsilon: f64,
    delta: f64,
    n: usize,
    iters: usize,
    batch: usize,
    clip: f64,
    vconst: f64,
    uconst: f64,
    gap: Option<f64>,
    dim: Option<usize>,
    smoothness: f64,
}

fn required<T: Copy>(v: Option<T>, name: &str) -> CliResult<T> {
    v.ok_or_else(|| format!("calibrate needs --{name}").into())
}

pub(super) fn run(s: &Settings, dir: &mut RunDir) -> CliResult<(serde_json::Value, Vec<Check>)> {
    let cfg = CalibrateConfig {
        epsilon: required(s.epsilon, "epsilon")?,
        delta: required(s.delta, "delta")?,
        n: required(s.n, "n")?,
        iters: required(s.iters, "iters")?,
        batch: s.batch.unwrap_or(1),
        clip: s.clip.unwrap_or(1.0),
        vconst: s.vconst.unwrap_or(1.0),
        uconst: s.uconst.unwrap_or(1.0),
        gap: s.gap,
        dim: s.dim,
        smoothness: 1.0,
    };
    let c = clip_threshold(cfg.clip)?;
    let budget = PrivacyBudget::new(cfg.epsilon, cfg.delta, cfg.n, cfg.iters, cfg.batch)?
        .with_constants(cfg.uconst, cfg.vconst)?;
    let sigma = calibrate_sigma(&budget, c)?;
    let regime = check_epsilon_regime(&budget)?;
    let step = match (cfg.gap, cfg.dim) {
        (Some(gap), Some(dim)) => Some(dp_step_size(gap, dim, &budget, c, cfg.smoothness)?),
        _ => None,
    };
    let q = budget.sampling_ratio();
    let checks = vec![Check::new(
        "epsilon_regime",
        regime,
        format!(
            "epsilon {} <= u (m/n)^2 T = {}",
            cfg.epsilon,
            cfg.uconst * q * q * cfg.iters as f64
        ),
    )];
    let body = json!({
        "sigma": sigma,
        "sigma_squared": sigma * sigma,
        "sampling_ratio": q,
        "epsilon_regime_ok": regime,
        "step_size": step,
        "note": "sigma is calibrated under the configured constant v; no privacy accountant is run",
    });
    let config = write_summary(dir, &cfg, body, &checks)?;
    Ok((config, checks))
}
