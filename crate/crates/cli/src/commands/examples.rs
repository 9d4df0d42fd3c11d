//! Noisy clipped SGD on the divergence examples and the mixture dataset,
//! with and without pre-clipping perturbation.

use clipbias::{dp_sgd, dp_sgd_perturbed, OptimizerConfig, Problem, RealVector, Trajectory};
use serde::Serialize;
use serde_json::json;

use super::{batch_of, clip_threshold, csv_bytes, write_summary, Check, ProblemChoice};
use crate::config::Settings;
use crate::output::RunDir;
use crate::CliResult;

#[derive(Debug, Serialize)]
struct ExamplesConfig {
    problem: String,
    seed: u64,
    data_seed: u64,
    alpha: f64,
    clip: f64,
    sigma: f64,
    k: f64,
    iters: usize,
    batch: usize,
    x0: f64,
}

fn resolve(s: &Settings) -> ExamplesConfig {
    let problem = s.problem.clone().unwrap_or_else(|| "1".into());
    let choice = ProblemChoice::parse(&problem);
    let big = choice.is_synthetic_scale();
    ExamplesConfig {
        seed: s.seed.unwrap_or(0),
        data_seed: s.data_seed.unwrap_or(0),
        alpha: s.alpha.unwrap_or(if big { 0.015 } else { 0.001 }),
        clip: s.clip.unwrap_or(1.0),
        sigma: s.sigma.unwrap_or(1.0),
        k: s.k.unwrap_or(0.0),
        iters: s.iters.unwrap_or(if big { 10_000 } else { 100_000 }),
        batch: s.batch.unwrap_or(1),
        x0: s.x0.unwrap_or(choice.default_x0()),
        problem,
    }
}

fn summarize(label: &str, traj: &Trajectory, problem: &dyn Problem) -> serde_json::Value {
    let opt = &problem.meta().optimum;
    let last = traj.last();
    json!({
        "run": label,
        "k": traj.config.k,
        "final_x": last.as_slice(),
        "final_distance": last.distance(opt).unwrap_or(f64::NAN),
        "final_gap": problem.gap(last).unwrap_or(f64::NAN),
        "settled_at": traj.fixed_point_step(100, 1e-3),
    })
}

fn step_check(label: &str, traj: &Trajectory) -> Check {
    let c = traj.config.clip.value();
    let alpha = traj.config.alpha;
    let worst = (0..traj.steps())
        .map(|t| {
            let step = traj.iterates[t + 1].distance(&traj.iterates[t]).unwrap_or(f64::INFINITY);
            step / (alpha * (c + traj.privacy_noise_norms[t]))
        })
        .fold(0.0f64, f64::max);
    Check::new(
        format!("{label}_step_bound"),
        worst <= 1.0 + 1e-12,
        format!("max |x_(t+1) - x_t| / (alpha (c + |Z_t|)) = {worst}"),
    )
}

pub(super) fn run(s: &Settings, dir: &mut RunDir) -> CliResult<(serde_json::Value, Vec<Check>)> {
    let cfg = resolve(s);
    let choice = ProblemChoice::parse(&cfg.problem);
    let problem = choice.build(cfg.data_seed)?;
    let x0 = RealVector::new(vec![cfg.x0; problem.dim()])?;
    let base = OptimizerConfig::new(cfg.alpha, clip_threshold(cfg.clip)?, cfg.iters, x0)
        .with_batch(batch_of(cfg.batch))
        .with_seed(cfg.seed)
        .with_sigma(cfg.sigma);

    let mut runs = Vec::new();
    let mut checks = Vec::new();
    let plain = dp_sgd(&problem, &base)?;
    dir.write("trajectory_k0.csv", &csv_bytes(|b| plain.write_csv(&problem, b))?)?;
    runs.push(summarize("k0", &plain, &problem));
    checks.push(step_check("k0", &plain));

    if cfg.k > 0.0 {
        let perturbed = dp_sgd_perturbed(&problem, &base.clone().with_k(cfg.k))?;
        dir.write("trajectory_perturbed.csv", &csv_bytes(|b| perturbed.write_csv(&problem, b))?)?;
        runs.push(summarize("perturbed", &perturbed, &problem));
        checks.push(step_check("perturbed", &perturbed));
    }

    let config = write_summary(dir, &cfg, json!({ "runs": runs }), &checks)?;
    Ok((config, checks))
}
