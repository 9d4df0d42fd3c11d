//! Clipped SGD followed by the per-step descent ledger and the symmetry
//! probes on the final per-sample gradient ensemble.

use clipbias::diagnostics::{descent_ledger, LedgerOptions, DEFAULT_Z};
use clipbias::probes::{
    sample_panels, cosine_histogram, project2d, symmetry_score, write_scatter_csv, Histogram, ProjectionProbe,
    Reflection, DEFAULT_BINS,
};
use clipbias::{clipped_sgd, OptimizerConfig, Problem, RealVector};
use serde::Serialize;
use serde_json::{json, Value};

use super::{batch_of, clip_threshold, csv_bytes, write_summary, Check, ProblemChoice};
use crate::config::Settings;
use crate::output::RunDir;
use crate::CliResult;

#[derive(Debug, Serialize)]
struct DiagnoseConfig {
    problem: String,
    seed: u64,
    data_seed: u64,
    clip: f64,
    iters: usize,
    alpha: f64,
    batch: usize,
    x0: f64,
    z: f64,
    wasserstein_every: usize,
    probes: usize,
    bins: usize,
}

fn resolve(s: &Settings) -> DiagnoseConfig {
    let problem = s.problem.clone().unwrap_or_else(|| "1".into());
    let choice = ProblemChoice::parse(&problem);
    let iters = s.iters.unwrap_or(10_000);
    DiagnoseConfig {
        seed: s.seed.unwrap_or(0),
        data_seed: s.data_seed.unwrap_or(0),
        clip: s.clip.unwrap_or(1.0),
        alpha: s.alpha.unwrap_or(1.0 / (iters.max(1) as f64).sqrt()),
        iters,
        batch: s.batch.unwrap_or(1),
        x0: s.x0.unwrap_or(choice.default_x0()),
        z: DEFAULT_Z,
        wasserstein_every: s.wasserstein_every.unwrap_or(100),
        probes: s.probes.unwrap_or(8),
        bins: s.bins.unwrap_or(DEFAULT_BINS),
        problem,
    }
}

fn hist_csv(dir: &mut RunDir, name: &str, h: &Histogram) -> CliResult<()> {
    dir.write(name, &csv_bytes(|b| h.write_csv(b))?)
}

/// Score or `null` with the reason, for probes that cannot run (one sample,
/// zero gradient, all points on the reflection point).
fn or_note<T: Serialize>(r: clipbias::Result<T>) -> Value {
    match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

pub(super) fn run(s: &Settings, dir: &mut RunDir) -> CliResult<(Value, Vec<Check>)> {
    let cfg = resolve(s);
    let choice = ProblemChoice::parse(&cfg.problem);
    let problem = choice.build(cfg.data_seed)?;
    let c = clip_threshold(cfg.clip)?;
    let x0 = RealVector::new(vec![cfg.x0; problem.dim()])?;
    let opt = OptimizerConfig::new(cfg.alpha, c, cfg.iters, x0)
        .with_batch(batch_of(cfg.batch))
        .with_seed(cfg.seed);
    let traj = clipped_sgd(&problem, &opt)?;
    dir.write("trajectory.csv", &csv_bytes(|b| traj.write_csv(&problem, b))?)?;

    let every = (cfg.wasserstein_every > 0).then_some(cfg.wasserstein_every);
    let ledger = descent_ledger(&traj, &problem, LedgerOptions { z: cfg.z, wasserstein_every: every })?;
    dir.write("ledger.csv", &csv_bytes(|b| ledger.write_csv(b))?)?;

    let mut checks = vec![
        Check::new(
            "ledger_inequality",
            ledger.holds,
            format!(
                "mean lhs {} + mean b_t {} <= {} + 3 SE ({})",
                ledger.mean_lhs, ledger.mean_bias, ledger.rhs, ledger.std_error
            ),
        ),
        Check::new(
            "descent_identity",
            ledger.pathwise_holds,
            format!("{} <= {}", ledger.pathwise_descent, ledger.pathwise_budget),
        ),
    ];
    let transport_violations = ledger
        .rows
        .iter()
        .filter(|r| r.w_bound.is_some_and(|w| -r.b_t > w + 1e-10))
        .count();
    checks.push(Check::new(
        "bias_within_transport",
        transport_violations == 0,
        format!("{transport_violations} steps with -b_t > W"),
    ));

    // Probes on the per-sample gradients at the final iterate.
    let x_t = traj.last();
    let grads = (0..problem.num_samples())
        .map(|i| problem.per_sample_gradient(x_t, i))
        .collect::<clipbias::Result<Vec<_>>>()?;
    let residuals = problem.noise_residuals(x_t)?.symmetrize();
    let mut probe_rows = Vec::new();
    let mut sym_violations = 0;
    for j in 0..cfg.probes as u64 {
        let probe_seed = cfg.seed.wrapping_add(j);
        let probe = ProjectionProbe::new(problem.dim(), probe_seed)?;
        let pts = project2d(&grads, &probe)?;
        dir.write(&format!("scatter_probe{probe_seed}.csv"), &csv_bytes(|b| write_scatter_csv(&pts, b))?)?;
        let sym_pts = project2d(residuals.atoms(), &probe)?;
        if let Ok(score) = symmetry_score(&sym_pts, cfg.bins, Reflection::Origin) {
            if score != 0.0 {
                sym_violations += 1;
            }
        }
        probe_rows.push(json!({
            "probe_seed": probe_seed,
            "symmetry_origin": or_note(symmetry_score(&pts, cfg.bins, Reflection::Origin)),
            "symmetry_mean": or_note(symmetry_score(&pts, cfg.bins, Reflection::Mean)),
        }));
    }
    checks.push(Check::new(
        "symmetrized_residuals_score_zero",
        sym_violations == 0,
        format!("{sym_violations} probes with a nonzero score"),
    ));

    let grad = problem.full_gradient(x_t)?;
    let cosine = match cosine_histogram(&grads, &grad, cfg.bins) {
        Ok(h) => {
            hist_csv(dir, "hist_cosine.csv", &h)?;
            json!({ "total": h.total() })
        }
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let stats = sample_panels(&grads, &grad, c, cfg.bins)?;
    hist_csv(dir, "hist_sample_norm.csv", &stats.sample_norm)?;
    hist_csv(dir, "hist_noise_norm.csv", &stats.noise_norm)?;
    hist_csv(dir, "hist_clipped_inner.csv", &stats.clipped_inner)?;
    hist_csv(dir, "hist_inner.csv", &stats.inner)?;

    let body = json!({
        "final_x": x_t.as_slice(),
        "final_distance": x_t.distance(&problem.meta().optimum)?,
        "ledger": {
            "steps": ledger.steps(),
            "mean_lhs": ledger.mean_lhs,
            "mean_bias": ledger.mean_bias,
            "rhs": ledger.rhs,
            "std_error": ledger.std_error,
            "holds": ledger.holds,
            "pathwise_descent": ledger.pathwise_descent,
            "pathwise_budget": ledger.pathwise_budget,
        },
        "probes": probe_rows,
        "cosine": cosine,
        "prob_term": stats.prob_term,
        "mean_inner": stats.mean_inner,
        "mean_clipped_inner": stats.mean_clipped_inner,
    });
    let config = write_summary(dir, &cfg, body, &checks)?;
    Ok((config, checks))
}
