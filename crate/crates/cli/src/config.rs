//! Run configuration: an optional JSON file whose keys mirror the long flag
//! names (dashes become underscores). Flags win over the file; anything left
//! unset falls back to the per-command default.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliResult;

/// Every tunable knob. `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Master seed for every random stream of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Clip threshold c.
    #[arg(long, global = true)]
    pub clip: Option<f64>,
    /// Step size.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Scale of the per-sample perturbation added before clipping.
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Std of the privacy noise added to the clipped mean.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Number of iterations T.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Minibatch size; 0 means full batch.
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Starting point, broadcast to every coordinate.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// `1`, `2`, `synthetic`, or a path to a JSON file of centers.
    #[arg(long, global = true)]
    pub problem: Option<String>,
    /// Seed for the synthetic mixture dataset.
    #[arg(long, global = true)]
    pub data_seed: Option<u64>,
    /// Input JSON for `wasserstein`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Include the large table cells.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub extended: Option<bool>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Dataset size for privacy calibration.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Constant v of the noise calibration.
    #[arg(long, global = true)]
    pub vconst: Option<f64>,
    /// Constant u of the epsilon regime check.
    #[arg(long, global = true)]
    pub uconst: Option<f64>,
    /// Initial optimality gap D_f, for the step-size rule in `calibrate`.
    #[arg(long, global = true)]
    pub gap: Option<f64>,
    /// Problem dimension, for the step-size rule in `calibrate`.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Compute the transport bound on every n-th ledger step.
    #[arg(long, global = true)]
    pub wasserstein_every: Option<usize>,
    /// Number of random projections in `diagnose`.
    #[arg(long, global = true)]
    pub probes: Option<usize>,
    /// Histogram bin count.
    #[arg(long, global = true)]
    pub bins: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        Settings { $($field: $top.$field.clone().or($base.$field.clone()),)* }
    };
}

impl Settings {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()).into())
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(&self, top: &Settings) -> Settings {
        overlay!(
            self, top, seed, samples, clip, alpha, k, sigma, iters, batch, x0, problem, data_seed, input, extended,
            epsilon, delta, n, vconst, uconst, gap, dim, wasserstein_every, probes, bins
        )
    }
}
