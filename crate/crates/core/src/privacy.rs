//! Gaussian-mechanism noise calibration for DP-SGD.
//!
//! The constants `u` and `v` are configuration inputs (default 1). A sigma
//! produced here is "calibrated under the configured v"; no accountant runs
//! behind it, so it is not by itself a verified privacy guarantee.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::ClipThreshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    /// Dataset size.
    pub n: usize,
    pub iterations: usize,
    pub batch: usize,
    pub u: f64,
    pub v: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, n: usize, iterations: usize, batch: usize) -> Result<Self> {
        let b = Self {
            epsilon,
            delta,
            n,
            iterations,
            batch,
            u: 1.0,
            v: 1.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_constants(mut self, u: f64, v: f64) -> Result<Self> {
        self.u = u;
        self.v = v;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidBudget(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.n == 0 || self.iterations == 0 || self.batch == 0 {
            return bad("n, iterations and batch must be >= 1".into());
        }
        if self.batch > self.n {
            return bad(format!("batch {} exceeds dataset size {}", self.batch, self.n));
        }
        if !(self.u > 0.0 && self.u.is_finite() && self.v > 0.0 && self.v.is_finite()) {
            return bad("constants u and v must be positive".into());
        }
        Ok(())
    }

    /// Sampling ratio `m / n`.
    pub fn sampling_ratio(&self) -> f64 {
        self.batch as f64 / self.n as f64
    }
}

/// `sigma = sqrt(v c^2 T ln(1/delta) / (n^2 eps^2))`.
pub fn calibrate_sigma(budget: &PrivacyBudget, c: ClipThreshold) -> Result<f64> {
    budget.validate()?;
    let c = c.value();
    if !c.is_finite() {
        return Err(Error::InvalidBudget("noise calibration needs a finite clip threshold".into()));
    }
    let n = budget.n as f64;
    let var = budget.v * c * c * budget.iterations as f64 * (1.0 / budget.delta).ln()
        / (n * n * budget.epsilon * budget.epsilon);
    Ok(var.sqrt())
}

/// `eps <= u (m/n)^2 T`.
pub fn check_epsilon_regime(budget: &PrivacyBudget) -> Result<bool> {
    budget.validate()?;
    let q = budget.sampling_ratio();
    Ok(budget.epsilon <= budget.u * q * q * budget.iterations as f64)
}
