//! Clipped SGD and DP-SGD on small quadratic problems, together with exact
//! diagnostics of the bias that per-sample clipping introduces.
//!
//! Finite noise distributions are handled with exact weighted sums; Monte
//! Carlo is reserved for Gaussian components and runs on a counter-based
//! RNG, so results do not depend on thread count.

pub mod diagnostics;
pub mod error;
pub mod noise;
pub mod optim;
pub mod privacy;
pub mod probes;
pub mod problems;
pub mod rng;
pub mod stats;
pub mod vector;

pub use error::{Error, Result};
pub use noise::{perturb, Empirical, EmpiricalJson, MixtureComponent, NoiseModel, SphericalMixture};
pub use optim::{clipped_sgd, dp_sgd, dp_sgd_perturbed, Batch, OptimizerConfig, Trajectory};
pub use privacy::{calibrate_sigma, check_epsilon_regime, PrivacyBudget};
pub use problems::{make_example1, make_example2, make_synthetic_mixture, Problem, QuadraticProblem};
pub use rng::SeededStream;
pub use stats::Estimate;
pub use vector::{clip, cosine, inner, norm, ClipThreshold, RealVector};
