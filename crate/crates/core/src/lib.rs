//! Exact-gradient policy optimization for log-linear softmax policies with
//! one-hot verifiable rewards.
//!
//! The crate is organised bottom-up:
//!
//! - [`policy`]: probabilities, objectives, gradients and Hessians of the
//!   per-prompt success probability under `softmax(X_i θ)`.
//! - [`linalg`]: spectral norms of symmetric matrices.
//! - [`rng`]: counter-based random streams keyed by `(seed, stream, counter)`.
//! - [`scenarios`]: problem instances (block-orthogonal, random, difficulty
//!   profiles).
//! - [`trainers`]: REINFORCE and on-policy GRPO with per-iteration
//!   instrumentation and the per-step / cumulative bound checks.
//! - [`diagnostics`]: measured assumption constants, Fisher proxy,
//!   curvature/variance correlation, curvature-bound slack and phase labels.
//! - [`oracle`]: brute-force references (finite differences, enumeration,
//!   Jacobi eigensolve, the scalar `f(a)` analysis).

pub mod diagnostics;
pub mod linalg;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod scenarios;
pub mod trainers;

pub use policy::{FeatureSet, PolicyError, PolicyParams, PromptStats};
pub use trainers::{
    Algorithm, IterationRecord, RelaxedConstants, StepRule, TrainerConfig, TrajectoryLog,
};
