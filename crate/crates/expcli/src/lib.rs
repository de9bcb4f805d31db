//! Experiment runner for `rlvr-core`: TOML-configured trajectories, seed
//! sweeps, diagnostics at a fixed θ, and the acceptance suite.

pub mod config;
pub mod criteria;
pub mod diagnose;
pub mod instance;
pub mod output;
pub mod runner;
pub mod sweep;
pub mod verify;

pub const EXIT_OK: i32 = 0;
/// I/O and anything not covered below.
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;
