//! Critic-free policy gradient (REINFORCE) and on-policy GRPO.
//!
//! Both algorithms select one prompt uniformly per iteration and ascend its
//! exact gradient; GRPO divides by the prompt's reward standard deviation.
//! Every iteration records the per-step improvement of the selected prompt
//! together with the lower bound the smoothness analysis guarantees for it.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{self, FeatureSet, PolicyError, PolicyParams, PromptStats};
use crate::rng::{stream_rng, STREAM_SELECTION};

/// Default lower clamp on `sqrt(V)` in the GRPO divisor.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Reinforce,
    Grpo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Reinforce => "reinforce",
            Algorithm::Grpo => "grpo",
        }
    }
}

/// `(M, R1, R2)` for the relaxed-assumption step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxedConstants {
    pub m: f64,
    pub r1: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1/X²` for REINFORCE, `1/(2X²)` for GRPO.
    TheoremDefault,
    /// `1/(max(1, M/2) X²)` for REINFORCE,
    /// `1/(2 max(R1, 5M/8) R2 X²)` for GRPO.
    Relaxed,
    Manual(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub step_rule: StepRule,
    pub horizon: usize,
    pub seed: u64,
    pub eps_floor: f64,
    pub relaxed: Option<RelaxedConstants>,
    /// Full per-prompt snapshots are kept every `snapshot_every` iterations
    /// (and always on the first and last).
    pub snapshot_every: usize,
}

impl TrainerConfig {
    pub fn new(algorithm: Algorithm, horizon: usize, seed: u64) -> Self {
        Self {
            algorithm,
            step_rule: StepRule::TheoremDefault,
            horizon,
            seed,
            eps_floor: DEFAULT_EPS_FLOOR,
            relaxed: None,
            snapshot_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.horizon == 0 {
            return Err(TrainerError::InvalidConfig("horizon must be ≥ 1".into()));
        }
        if !(self.eps_floor > 0.0) {
            return Err(TrainerError::InvalidConfig("eps_floor must be positive".into()));
        }
        if self.snapshot_every == 0 {
            return Err(TrainerError::InvalidConfig("snapshot_every must be ≥ 1".into()));
        }
        if let StepRule::Manual(eta) = self.step_rule {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(TrainerError::InvalidConfig(format!("manual step size must be positive, got {eta}")));
            }
        }
        if let Some(c) = self.relaxed {
            if !(c.m > 0.0 && c.r1 >= 1.0 && c.r2 >= 1.0) {
                return Err(TrainerError::InvalidConfig(
                    "relaxed constants need M > 0, R1 >= 1 and R2 >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainerError {
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
    #[error("relaxed step rule requires (M, R1, R2)")]
    MissingRelaxedConstants,
    #[error("X_max is zero; step size undefined")]
    ZeroFeatureScale,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("non-finite parameters at iteration {iteration}; last good iteration {last_good}")]
    NumericalAbort { iteration: usize, last_good: usize, last_params: Vec<f64> },
    #[error("trajectory log is empty")]
    EmptyLog,
}

/// Step size prescribed for `(algorithm, step_rule)`.
pub fn step_size(cfg: &TrainerConfig, fs: &FeatureSet) -> Result<f64, TrainerError> {
    let x2 = fs.x_max().powi(2);
    if let StepRule::Manual(eta) = cfg.step_rule {
        return Ok(eta);
    }
    if !(x2 > 0.0) {
        return Err(TrainerError::ZeroFeatureScale);
    }
    match (cfg.algorithm, cfg.step_rule) {
        (Algorithm::Reinforce, StepRule::TheoremDefault) => Ok(1.0 / x2),
        (Algorithm::Grpo, StepRule::TheoremDefault) => Ok(1.0 / (2.0 * x2)),
        (algorithm, StepRule::Relaxed) => {
            let c = cfg.relaxed.ok_or(TrainerError::MissingRelaxedConstants)?;
            Ok(match algorithm {
                Algorithm::Reinforce => 1.0 / (1f64.max(c.m / 2.0) * x2),
                Algorithm::Grpo => 1.0 / (2.0 * c.r1.max(5.0 * c.m / 8.0) * c.r2 * x2),
            })
        }
        (_, StepRule::Manual(_)) => unreachable!(),
    }
}

/// Uniform prompt selection keyed by `(seed, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptSelector {
    seed: u64,
}

impl PromptSelector {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Prompt index in `0..n` for iteration `t`; `n` must be at least one.
    pub fn select(&self, t: u64, n: usize) -> usize {
        assert!(n >= 1, "prompt selection needs n >= 1");
        stream_rng(self.seed, STREAM_SELECTION, t).random_range(0..n)
    }
}

/// `θ + η ∇J_i(θ)`.
pub fn reinforce_step(fs: &FeatureSet, p: &PolicyParams, i: usize, eta: f64) -> Result<PolicyParams, PolicyError> {
    let g = policy::policy_gradient(fs, p, i)?;
    p.shifted(&(g * eta))
}

/// `θ + η ∇J_i(θ) / max(sqrt(V), eps_floor)`; the flag reports whether the
/// floor was active.
pub fn grpo_step(
    fs: &FeatureSet,
    p: &PolicyParams,
    i: usize,
    eta: f64,
    eps_floor: f64,
) -> Result<(PolicyParams, bool), PolicyError> {
    let g = policy::grpo_gradient(fs, p, i, eps_floor)?;
    Ok((p.shifted(&(g.gradient * eta))?, g.floor_active))
}

/// Per-prompt state at one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSnapshot {
    pub objective: f64,
    pub grad_sq: f64,
    pub success: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Iteration index, `1..=T`.
    pub t: usize,
    pub selected: usize,
    /// Base step size `η`.
    pub eta: f64,
    /// Step applied to `∇J`: `η` for REINFORCE, `η / max(sqrt(V), eps)` for GRPO.
    pub eta_effective: f64,
    /// `‖∇J_{i_t}(θ_{t-1})‖²`.
    pub grad_sq_selected: f64,
    /// `V` of the selected prompt at `θ_{t-1}`.
    pub variance_selected: f64,
    /// `J_{i_t}(θ_t) - J_{i_t}(θ_{t-1})`.
    pub improvement: f64,
    /// Improvement minus the guaranteed per-step lower bound; `None` when the
    /// configuration carries no guarantee.
    pub bound_slack: Option<f64>,
    /// Slack against the alternative relaxed-GRPO constant `max(R1 R2, M/2)`.
    pub bound_slack_alt: Option<f64>,
    pub variance_flag: bool,
    /// `‖θ_t - θ_{t-1}‖`.
    pub displacement: f64,
    /// `sqrt(V_{t-1}) / X_max`, the local smoothness ball for the selected prompt.
    pub ball_radius: f64,
    /// `max_{l ≠ i_t} |J_l(θ_t) - J_l(θ_{t-1})|`.
    pub max_offtarget_change: f64,
    /// `min_{l ≠ i_t} (J_l(θ_t) - J_l(θ_{t-1}))`.
    pub min_offtarget_change: f64,
    /// Mean of `sqrt(V)` over prompts at `θ_{t-1}`.
    pub mean_std_dev: f64,
    /// Mean and minimum of `J_i(θ_t)` over prompts.
    pub mean_objective: f64,
    pub min_objective: f64,
    /// Per-prompt state at `θ_{t-1}` on snapshot iterations.
    pub snapshot: Option<Vec<PromptSnapshot>>,
    /// `J_i(θ_t)` per prompt on snapshot iterations.
    pub objectives_after: Option<Vec<f64>>,
    /// `θ_{t-1}` on snapshot iterations.
    pub theta_before: Option<PolicyParams>,
}

/// Running per-prompt sums over `t = 0..T-1` (parameters before each step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTotals {
    pub grad_sq_sum: Vec<f64>,
    pub grad_sq_min: Vec<f64>,
    pub std_dev_sum: Vec<f64>,
    /// Sum over iterations selecting the prompt of the guaranteed per-step gain.
    pub certified_gain: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub config: TrainerConfig,
    pub eta: f64,
    pub x_max: f64,
    pub initial: Vec<PromptSnapshot>,
    pub records: Vec<IterationRecord>,
    pub totals: PromptTotals,
    pub final_params: PolicyParams,
    pub final_snapshot: Vec<PromptSnapshot>,
}

impl TrajectoryLog {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    /// First iteration `t` (0 meaning `θ_0` itself) whose mean objective
    /// reaches `threshold`.
    pub fn iterations_to_threshold(&self, threshold: f64) -> Option<usize> {
        let n = self.initial.len() as f64;
        let start = self.initial.iter().map(|s| s.objective).sum::<f64>() / n;
        if start >= threshold {
            return Some(0);
        }
        self.records.iter().find(|r| r.mean_objective >= threshold).map(|r| r.t)
    }
}

struct Evaluated {
    stats: PromptStats,
    gradient: DVector<f64>,
}

fn evaluate_all(fs: &FeatureSet, p: &PolicyParams) -> Result<Vec<Evaluated>, PolicyError> {
    (0..fs.n())
        .map(|i| {
            let stats = policy::prompt_stats(fs, p, i)?;
            let gradient = policy::gradient_from_stats(fs, i, &stats);
            Ok(Evaluated { stats, gradient })
        })
        .collect()
}

fn snapshot_of(e: &Evaluated) -> PromptSnapshot {
    PromptSnapshot {
        objective: e.stats.objective,
        grad_sq: e.gradient.norm_squared(),
        success: e.stats.success,
        variance: e.stats.variance,
    }
}

/// Guaranteed per-step gain coefficients `c` in `ΔJ >= c ‖∇J‖²`.
struct StepGuarantee {
    primary: Option<f64>,
    alternative: Option<f64>,
}

fn guarantee(
    cfg: &TrainerConfig,
    eta: f64,
    x_max: f64,
    std_dev: f64,
    displacement: f64,
    floor_active: bool,
) -> StepGuarantee {
    let x2 = x_max * x_max;
    match cfg.algorithm {
        Algorithm::Reinforce => {
            let primary = match cfg.step_rule {
                StepRule::TheoremDefault => 1.0 / (2.0 * x2),
                StepRule::Relaxed => {
                    let c = cfg.relaxed.expect("validated");
                    1.0 / (2.0 * 1f64.max(c.m / 2.0) * x2)
                }
                // global X_max²-smoothness
                StepRule::Manual(_) => eta - 0.5 * x2 * eta * eta,
            };
            StepGuarantee { primary: Some(primary), alternative: None }
        }
        Algorithm::Grpo => {
            // local smoothness (5/2) X² sqrt(V) holds only inside the ball
            if floor_active || std_dev == 0.0 || displacement > std_dev / x_max {
                return StepGuarantee { primary: None, alternative: None };
            }
            match cfg.step_rule {
                StepRule::TheoremDefault => StepGuarantee {
                    primary: Some(3.0 / (16.0 * x2 * std_dev)),
                    alternative: None,
                },
                StepRule::Relaxed => {
                    let c = cfg.relaxed.expect("validated");
                    let stated = c.r1.max(5.0 * c.m / 8.0) * c.r2;
                    let proof = (c.r1 * c.r2).max(c.m / 2.0);
                    StepGuarantee {
                        primary: Some(3.0 / (16.0 * stated * x2 * std_dev)),
                        alternative: Some(3.0 / (16.0 * proof * x2 * std_dev)),
                    }
                }
                StepRule::Manual(_) => StepGuarantee {
                    primary: Some((eta - 1.25 * x2 * eta * eta) / std_dev),
                    alternative: None,
                },
            }
        }
    }
}

/// `c ‖g‖²`, zero for a zero gradient even when `c` is infinite.
fn certified(c: f64, grad_sq: f64) -> f64 {
    if grad_sq == 0.0 {
        0.0
    } else {
        c * grad_sq
    }
}

/// Runs `T` iterations from `θ0`.
pub fn run_trajectory(cfg: &TrainerConfig, fs: &FeatureSet, theta0: &PolicyParams) -> Result<TrajectoryLog, TrainerError> {
    cfg.validate()?;
    if theta0.len() != fs.d() {
        return Err(PolicyError::ParamLength { got: theta0.len(), expected: fs.d() }.into());
    }
    let eta = step_size(cfg, fs)?;
    let n = fs.n();
    let x_max = fs.x_max();
    let selector = PromptSelector::new(cfg.seed);

    let mut theta = theta0.clone();
    let mut current = evaluate_all(fs, &theta)?;
    let initial: Vec<PromptSnapshot> = current.iter().map(snapshot_of).collect();
    let mut totals = PromptTotals {
        grad_sq_sum: vec![0.0; n],
        grad_sq_min: vec![f64::INFINITY; n],
        std_dev_sum: vec![0.0; n],
        certified_gain: vec![0.0; n],
    };
    let mut records = Vec::with_capacity(cfg.horizon);

    for t in 1..=cfg.horizon {
        let i = selector.select(t as u64, n);
        for (l, e) in current.iter().enumerate() {
            let g2 = e.gradient.norm_squared();
            totals.grad_sq_sum[l] += g2;
            totals.grad_sq_min[l] = totals.grad_sq_min[l].min(g2);
            totals.std_dev_sum[l] += e.stats.std_dev();
        }
        let mean_std_dev = current.iter().map(|e| e.stats.std_dev()).sum::<f64>() / n as f64;

        let selected = &current[i];
        let std_dev = selected.stats.std_dev();
        let (eta_effective, floor_active) = match cfg.algorithm {
            Algorithm::Reinforce => (eta, false),
            Algorithm::Grpo => (eta / std_dev.max(cfg.eps_floor), std_dev < cfg.eps_floor),
        };
        let step = &selected.gradient * eta_effective;
        let next = match theta.shifted(&step) {
            Ok(p) => p,
            Err(_) => {
                return Err(TrainerError::NumericalAbort {
                    iteration: t,
                    last_good: t - 1,
                    last_params: theta.theta().as_slice().to_vec(),
                })
            }
        };
        let evaluated = evaluate_all(fs, &next).map_err(|_| TrainerError::NumericalAbort {
            iteration: t,
            last_good: t - 1,
            last_params: theta.theta().as_slice().to_vec(),
        })?;

        let grad_sq = selected.gradient.norm_squared();
        let improvement = PromptStats::objective_change(&selected.stats, &evaluated[i].stats);
        let displacement = step.norm();
        let g = guarantee(cfg, eta, x_max, std_dev, displacement, floor_active);
        if let Some(c) = g.primary {
            totals.certified_gain[i] += certified(c, grad_sq);
        }

        let mut max_off = 0.0f64;
        let mut min_off = f64::INFINITY;
        for l in (0..n).filter(|&l| l != i) {
            let delta = PromptStats::objective_change(&current[l].stats, &evaluated[l].stats);
            max_off = max_off.max(delta.abs());
            min_off = min_off.min(delta);
        }
        if n == 1 {
            min_off = 0.0;
        }
        let mean_objective = evaluated.iter().map(|e| e.stats.objective).sum::<f64>() / n as f64;
        let min_objective = evaluated.iter().map(|e| e.stats.objective).fold(f64::INFINITY, f64::min);
        let keep = t == 1 || t == cfg.horizon || t % cfg.snapshot_every == 0;

        records.push(IterationRecord {
            t,
            selected: i,
            eta,
            eta_effective,
            grad_sq_selected: grad_sq,
            variance_selected: selected.stats.variance,
            improvement,
            bound_slack: g.primary.map(|c| improvement - certified(c, grad_sq)),
            bound_slack_alt: g.alternative.map(|c| improvement - certified(c, grad_sq)),
            variance_flag: floor_active,
            displacement,
            ball_radius: std_dev / x_max,
            max_offtarget_change: max_off,
            min_offtarget_change: min_off,
            mean_std_dev,
            mean_objective,
            min_objective,
            snapshot: keep.then(|| current.iter().map(snapshot_of).collect()),
            objectives_after: keep.then(|| evaluated.iter().map(|e| e.stats.objective).collect()),
            theta_before: keep.then(|| theta.clone()),
        });
        theta = next;
        current = evaluated;
    }

    Ok(TrajectoryLog {
        config: cfg.clone(),
        eta,
        x_max,
        initial,
        records,
        totals,
        final_params: theta,
        final_snapshot: current.iter().map(snapshot_of).collect(),
    })
}

/// Cumulative squared-gradient bound for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeBound {
    pub prompt: usize,
    /// `Σ_{t<T} ‖∇J_i(θ_t)‖²`.
    pub grad_sq_sum: f64,
    /// Right-hand side of the cumulative bound for the configured algorithm
    /// and step rule.
    pub rhs: f64,
    pub passed: bool,
    /// `C(i,T) = (8/(3T)) Σ_t sqrt(V_t(i))`; `None` for REINFORCE.
    pub c_i_t: Option<f64>,
    /// `min_t ‖∇J_i(θ_t)‖²` against `rhs / T`.
    pub grad_sq_min: f64,
    pub min_form_passed: bool,
    /// Accumulated guaranteed per-step gains against `1 - π*_{θ0}(i)`.
    pub certified_gain: f64,
    pub telescoped_passed: bool,
    /// `(8/(3T)) Σ_t sqrt(V_{t-1}(i_t))`, the selected-prompt reading of
    /// `C_{i_t}`; `None` for REINFORCE.
    pub c_selected: Option<f64>,
    /// Gradient sum against `base * c_selected`.
    pub selected_form_passed: Option<bool>,
}

/// Per-prompt cumulative bounds over the whole log.
///
/// REINFORCE: `2n(1 - π*_{θ0}(i)) X² · κ` with `κ = 1` (or `max(1, M/2)` under
/// the relaxed rule). GRPO: the same times `C(i,T)` (and `max(R1, 5M/8) R2`
/// under the relaxed rule), with `C_{i_t}` estimated by the realized
/// `sqrt(V_t(i))`.
pub fn cumulative_bound_check(log: &TrajectoryLog, fs: &FeatureSet) -> Result<Vec<CumulativeBound>, TrainerError> {
    let horizon = log.horizon();
    if horizon == 0 {
        return Err(TrainerError::EmptyLog);
    }
    let n = fs.n() as f64;
    let x2 = log.x_max * log.x_max;
    let cfg = &log.config;
    let c_selected = match cfg.algorithm {
        Algorithm::Reinforce => None,
        Algorithm::Grpo => Some(
            8.0 / (3.0 * horizon as f64) * log.records.iter().map(|r| r.variance_selected.sqrt()).sum::<f64>(),
        ),
    };
    let factor = match (cfg.algorithm, cfg.step_rule, cfg.relaxed) {
        (Algorithm::Reinforce, StepRule::Relaxed, Some(c)) => 1f64.max(c.m / 2.0),
        (Algorithm::Grpo, StepRule::Relaxed, Some(c)) => c.r1.max(5.0 * c.m / 8.0) * c.r2,
        _ => 1.0,
    };
    Ok((0..fs.n())
        .map(|i| {
            let start_gap = 1.0 - log.initial[i].success;
            let base = 2.0 * n * start_gap.max(0.0) * x2 * factor;
            let c_i_t = match cfg.algorithm {
                Algorithm::Reinforce => None,
                Algorithm::Grpo => Some(8.0 / (3.0 * horizon as f64) * log.totals.std_dev_sum[i]),
            };
            let rhs = base * c_i_t.unwrap_or(1.0);
            let grad_sq_sum = log.totals.grad_sq_sum[i];
            let grad_sq_min = log.totals.grad_sq_min[i];
            let certified_gain = log.totals.certified_gain[i];
            CumulativeBound {
                prompt: i,
                grad_sq_sum,
                rhs,
                passed: grad_sq_sum <= rhs,
                c_i_t,
                grad_sq_min,
                min_form_passed: grad_sq_min <= rhs / horizon as f64,
                certified_gain,
                telescoped_passed: certified_gain <= start_gap,
                c_selected,
                selected_form_passed: c_selected.map(|c| grad_sq_sum <= base * c),
            }
        })
        .collect())
}
