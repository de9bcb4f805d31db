//! The `run` subcommand: one trajectory, its CSV log, JSON summary and plots.

use std::path::{Path, PathBuf};

use rlvr_core::diagnostics::{self, AssumptionReport, DiagnosticsError, FisherReport, CurvatureBoundRow, Phase};
use rlvr_core::scenarios::Scenario;
use rlvr_core::trainers::{self, CumulativeBound, TrainerError};
use rlvr_core::{Algorithm, FeatureSet, PolicyParams, TrajectoryLog};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Format, Report};
use crate::instance::{build_scenario, InstanceError};
use crate::output::{line_plot_svg, trajectory_csv};

pub const TOOL_NAME: &str = "rlvr-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const J_MEAN_SVG: &str = "j_mean.svg";
pub const SLACK_SVG: &str = "bound_slack.svg";

/// Upper bound on phase-timeline points per run.
const PHASE_POINTS: usize = 100;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("numerical abort at iteration {iteration} (last good iteration {last_good})")]
    NumericalAbort { iteration: usize, last_good: usize },
    #[error(transparent)]
    Trainer(TrainerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl From<TrainerError> for RunError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::NumericalAbort { iteration, last_good, .. } => RunError::NumericalAbort { iteration, last_good },
            TrainerError::InvalidConfig(m) => RunError::Config(ConfigError::Invalid(m)),
            TrainerError::MissingRelaxedConstants | TrainerError::ZeroFeatureScale => {
                RunError::Config(ConfigError::Invalid(e.to_string()))
            }
            other => RunError::Trainer(other),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Read { .. }) | RunError::Instance(InstanceError::Read { .. }) => crate::EXIT_OTHER,
            RunError::Config(_) | RunError::Instance(_) | RunError::Usage(_) => crate::EXIT_CONFIG,
            RunError::NumericalAbort { .. } => crate::EXIT_NUMERICAL,
            _ => crate::EXIT_OTHER,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerStepSummary {
    /// Iterations carrying a per-step guarantee.
    pub checked: usize,
    pub unguaranteed: usize,
    /// Iterations with negative slack.
    pub violations: usize,
    pub min_slack: Option<f64>,
    pub min_slack_alt: Option<f64>,
    pub max_offtarget_change: f64,
    /// GRPO steps leaving the local smoothness ball.
    pub ball_exits: usize,
    pub variance_flags: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CumulativeSummary {
    pub algorithm: Algorithm,
    pub all_passed: bool,
    pub min_form_all_passed: bool,
    pub telescoped_all_passed: bool,
    pub selected_form_all_passed: Option<bool>,
    pub prompts: Vec<CumulativeBound>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhasePoint {
    pub t: usize,
    pub cos_mean: f64,
    pub cos_std: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub x_max: f64,
    pub eta: f64,
    pub horizon: usize,
    pub initial_mean_objective: f64,
    pub final_mean_objective: f64,
    pub final_min_objective: f64,
    pub threshold: f64,
    /// First `t` with mean objective at or above the threshold; `None` when
    /// unreached within the horizon.
    pub iterations_to_threshold: Option<usize>,
    pub c_of_t: f64,
    pub c_at_threshold: Option<f64>,
    pub c_windowed: Vec<(usize, f64)>,
    /// `Σ_i Σ_t ‖∇J_i(θ_t)‖²`.
    pub grad_sq_total: f64,
    pub per_step: PerStepSummary,
    pub cumulative: Option<CumulativeSummary>,
    pub phase_timeline: Vec<PhasePoint>,
    pub assumptions: Option<AssumptionReport>,
    pub lemma: Option<Vec<CurvatureBoundRow>>,
    pub fisher: Option<FisherReport>,
}

/// Everything a run produces, rendered in memory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub csv: Option<String>,
    pub json: Option<String>,
    pub svgs: Vec<(&'static str, String)>,
}

impl RunArtifacts {
    /// Writes every rendered artifact into `dir`; returns the paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: &str| -> Result<(), RunError> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| RunError::Io { path: path.clone(), source })?;
            written.push(path);
            Ok(())
        };
        if let Some(csv) = &self.csv {
            put(CSV_FILE, csv)?;
        }
        if let Some(json) = &self.json {
            put(SUMMARY_FILE, json)?;
        }
        for (name, body) in &self.svgs {
            put(name, body)?;
        }
        Ok(written)
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let echo = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(echo.as_bytes()))
}

fn phase_timeline(cfg: &ExperimentConfig, fs: &FeatureSet, log: &TrajectoryLog) -> Vec<PhasePoint> {
    if fs.n() < 2 {
        return Vec::new();
    }
    let every = log.config.snapshot_every;
    let stride = every * log.horizon().div_ceil(PHASE_POINTS * every).max(1);
    let thresholds = cfg.diagnostics.thresholds();
    let mut points: Vec<(usize, &PolicyParams)> = log
        .records
        .iter()
        .filter(|r| r.t == 1 || r.t % stride == 0)
        .filter_map(|r| r.theta_before.as_ref().map(|p| (r.t - 1, p)))
        .collect();
    points.push((log.horizon(), &log.final_params));
    points
        .into_iter()
        .filter_map(|(t, p)| {
            let c = diagnostics::pairwise_grad_cosines(fs, p).ok()?;
            Some(PhasePoint { t, cos_mean: c.cos_mean, cos_std: c.cos_std, phase: diagnostics::phase_classify(c.cos_std, thresholds) })
        })
        .collect()
}

fn per_step_summary(log: &TrajectoryLog) -> PerStepSummary {
    let slacks: Vec<f64> = log.records.iter().filter_map(|r| r.bound_slack).collect();
    let alt: Vec<f64> = log.records.iter().filter_map(|r| r.bound_slack_alt).collect();
    let min = |v: &[f64]| v.iter().copied().reduce(f64::min);
    PerStepSummary {
        checked: slacks.len(),
        unguaranteed: log.records.len() - slacks.len(),
        violations: slacks.iter().filter(|s| **s < 0.0).count(),
        min_slack: min(&slacks),
        min_slack_alt: min(&alt),
        max_offtarget_change: log.records.iter().map(|r| r.max_offtarget_change).fold(0.0, f64::max),
        ball_exits: match log.config.algorithm {
            Algorithm::Grpo => log.records.iter().filter(|r| r.displacement > r.ball_radius).count(),
            Algorithm::Reinforce => 0,
        },
        variance_flags: log.records.iter().filter(|r| r.variance_flag).count(),
    }
}

/// Runs the experiment on a prepared scenario and renders all artifacts.
pub fn run_scenario(cfg: &ExperimentConfig, sc: &Scenario) -> Result<RunArtifacts, RunError> {
    let tcfg = cfg.trainer_config();
    let fs = &sc.features;
    let log = trainers::run_trajectory(&tcfg, fs, &sc.theta0)?;
    let diag = &cfg.diagnostics;

    let c = diagnostics::c_constant(&log)?;
    let iterations_to_threshold = log.iterations_to_threshold(diag.threshold);
    let c_at_threshold = match iterations_to_threshold {
        Some(t) if t >= 1 => Some(diagnostics::c_prefix(&log, t)?),
        _ => None,
    };
    let cumulative = if diag.wants(Report::Cumulative) {
        let prompts = trainers::cumulative_bound_check(&log, fs)?;
        let selected = prompts.iter().map(|b| b.selected_form_passed).collect::<Option<Vec<bool>>>();
        Some(CumulativeSummary {
            algorithm: tcfg.algorithm,
            all_passed: prompts.iter().all(|b| b.passed),
            min_form_all_passed: prompts.iter().all(|b| b.min_form_passed),
            telescoped_all_passed: prompts.iter().all(|b| b.telescoped_passed),
            selected_form_all_passed: selected.map(|v| v.iter().all(|&b| b)),
            prompts,
        })
    } else {
        None
    };
    let assumptions = if diag.wants(Report::Assumptions) && fs.n() >= 2 {
        Some(diagnostics::assumption_report(fs, &sc.theta0, Some(&log), diag.thresholds())?)
    } else {
        None
    };
    let lemma = if diag.wants(Report::Lemma) {
        Some(diagnostics::lemma_bound_report(fs, &sc.theta0, diag.ball_samples, tcfg.seed)?)
    } else {
        None
    };
    let fisher = if diag.wants(Report::Fisher) && fs.n() >= 3 {
        Some(diagnostics::curvature_variance_correlation(fs, &sc.theta0, diag.fisher_batch, tcfg.seed, diag.permutations)?)
    } else {
        None
    };

    let n = fs.n() as f64;
    let summary = RunSummary {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        config_sha256: config_hash(cfg),
        config: cfg.clone(),
        n: fs.n(),
        k: fs.k(),
        d: fs.d(),
        x_max: fs.x_max(),
        eta: log.eta,
        horizon: log.horizon(),
        initial_mean_objective: log.initial.iter().map(|s| s.objective).sum::<f64>() / n,
        final_mean_objective: log.final_snapshot.iter().map(|s| s.objective).sum::<f64>() / n,
        final_min_objective: log.final_snapshot.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min),
        threshold: diag.threshold,
        iterations_to_threshold,
        c_of_t: c.aggregate,
        c_at_threshold,
        c_windowed: diagnostics::c_windowed(&log, diag.c_window)?,
        grad_sq_total: log.totals.grad_sq_sum.iter().sum(),
        per_step: per_step_summary(&log),
        cumulative,
        phase_timeline: phase_timeline(cfg, fs, &log),
        assumptions,
        lemma,
        fisher,
    };

    let csv = cfg.wants_format(Format::Csv).then(|| trajectory_csv(&log, diag.wide_columns));
    let json = cfg.wants_format(Format::Json).then(|| {
        let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
        s.push('\n');
        s
    });
    let mut svgs = Vec::new();
    if cfg.wants_format(Format::Svg) {
        let j: Vec<(f64, f64)> = log.records.iter().map(|r| (r.t as f64, r.mean_objective)).collect();
        svgs.push((J_MEAN_SVG, line_plot_svg("mean objective", "t", "J_mean", &j)));
        let s: Vec<(f64, f64)> =
            log.records.iter().filter_map(|r| r.bound_slack.map(|v| (r.t as f64, v))).collect();
        svgs.push((SLACK_SVG, line_plot_svg("per-step bound slack", "t", "bound_slack", &s)));
    }
    Ok(RunArtifacts { summary, csv, json, svgs })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts, RunError> {
    let sc = build_scenario(&cfg.scenario)?;
    run_scenario(cfg, &sc)
}
