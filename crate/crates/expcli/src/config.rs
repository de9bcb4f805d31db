//! TOML experiment configuration.
//!
//! Parsing is strict: every key is checked against the tables below before
//! deserialization, and unknown keys are rejected with the nearest valid key.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `scenario.generator` | required | `orthogonal_blocks`, `congruent_blocks`, `random_features`, `difficulty_preset`, `instance` |
//! | `scenario.seed` | `0` | scenario stream seed |
//! | `scenario.n` | `8` (`6` for the preset) | number of prompts |
//! | `scenario.k` | `4` | outputs per prompt |
//! | `scenario.block_dim` | `4` | block width for block generators |
//! | `scenario.scale` | `1.0` | spectral norm of each block |
//! | `scenario.d` | `64` | feature dimension for `random_features` |
//! | `scenario.overlap` | `0.0` | shared-feature weight for `random_features` |
//! | `scenario.targets` | none (preset: `[0.05, 0.1, 0.3, 0.5, 0.7, 0.9]`) | initial success per prompt, cyclic |
//! | `scenario.path` | none | instance file for `instance` |
//! | `trainer.algorithm` | required | `reinforce` or `grpo` |
//! | `trainer.step_rule` | `theorem_default` | `theorem_default`, `relaxed`, `manual` |
//! | `trainer.eta` | none | step size, required for `manual` |
//! | `trainer.horizon` | `1000` | iterations T |
//! | `trainer.seed` | `0` | prompt-selection seed |
//! | `trainer.eps_floor` | `1e-8` | clamp on `sqrt(V)` for GRPO |
//! | `trainer.relaxed.m`, `.r1`, `.r2` | none | constants for the `relaxed` rule |
//! | `diagnostics.snapshot_every` | `1` | per-prompt snapshot cadence, capped at T |
//! | `diagnostics.threshold` | `0.9` | mean-objective threshold |
//! | `diagnostics.wide_columns` | `false` | append `J_i` columns to the CSV |
//! | `diagnostics.reports` | `["cumulative"]` | any of `cumulative`, `assumptions`, `lemma`, `fisher` |
//! | `diagnostics.phase_t1`, `.phase_t2` | `0.055`, `0.10` | phase thresholds on cosine std |
//! | `diagnostics.c_window` | `500` | window for windowed `C` |
//! | `diagnostics.fisher_batch` | `64` | Fisher proxy batch size |
//! | `diagnostics.permutations` | `10000` | permutation-test shuffles |
//! | `diagnostics.ball_samples` | `100` | ball points per prompt for the local smoothness check |
//! | `output.dir` | `$RLVR_LAB_OUT` or `rlvr-out` | output directory |
//! | `output.formats` | `["csv", "json"]` | any of `csv`, `json`, `svg` |

use std::path::{Path, PathBuf};

use rlvr_core::diagnostics::PhaseThresholds;
use rlvr_core::trainers::{Algorithm, RelaxedConstants, StepRule, TrainerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "RLVR_LAB_OUT";
pub const DEFAULT_OUT_DIR: &str = "rlvr-out";

const TOP_KEYS: &[&str] = &["scenario", "trainer", "diagnostics", "output"];
const SCENARIO_KEYS: &[&str] =
    &["generator", "seed", "n", "k", "block_dim", "scale", "d", "overlap", "targets", "path"];
const TRAINER_KEYS: &[&str] = &["algorithm", "step_rule", "eta", "horizon", "seed", "eps_floor", "relaxed"];
const RELAXED_KEYS: &[&str] = &["m", "r1", "r2"];
const DIAGNOSTICS_KEYS: &[&str] = &[
    "snapshot_every",
    "threshold",
    "wide_columns",
    "reports",
    "phase_t1",
    "phase_t2",
    "c_window",
    "fisher_batch",
    "permutations",
    "ball_samples",
];
const OUTPUT_KEYS: &[&str] = &["dir", "formats"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{location}: unknown key `{key}`{}", suggestion_text(.suggestion))]
    UnknownKey { location: String, key: String, suggestion: Option<String> },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn suggestion_text(s: &Option<String>) -> String {
    s.as_ref().map(|k| format!(" (did you mean `{k}`?)")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    OrthogonalBlocks,
    CongruentBlocks,
    RandomFeatures,
    DifficultyPreset,
    Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub generator: Generator,
    #[serde(default)]
    pub seed: u64,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub block_dim: Option<usize>,
    pub scale: Option<f64>,
    pub d: Option<usize>,
    pub overlap: Option<f64>,
    pub targets: Option<Vec<f64>>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRuleName {
    TheoremDefault,
    Relaxed,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub algorithm: Algorithm,
    #[serde(default = "default_step_rule")]
    pub step_rule: StepRuleName,
    pub eta: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eps_floor")]
    pub eps_floor: f64,
    pub relaxed: Option<RelaxedConstants>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Report {
    Cumulative,
    Assumptions,
    Lemma,
    Fisher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub wide_columns: bool,
    #[serde(default = "default_reports")]
    pub reports: Vec<Report>,
    #[serde(default = "default_t1")]
    pub phase_t1: f64,
    #[serde(default = "default_t2")]
    pub phase_t2: f64,
    #[serde(default = "default_c_window")]
    pub c_window: usize,
    #[serde(default = "default_fisher_batch")]
    pub fisher_batch: usize,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_ball_samples")]
    pub ball_samples: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            snapshot_every: default_snapshot_every(),
            threshold: default_threshold(),
            wide_columns: false,
            reports: default_reports(),
            phase_t1: default_t1(),
            phase_t2: default_t2(),
            c_window: default_c_window(),
            fisher_batch: default_fisher_batch(),
            permutations: default_permutations(),
            ball_samples: default_ball_samples(),
        }
    }
}

impl DiagnosticsSection {
    pub fn thresholds(&self) -> PhaseThresholds {
        PhaseThresholds { t1: self.phase_t1, t2: self.phase_t2 }
    }

    pub fn wants(&self, r: Report) -> bool {
        self.reports.contains(&r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub trainer: TrainerSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_step_rule() -> StepRuleName {
    StepRuleName::TheoremDefault
}
fn default_horizon() -> usize {
    1000
}
fn default_eps_floor() -> f64 {
    rlvr_core::trainers::DEFAULT_EPS_FLOOR
}
fn default_snapshot_every() -> usize {
    1
}
fn default_threshold() -> f64 {
    0.9
}
fn default_reports() -> Vec<Report> {
    vec![Report::Cumulative]
}
fn default_t1() -> f64 {
    0.055
}
fn default_t2() -> f64 {
    0.10
}
fn default_c_window() -> usize {
    500
}
fn default_fisher_batch() -> usize {
    64
}
fn default_permutations() -> usize {
    rlvr_core::diagnostics::DEFAULT_PERMUTATIONS
}
fn default_ball_samples() -> usize {
    100
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn nearest(key: &str, valid: &[&str]) -> Option<String> {
    valid
        .iter()
        .map(|v| (strsim::jaro_winkler(key, v), *v))
        .filter(|(score, _)| *score >= 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| v.to_string())
}

/// Line of `key = ...` inside `[section]` (or at top level when empty).
fn key_line(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (no, line) in source.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            current = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == format!("{section}.{key}") || (section.is_empty() && current == key) {
                return Some(no + 1);
            }
            continue;
        }
        if current == section {
            if let Some((lhs, _)) = trimmed.split_once('=') {
                if lhs.trim().trim_matches('"') == key {
                    return Some(no + 1);
                }
            }
        }
    }
    None
}

fn check_keys(
    source: &str,
    origin: &str,
    section: &str,
    table: &toml::Table,
    valid: &[&str],
) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !valid.contains(&key.as_str()) {
            let line = key_line(source, section, key);
            let place = if section.is_empty() { String::from("top level") } else { format!("[{section}]") };
            let location = match line {
                Some(l) => format!("{origin}:{l} in {place}"),
                None => format!("{origin} in {place}"),
            };
            return Err(ConfigError::UnknownKey { location, key: key.clone(), suggestion: nearest(key, valid) });
        }
    }
    Ok(())
}

fn check_all_keys(source: &str, origin: &str, root: &toml::Table) -> Result<(), ConfigError> {
    check_keys(source, origin, "", root, TOP_KEYS)?;
    let sections: [(&str, &[&str]); 4] = [
        ("scenario", SCENARIO_KEYS),
        ("trainer", TRAINER_KEYS),
        ("diagnostics", DIAGNOSTICS_KEYS),
        ("output", OUTPUT_KEYS),
    ];
    for (name, keys) in sections {
        if let Some(toml::Value::Table(t)) = root.get(name) {
            check_keys(source, origin, name, t, keys)?;
            if name == "trainer" {
                if let Some(toml::Value::Table(r)) = t.get("relaxed") {
                    check_keys(source, origin, "trainer.relaxed", r, RELAXED_KEYS)?;
                }
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let source =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&source, &path.display().to_string())?;
        // instance paths are relative to the config file
        if let (Some(p), Some(parent)) = (cfg.scenario.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = parent.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(source: &str, origin: &str) -> Result<Self, ConfigError> {
        let root: toml::Table =
            toml::from_str(source).map_err(|e| ConfigError::Syntax(format!("{origin}: {e}")))?;
        check_all_keys(source, origin, &root)?;
        let cfg: ExperimentConfig =
            toml::from_str(source).map_err(|e| ConfigError::Syntax(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let t = &self.trainer;
        if t.horizon == 0 {
            return invalid("trainer.horizon: horizon must be ≥ 1".into());
        }
        match (t.step_rule, t.eta) {
            (StepRuleName::Manual, None) => return invalid("trainer.eta is required when step_rule = \"manual\"".into()),
            (StepRuleName::Manual, Some(eta)) if !(eta > 0.0 && eta.is_finite()) => {
                return invalid(format!("trainer.eta must be positive, got {eta}"))
            }
            (StepRuleName::TheoremDefault | StepRuleName::Relaxed, Some(_)) => {
                return invalid("trainer.eta only applies to step_rule = \"manual\"".into())
            }
            _ => {}
        }
        if t.step_rule == StepRuleName::Relaxed && t.relaxed.is_none() {
            return invalid("trainer.relaxed = { m, r1, r2 } is required when step_rule = \"relaxed\"".into());
        }
        self.trainer_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = &self.scenario;
        if s.generator == Generator::Instance && s.path.is_none() {
            return invalid("scenario.path is required when generator = \"instance\"".into());
        }
        if s.generator != Generator::Instance && s.path.is_some() {
            return invalid("scenario.path only applies to generator = \"instance\"".into());
        }
        if let Some(targets) = &s.targets {
            if targets.is_empty() {
                return invalid("scenario.targets must be nonempty".into());
            }
            if s.generator == Generator::RandomFeatures {
                return invalid("scenario.targets needs a block generator".into());
            }
        }
        let d = &self.diagnostics;
        if d.snapshot_every == 0 {
            return invalid("diagnostics.snapshot_every must be ≥ 1".into());
        }
        if !(d.threshold > 0.0 && d.threshold <= 1.0) {
            return invalid(format!("diagnostics.threshold must be in (0, 1], got {}", d.threshold));
        }
        if !(d.phase_t1 >= 0.0 && d.phase_t1 <= d.phase_t2) {
            return invalid("diagnostics.phase_t1 must satisfy 0 ≤ phase_t1 ≤ phase_t2".into());
        }
        if d.c_window == 0 || d.fisher_batch == 0 {
            return invalid("diagnostics.c_window and diagnostics.fisher_batch must be ≥ 1".into());
        }
        if self.output.formats.is_empty() {
            return invalid("output.formats must name at least one of csv, json, svg".into());
        }
        Ok(())
    }

    /// Trainer configuration with the snapshot cadence capped at T.
    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        let step_rule = match t.step_rule {
            StepRuleName::TheoremDefault => StepRule::TheoremDefault,
            StepRuleName::Relaxed => StepRule::Relaxed,
            StepRuleName::Manual => StepRule::Manual(t.eta.unwrap_or(f64::NAN)),
        };
        TrainerConfig {
            algorithm: t.algorithm,
            step_rule,
            horizon: t.horizon,
            seed: t.seed,
            eps_floor: t.eps_floor,
            relaxed: t.relaxed,
            snapshot_every: self.diagnostics.snapshot_every.clamp(1, t.horizon.max(1)),
        }
    }

    /// Applies a `--seed` override to both the scenario and selection streams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self.trainer.seed = seed;
        self
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.trainer.algorithm = algorithm;
        self
    }

    /// `output.dir`, else `$RLVR_LAB_OUT`, else `rlvr-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn wants_format(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
