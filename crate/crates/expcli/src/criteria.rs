//! The acceptance suite. Each criterion runs a fixed, seeded experiment and
//! returns one pass/fail result with a short measurement summary.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rlvr_core::diagnostics::{self, SHARP_HESSIAN_CONSTANT};
use rlvr_core::linalg::spectral_norm;
use rlvr_core::oracle::{self, FD_GRADIENT_STEP, FD_HESSIAN_STEP};
use rlvr_core::policy::{self, PolicyError};
use rlvr_core::rng::{stream_rng, STREAM_FISHER, STREAM_PERMUTATION, STREAM_SCENARIO, STREAM_SWEEP};
use rlvr_core::scenarios::{self, DifficultyPreset};
use rlvr_core::trainers::{self, run_trajectory, TrainerError};
use rlvr_core::{Algorithm, FeatureSet, PolicyParams, TrainerConfig, TrajectoryLog};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner;

/// Base seed for every criterion.
pub const SUITE_SEED: u64 = 20_240_601;
pub const CRITERIA: u8 = 13;

/// Hessian provider; swapped out by mutation tests.
pub type HessianFn = fn(&FeatureSet, &PolicyParams, usize) -> Result<DMatrix<f64>, PolicyError>;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.2}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

fn finish(id: u8, title: &'static str, start: Instant, passed: bool, detail: String) -> CriterionResult {
    CriterionResult { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn failed(id: u8, title: &'static str, start: Instant, what: impl std::fmt::Display) -> CriterionResult {
    finish(id, title, start, false, format!("error: {what}"))
}

/// Random instance with `n ≤ 4`, `K ≤ 8`, `d ≤ 32` and a random feature scale.
fn random_instance<R: Rng>(rng: &mut R) -> FeatureSet {
    let n = rng.random_range(1..=4);
    let k = rng.random_range(2..=8);
    let d = rng.random_range(1..=32);
    let overlap: f64 = rng.random();
    let scale = 10f64.powf(rng.random_range(-0.5..0.5));
    let fs = scenarios::random_features(n, k, d, overlap, rng).expect("valid random instance");
    let blocks = fs.all_features().iter().map(|x| x * scale).collect();
    FeatureSet::new(blocks, fs.all_correct().to_vec()).expect("rescaled instance")
}

/// Gaussian θ with a random spread, so logits range from near-uniform to
/// near-deterministic.
fn random_theta<R: Rng>(rng: &mut R, fs: &FeatureSet) -> PolicyParams {
    let sigma = rng.random_range(0.05..4.0) / fs.x_max().max(1e-12);
    let theta = DVector::from_fn(fs.d(), |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    PolicyParams::new(theta).expect("finite theta")
}

pub fn criterion_1() -> CriterionResult {
    const TITLE: &str = "gradient matches finite differences";
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for s in 0..100 {
        let mut rng = stream_rng(SUITE_SEED, STREAM_SWEEP, 1_000 + s);
        let fs = random_instance(&mut rng);
        let theta = random_theta(&mut rng, &fs);
        for i in 0..fs.n() {
            let g = match policy::policy_gradient(&fs, &theta, i) {
                Ok(g) => g,
                Err(e) => return failed(1, TITLE, start, e),
            };
            let f = oracle::success_evaluator(&fs, i, &theta);
            let fd = match oracle::fd_gradient(f, theta.theta(), FD_GRADIENT_STEP) {
                Ok(v) => v,
                Err(e) => return failed(1, TITLE, start, e),
            };
            let err = if g.norm() > 0.0 { (&g - &fd).norm() / g.norm() } else { fd.norm() };
            worst = worst.max(err);
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = worst <= 1e-6 && secs < 10.0;
    finish(1, TITLE, start, passed, format!("{checked} prompts over 100 instances, max relative error {worst:.3e} (limit 1e-6)"))
}

pub fn criterion_2() -> CriterionResult {
    criterion_2_with(policy::hessian_matrix)
}

pub fn criterion_2_with(hessian: HessianFn) -> CriterionResult {
    const TITLE: &str = "Hessian consistent with quadratic form and finite differences";
    let start = Instant::now();
    let mut worst_qf = 0.0f64;
    let mut worst_fd = 0.0f64;
    for s in 0..100 {
        let mut rng = stream_rng(SUITE_SEED, STREAM_SWEEP, 2_000 + s);
        let fs = random_instance(&mut rng);
        let theta = random_theta(&mut rng, &fs);
        for i in 0..fs.n() {
            let h = match hessian(&fs, &theta, i) {
                Ok(h) => h,
                Err(e) => return failed(2, TITLE, start, e),
            };
            for _ in 0..200 {
                let mut y = DVector::from_fn(fs.d(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = y.norm();
                if norm > 0.0 {
                    y /= norm;
                }
                let direct = (y.transpose() * &h * &y)[(0, 0)];
                let qf = policy::hessian_quadratic_form(&fs, &theta, i, &y).expect("valid direction");
                worst_qf = worst_qf.max((direct - qf).abs());
            }
            let f = oracle::success_evaluator(&fs, i, &theta);
            match oracle::fd_hessian(f, theta.theta(), FD_HESSIAN_STEP) {
                Ok(fd) => worst_fd = worst_fd.max((&h - fd).amax()),
                Err(e) => return failed(2, TITLE, start, e),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = worst_qf <= 1e-12 && worst_fd <= 1e-5 && secs < 30.0;
    finish(
        2,
        TITLE,
        start,
        passed,
        format!("max |yᵀHy - q(y)| {worst_qf:.3e} (limit 1e-12), max entrywise FD gap {worst_fd:.3e} (limit 1e-5)"),
    )
}

struct SweepOutcome {
    samples: usize,
    violations: usize,
    sharp_violations: usize,
    oracle_mismatches: usize,
    min_ratio_slack: f64,
}

/// Curvature sweep over `10⁴` random `(instance, θ)` samples; every 100th
/// sample also cross-checks the supplied Hessian against finite differences.
fn curvature_sweep(hessian: HessianFn) -> Result<SweepOutcome, String> {
    let mut out = SweepOutcome { samples: 0, violations: 0, sharp_violations: 0, oracle_mismatches: 0, min_ratio_slack: f64::INFINITY };
    for block in 0..500u64 {
        let mut rng = stream_rng(SUITE_SEED, STREAM_SWEEP, 3_000 + block);
        let fs = random_instance(&mut rng);
        let x2 = fs.x_max().powi(2);
        for s in 0..20 {
            let theta = random_theta(&mut rng, &fs);
            for i in 0..fs.n() {
                let stats = policy::prompt_stats(&fs, &theta, i).map_err(|e| e.to_string())?;
                let h = hessian(&fs, &theta, i).map_err(|e| e.to_string())?;
                let norm = spectral_norm(&h).map_err(|e| e.to_string())?;
                let bound = 4.0 * x2 * stats.variance;
                if norm > bound {
                    out.violations += 1;
                }
                if norm > SHARP_HESSIAN_CONSTANT * x2 * stats.variance {
                    out.sharp_violations += 1;
                }
                if bound > 0.0 {
                    out.min_ratio_slack = out.min_ratio_slack.min(1.0 - norm / bound);
                }
                if s == 0 {
                    let f = oracle::success_evaluator(&fs, i, &theta);
                    let fd = oracle::fd_hessian(f, theta.theta(), FD_HESSIAN_STEP).map_err(|e| e.to_string())?;
                    if (&h - fd).amax() > 1e-5 {
                        out.oracle_mismatches += 1;
                    }
                }
            }
            out.samples += 1;
        }
    }
    Ok(out)
}

pub fn criterion_3() -> CriterionResult {
    criterion_3_with(policy::hessian_matrix)
}

pub fn criterion_3_with(hessian: HessianFn) -> CriterionResult {
    const TITLE: &str = "Hessian norm within 4 X_max² V";
    let start = Instant::now();
    let o = match curvature_sweep(hessian) {
        Ok(o) => o,
        Err(e) => return failed(3, TITLE, start, e),
    };
    let secs = start.elapsed().as_secs_f64();
    let passed = o.violations == 0 && o.sharp_violations == 0 && o.oracle_mismatches == 0 && secs < 60.0;
    finish(
        3,
        TITLE,
        start,
        passed,
        format!(
            "{} samples, {} violations, {} violations of (2√2+1) X_max² V, {} oracle mismatches, min relative slack {:.3}",
            o.samples, o.violations, o.sharp_violations, o.oracle_mismatches, o.min_ratio_slack
        ),
    )
}

pub fn criterion_4() -> CriterionResult {
    const TITLE: &str = "gradient norm within X_max / 2";
    let start = Instant::now();
    let mut samples = 0;
    let mut violations = 0;
    let mut sharp_violations = 0;
    let mut max_ratio = 0.0f64;
    for block in 0..500u64 {
        let mut rng = stream_rng(SUITE_SEED, STREAM_SWEEP, 4_000 + block);
        let fs = random_instance(&mut rng);
        for _ in 0..20 {
            let theta = random_theta(&mut rng, &fs);
            for i in 0..fs.n() {
                let stats = policy::prompt_stats(&fs, &theta, i).expect("finite logits");
                let g = policy::policy_gradient(&fs, &theta, i).expect("finite logits").norm();
                if g > 0.5 * fs.x_max() {
                    violations += 1;
                }
                if g > 2.0 * fs.prompt_norm(i) * stats.variance {
                    sharp_violations += 1;
                }
                max_ratio = max_ratio.max(g / (0.5 * fs.x_max()));
            }
            samples += 1;
        }
    }
    let passed = violations == 0 && sharp_violations == 0;
    finish(
        4,
        TITLE,
        start,
        passed,
        format!("{samples} samples, {violations} violations, {sharp_violations} violations of 2‖X_i‖V, max ‖∇J‖/(X_max/2) = {max_ratio:.3}"),
    )
}

pub fn criterion_5() -> CriterionResult {
    criterion_5_with(policy::hessian_matrix)
}

pub fn criterion_5_with(hessian: HessianFn) -> CriterionResult {
    const TITLE: &str = "local smoothness in the sqrt(V)/X_max ball";
    let start = Instant::now();
    let mut pairs = 0;
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    for block in 0..500u64 {
        let mut rng = stream_rng(SUITE_SEED, STREAM_SWEEP, 5_000 + block);
        let fs = random_instance(&mut rng);
        let x_max = fs.x_max();
        for _ in 0..20 {
            let theta = random_theta(&mut rng, &fs);
            let i = rng.random_range(0..fs.n());
            let std_dev = policy::prompt_stats(&fs, &theta, i).expect("finite logits").std_dev();
            let probe = diagnostics::sample_in_ball(theta.theta(), std_dev / x_max, &mut rng);
            let probe = PolicyParams::new(probe).expect("finite probe");
            let h = match hessian(&fs, &probe, i).map_err(|e| e.to_string()).and_then(|h| spectral_norm(&h).map_err(|e| e.to_string())) {
                Ok(h) => h,
                Err(e) => return failed(5, TITLE, start, e),
            };
            let bound = 2.5 * x_max * x_max * std_dev;
            if h > bound {
                violations += 1;
            }
            if bound > 0.0 {
                max_ratio = max_ratio.max(h / bound);
            }
            pairs += 1;
        }
    }
    let (argmax, max) = oracle::grid_max_f(100_000);
    let anchor_a = 0.5 - 5f64.sqrt() / 10.0;
    let anchor = oracle::local_smoothness_ratio(anchor_a);
    let grid_ok = (max - 2.5).abs() <= 1e-3 && (argmax - 0.1).abs() <= 1e-3;
    let anchor_ok = (anchor - 5f64.sqrt()).abs() <= 1e-6;
    let passed = violations == 0 && grid_ok && anchor_ok;
    finish(
        5,
        TITLE,
        start,
        passed,
        format!(
            "{pairs} pairs, {violations} violations, max ‖∇²J(θ')‖/bound {max_ratio:.3}; grid max f = {max:.6} at a = {argmax:.5}; f(1/2 - √5/10) = {anchor:.9}"
        ),
    )
}

fn orthogonal_instance() -> FeatureSet {
    let mut rng = stream_rng(SUITE_SEED, STREAM_SCENARIO, 0);
    scenarios::orthogonal_blocks(8, 4, 4, 1.0, &mut rng).expect("valid block instance")
}

fn orthogonal_run(fs: &FeatureSet, algorithm: Algorithm, horizon: usize) -> Result<TrajectoryLog, TrainerError> {
    let mut cfg = TrainerConfig::new(algorithm, horizon, SUITE_SEED);
    cfg.snapshot_every = horizon;
    run_trajectory(&cfg, fs, &PolicyParams::zeros(fs.d()))
}

pub fn criterion_6() -> CriterionResult {
    const TITLE: &str = "orthogonal blocks decouple prompts";
    let start = Instant::now();
    let fs = orthogonal_instance();
    let mut parts = Vec::new();
    let mut passed = true;
    for algorithm in [Algorithm::Reinforce, Algorithm::Grpo] {
        let log = match orthogonal_run(&fs, algorithm, 10_000) {
            Ok(l) => l,
            Err(e) => return failed(6, TITLE, start, e),
        };
        let worst = log.records.iter().map(|r| r.max_offtarget_change).fold(0.0, f64::max);
        passed &= worst <= 1e-12;
        parts.push(format!("{}: max |ΔJ_l| {worst:.3e} over {} steps", algorithm.name(), log.records.len()));
    }
    finish(6, TITLE, start, passed, parts.join("; "))
}

pub fn criterion_7() -> CriterionResult {
    const TITLE: &str = "per-step improvement bounds hold";
    let start = Instant::now();
    let fs = orthogonal_instance();
    let mut parts = Vec::new();
    let mut passed = true;
    for algorithm in [Algorithm::Reinforce, Algorithm::Grpo] {
        let log = match orthogonal_run(&fs, algorithm, 10_000) {
            Ok(l) => l,
            Err(e) => return failed(7, TITLE, start, e),
        };
        let unguaranteed = log.records.iter().filter(|r| r.bound_slack.is_none()).count();
        let negative = log.records.iter().filter(|r| r.bound_slack.is_some_and(|s| s < 0.0)).count();
        let min = log.records.iter().filter_map(|r| r.bound_slack).fold(f64::INFINITY, f64::min);
        passed &= unguaranteed == 0 && negative == 0;
        parts.push(format!(
            "{}: {negative} negative, {unguaranteed} unchecked of {}, min slack {min:.3e}",
            algorithm.name(),
            log.records.len()
        ));
    }
    finish(7, TITLE, start, passed, parts.join("; "))
}

pub fn criterion_8() -> CriterionResult {
    const TITLE: &str = "cumulative gradient bounds hold per prompt";
    let start = Instant::now();
    let fs = orthogonal_instance();
    let mut parts = Vec::new();
    let mut passed = true;
    for algorithm in [Algorithm::Reinforce, Algorithm::Grpo] {
        let run_start = Instant::now();
        let log = match orthogonal_run(&fs, algorithm, 5_000) {
            Ok(l) => l,
            Err(e) => return failed(8, TITLE, start, e),
        };
        let bounds = match trainers::cumulative_bound_check(&log, &fs) {
            Ok(b) => b,
            Err(e) => return failed(8, TITLE, start, e),
        };
        let secs = run_start.elapsed().as_secs_f64();
        let ok = bounds.iter().filter(|b| b.passed).count();
        let min_ok = bounds.iter().filter(|b| b.min_form_passed).count();
        let tele_ok = bounds.iter().filter(|b| b.telescoped_passed).count();
        let worst = bounds
            .iter()
            .filter(|b| b.rhs > 0.0)
            .map(|b| b.grad_sq_sum / b.rhs)
            .fold(0.0, f64::max);
        passed &= ok == bounds.len() && secs < 120.0;
        parts.push(format!(
            "{}: {ok}/{} prompts within bound (max sum/RHS {worst:.3}), min-form {min_ok}/{}, telescoped {tele_ok}/{}",
            algorithm.name(),
            bounds.len(),
            bounds.len(),
            bounds.len()
        ));
    }
    finish(8, TITLE, start, passed, parts.join("; "))
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSeparation {
    pub grpo: Vec<Option<usize>>,
    pub reinforce: Vec<Option<usize>>,
    pub c_at_threshold: Vec<Option<f64>>,
}

/// Iterations-to-threshold of both algorithms on the difficulty preset for
/// ten paired seeds.
pub fn rate_separation(horizon: usize, threshold: f64) -> Result<RateSeparation, String> {
    let mut out = RateSeparation { grpo: Vec::new(), reinforce: Vec::new(), c_at_threshold: Vec::new() };
    for seed in 0..10u64 {
        let sc = DifficultyPreset::default().build(seed).map_err(|e| e.to_string())?;
        for algorithm in [Algorithm::Grpo, Algorithm::Reinforce] {
            let mut cfg = TrainerConfig::new(algorithm, horizon, seed);
            cfg.snapshot_every = horizon;
            let log = run_trajectory(&cfg, &sc.features, &sc.theta0).map_err(|e| e.to_string())?;
            let t = log.iterations_to_threshold(threshold);
            match algorithm {
                Algorithm::Grpo => {
                    out.c_at_threshold.push(match t {
                        Some(t) if t >= 1 => Some(diagnostics::c_prefix(&log, t).map_err(|e| e.to_string())?),
                        _ => None,
                    });
                    out.grpo.push(t);
                }
                Algorithm::Reinforce => out.reinforce.push(t),
            }
        }
    }
    Ok(out)
}

pub fn criterion_9() -> CriterionResult {
    const TITLE: &str = "GRPO reaches the threshold faster on heterogeneous prompts";
    let start = Instant::now();
    let r = match rate_separation(5_000, 0.9) {
        Ok(r) => r,
        Err(e) => return failed(9, TITLE, start, e),
    };
    let rank = |t: &Option<usize>| t.map_or(f64::INFINITY, |v| v as f64);
    let wins = r.grpo.iter().zip(&r.reinforce).filter(|(g, re)| rank(g) < rank(re)).count();
    let mg = crate::sweep::median_rank(&r.grpo);
    let mr = crate::sweep::median_rank(&r.reinforce);
    let c_max = r.c_at_threshold.iter().map(|c| c.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let separated = matches!((mg, mr), (Some(g), Some(re)) if g < re) || (mg.is_some() && mr.is_none());
    let passed = separated && wins >= 8 && c_max < 1.0 && secs < 300.0;
    let show = |m: Option<f64>| m.map_or_else(|| "unreached".to_string(), |v| format!("{v}"));
    finish(
        9,
        TITLE,
        start,
        passed,
        format!(
            "median iterations grpo {} vs reinforce {}, grpo wins {wins}/10, max C at grpo threshold {c_max:.4}",
            show(mg),
            show(mr)
        ),
    )
}

pub fn criterion_10() -> CriterionResult {
    const TITLE: &str = "Fisher proxy is unbiased";
    let start = Instant::now();
    let mut rng = stream_rng(SUITE_SEED, STREAM_SCENARIO, 10);
    let fs = scenarios::random_features(3, 4, 8, 0.3, &mut rng).expect("valid instance");
    let theta = PolicyParams::new(DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal))).expect("finite");
    let exact = oracle::exact_diag_fisher(&fs, &theta);
    let draws = 100_000;
    let batch = 4;
    let mut sampler = stream_rng(SUITE_SEED, STREAM_FISHER, 10);
    let mut mean = DVector::zeros(8);
    let mut m2 = DVector::zeros(8);
    for k in 0..draws {
        let h = match diagnostics::fisher_diag_proxy(&fs, &theta, batch, &mut sampler) {
            Ok(h) => h,
            Err(e) => return failed(10, TITLE, start, e),
        };
        let delta = &h - &mean;
        mean += &delta / (k + 1) as f64;
        m2 += delta.component_mul(&(&h - &mean));
    }
    let se = (m2 / (draws - 1) as f64 / draws as f64).map(f64::sqrt);
    let z: Vec<f64> = (0..8).map(|c| (mean[c] - exact[c]).abs() / se[c]).collect();
    let worst = z.iter().copied().fold(0.0, f64::max);
    let passed = z.iter().all(|&v| v <= 3.0);
    finish(10, TITLE, start, passed, format!("{draws} draws of batch {batch}, max |mean - exact| / SE = {worst:.3} (limit 3)"))
}

pub fn criterion_11() -> CriterionResult {
    const TITLE: &str = "curvature tracks reward variance";
    let start = Instant::now();
    let sc = match DifficultyPreset::default().build(0) {
        Ok(s) => s,
        Err(e) => return failed(11, TITLE, start, e),
    };
    let report = match diagnostics::curvature_variance_correlation(&sc.features, &sc.theta0, 64, 0, 10_000) {
        Ok(r) => r,
        Err(e) => return failed(11, TITLE, start, e),
    };
    let r = report.pearson_r.unwrap_or(f64::NAN);
    let p = report.p_value.unwrap_or(f64::NAN);
    let mut control_pass = 0;
    for seed in 0..10u64 {
        let mut shuffled = report.variance.clone();
        shuffled.shuffle(&mut stream_rng(seed, STREAM_PERMUTATION, 1));
        if diagnostics::permutation_p_value(&report.curvature, &shuffled, 10_000, seed).is_some_and(|p| p > 0.05) {
            control_pass += 1;
        }
    }
    let passed = r > 0.0 && p < 0.05 && control_pass >= 9;
    finish(
        11,
        TITLE,
        start,
        passed,
        format!(
            "pearson r = {r:.4}, permutation p = {p:.4}, shuffled control p > 0.05 in {control_pass}/10 (Fisher-energy r = {:.4})",
            report.fisher_pearson_r.unwrap_or(f64::NAN)
        ),
    )
}

pub fn criterion_12() -> CriterionResult {
    const TITLE: &str = "random features give near-orthogonal gradients";
    let start = Instant::now();
    let mut fracs = Vec::new();
    for seed in 0..10u64 {
        let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
        let fs = scenarios::random_features(32, 2, 512, 0.0, &mut rng).expect("valid instance");
        let mut trng = stream_rng(seed, STREAM_SWEEP, 0);
        let theta = PolicyParams::new(DVector::from_fn(512, |_, _| trng.sample::<f64, _>(StandardNormal))).expect("finite");
        match diagnostics::pairwise_grad_cosines(&fs, &theta) {
            Ok(c) => fracs.push(c.frac_abs_below_0p15),
            Err(e) => return failed(12, TITLE, start, e),
        }
    }
    let mean = fracs.iter().sum::<f64>() / fracs.len() as f64;
    finish(12, TITLE, start, mean >= 0.9, format!("mean fraction of pairs with |cos| < 0.15: {mean:.4} over 10 seeds"))
}

pub const REPRO_CONFIG: &str = "[scenario]\ngenerator = \"difficulty_preset\"\nseed = 7\n\n[trainer]\nalgorithm = \"grpo\"\nhorizon = 2000\nseed = 7\n\n[diagnostics]\nwide_columns = true\nreports = [\"cumulative\", \"assumptions\", \"lemma\", \"fisher\"]\nball_samples = 20\npermutations = 500\n";

pub fn criterion_13() -> CriterionResult {
    const TITLE: &str = "runs are byte-reproducible";
    let start = Instant::now();
    let cfg = match ExperimentConfig::parse(REPRO_CONFIG, "reproducibility.toml") {
        Ok(c) => c,
        Err(e) => return failed(13, TITLE, start, e),
    };
    let base = std::env::temp_dir().join(format!("rlvr-lab-repro-{}", std::process::id()));
    let mut bodies = Vec::new();
    for k in 0..2 {
        let dir = base.join(format!("run{k}"));
        let art = match runner::run(&cfg).and_then(|a| a.write_to(&dir).map(|_| a)) {
            Ok(a) => a,
            Err(e) => return failed(13, TITLE, start, e),
        };
        let csv = std::fs::read(dir.join(runner::CSV_FILE)).unwrap_or_default();
        let json = std::fs::read(dir.join(runner::SUMMARY_FILE)).unwrap_or_default();
        let in_memory_matches = art.csv.as_deref().map(str::as_bytes) == Some(&csv[..])
            && art.json.as_deref().map(str::as_bytes) == Some(&json[..]);
        bodies.push((csv, json, in_memory_matches));
    }
    let _ = std::fs::remove_dir_all(&base);
    let same_csv = bodies[0].0 == bodies[1].0 && !bodies[0].0.is_empty();
    let same_json = bodies[0].1 == bodies[1].1 && !bodies[0].1.is_empty();
    let passed = same_csv && same_json && bodies.iter().all(|b| b.2);
    finish(
        13,
        TITLE,
        start,
        passed,
        format!(
            "csv identical: {same_csv} ({} bytes), json identical: {same_json} ({} bytes)",
            bodies[0].0.len(),
            bodies[0].1.len()
        ),
    )
}

pub fn by_id(id: u8) -> Option<fn() -> CriterionResult> {
    Some(match id {
        1 => criterion_1,
        2 => criterion_2,
        3 => criterion_3,
        4 => criterion_4,
        5 => criterion_5,
        6 => criterion_6,
        7 => criterion_7,
        8 => criterion_8,
        9 => criterion_9,
        10 => criterion_10,
        11 => criterion_11,
        12 => criterion_12,
        13 => criterion_13,
        _ => return None,
    })
}

/// Hessian with the sign of the rank-two correction flipped; used to check
/// that the suite notices a broken curvature kernel.
pub fn mutated_hessian(fs: &FeatureSet, p: &PolicyParams, i: usize) -> Result<DMatrix<f64>, PolicyError> {
    let s = policy::prompt_stats(fs, p, i)?;
    let a = fs.correct(i);
    let mut w = s.probs.map(|q| -s.success * q);
    w[a] = s.variance;
    let cross = &w * s.probs.transpose();
    let middle = DMatrix::from_diagonal(&w) + &cross + cross.transpose();
    let x = fs.features(i);
    let h = x.transpose() * middle * x;
    Ok((&h + h.transpose()) * 0.5)
}
