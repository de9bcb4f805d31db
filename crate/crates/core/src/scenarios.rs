//! Problem instances.
//!
//! - [`orthogonal_blocks`] / [`congruent_blocks`]: prompt `i` lives on its own
//!   column block, so `X_i X_j^T = 0` holds with structural zeros.
//! - [`random_features`]: dense features with a shared-component knob.
//! - [`difficulty_profile`]: an initial `θ` placing each block-orthogonal
//!   prompt at a chosen success probability.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::oracle;
use crate::policy::{self, FeatureSet, PolicyError, PolicyParams};
use crate::rng::{stream_rng, STREAM_SCENARIO};

/// Success-probability targets of the heterogeneous difficulty preset,
/// assigned cyclically to prompts.
pub const DIFFICULTY_TARGETS: [f64; 6] = [0.05, 0.1, 0.3, 0.5, 0.7, 0.9];

const PROFILE_TOL: f64 = 1e-9;
const MAX_BRACKET_DOUBLINGS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("prompts {i} and {j} share columns: X_i X_j^T is not exactly zero")]
    NotBlockOrthogonal { i: usize, j: usize },
    #[error("expected {expected} targets, got {got}")]
    TargetCount { expected: usize, got: usize },
    #[error("target for prompt {prompt} must lie in (0, 1), got {target}")]
    TargetRange { prompt: usize, target: f64 },
    #[error("unreachable targets for prompts {prompts:?}")]
    Unreachable { prompts: Vec<usize> },
}

/// A feature set together with the initial parameters to train from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub features: FeatureSet,
    pub theta0: PolicyParams,
}

fn check_block_args(n: usize, k: usize, block_dim: usize, scale: f64) -> Result<(), ScenarioError> {
    if n == 0 || k < 2 || block_dim == 0 {
        return Err(ScenarioError::InvalidParameter(format!(
            "need n >= 1, K >= 2, block_dim >= 1 (got n = {n}, K = {k}, block_dim = {block_dim})"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ScenarioError::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    Ok(())
}

/// Uniform `[-1, 1]` entries rescaled to spectral norm `scale`.
fn draw_block<R: Rng + ?Sized>(k: usize, block_dim: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    loop {
        let b = DMatrix::from_fn(k, block_dim, |_, _| rng.random_range(-1.0..=1.0));
        let norm = linalg::operator_norm(&b);
        if norm > 0.0 {
            return b * (scale / norm);
        }
    }
}

fn embed(block: &DMatrix<f64>, prompt: usize, n: usize) -> DMatrix<f64> {
    let (k, block_dim) = block.shape();
    let mut x = DMatrix::zeros(k, n * block_dim);
    x.view_mut((0, prompt * block_dim), (k, block_dim)).copy_from(block);
    x
}

/// `n` prompts with `d = n * block_dim`; prompt `i` is supported on columns
/// `i*block_dim .. (i+1)*block_dim`. Each block is drawn independently and
/// correct indices are uniform over `[K]`.
pub fn orthogonal_blocks<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    block_dim: usize,
    scale: f64,
    rng: &mut R,
) -> Result<FeatureSet, ScenarioError> {
    check_block_args(n, k, block_dim, scale)?;
    let mut features = Vec::with_capacity(n);
    let mut correct = Vec::with_capacity(n);
    for i in 0..n {
        features.push(embed(&draw_block(k, block_dim, scale, rng), i, n));
        correct.push(rng.random_range(0..k));
    }
    Ok(FeatureSet::new(features, correct)?)
}

/// Like [`orthogonal_blocks`] but every prompt carries the same block and the
/// same correct index, so prompts differ only in where they live.
pub fn congruent_blocks<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    block_dim: usize,
    scale: f64,
    rng: &mut R,
) -> Result<FeatureSet, ScenarioError> {
    check_block_args(n, k, block_dim, scale)?;
    let block = draw_block(k, block_dim, scale, rng);
    let a = rng.random_range(0..k);
    let features = (0..n).map(|i| embed(&block, i, n)).collect();
    Ok(FeatureSet::new(features, vec![a; n])?)
}

/// Rows `x_{i,j} = sqrt(1 - overlap) g_{i,j} + sqrt(overlap) s_j` with
/// `g_{i,j}, s_j ~ N(0, I/d)` and `s_j` shared by all prompts.
pub fn random_features<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    d: usize,
    overlap: f64,
    rng: &mut R,
) -> Result<FeatureSet, ScenarioError> {
    if n == 0 || k < 2 || d == 0 {
        return Err(ScenarioError::InvalidParameter(format!(
            "need n >= 1, K >= 2, d >= 1 (got n = {n}, K = {k}, d = {d})"
        )));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(ScenarioError::InvalidParameter(format!("overlap must lie in [0, 1], got {overlap}")));
    }
    let sd = 1.0 / (d as f64).sqrt();
    let mut gaussian = || -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * sd
    };
    let shared = DMatrix::from_fn(k, d, |_, _| gaussian());
    let own = (1.0 - overlap).sqrt();
    let common = overlap.sqrt();
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let g = DMatrix::from_fn(k, d, |_, _| gaussian());
        features.push(g * own + &shared * common);
    }
    let correct = (0..n).map(|_| rng.random_range(0..k)).collect();
    Ok(FeatureSet::new(features, correct)?)
}

/// Verifies `X_i X_j^T = 0` exactly for every `i != j`.
pub fn check_block_orthogonal(fs: &FeatureSet) -> Result<(), ScenarioError> {
    for i in 0..fs.n() {
        for j in (i + 1)..fs.n() {
            let cross = fs.features(i) * fs.features(j).transpose();
            if cross.iter().any(|&v| v != 0.0) {
                return Err(ScenarioError::NotBlockOrthogonal { i, j });
            }
        }
    }
    Ok(())
}

/// Logit of success along `s * w`: `z_a - lse(z_{j≠a})` with `z = s X w`.
fn success_logit(xw: &DVector<f64>, a: usize, s: f64) -> f64 {
    let za = s * xw[a];
    let wrong: Vec<f64> = xw.iter().enumerate().filter(|&(j, _)| j != a).map(|(_, &v)| s * v).collect();
    let top = wrong.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + wrong.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
    za - lse
}

/// Scalar multiplier on the profile direction that reaches `target`, or
/// `None` if the success logit never crosses it.
fn solve_block(xw: &DVector<f64>, a: usize, target: f64) -> Option<f64> {
    let goal = (target / (1.0 - target)).ln();
    let g = |s: f64| success_logit(xw, a, s) - goal;
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Some(0.0);
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut inner = 0.0;
    let mut outer = dir;
    let mut crossed = false;
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        let v = g(outer);
        if !v.is_finite() {
            return None;
        }
        if v.signum() != g0.signum() || v == 0.0 {
            crossed = true;
            break;
        }
        inner = outer;
        outer *= 2.0;
    }
    if !crossed {
        return None;
    }
    let (mut lo, mut hi) = (inner, outer);
    let g_lo_sign = g(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let v = g(mid);
        if v == 0.0 {
            return Some(mid);
        }
        if v.signum() == g_lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `θ0` with `π*_{θ0}(i) = target_i` for every prompt of a block-orthogonal
/// instance. Each block moves along `x_{a_i} - mean_{j≠a_i} x_j`; the scalar is
/// found by bracketing and bisection on the success logit.
pub fn difficulty_profile(fs: &FeatureSet, targets: &[f64]) -> Result<PolicyParams, ScenarioError> {
    check_block_orthogonal(fs)?;
    if targets.len() != fs.n() {
        return Err(ScenarioError::TargetCount { expected: fs.n(), got: targets.len() });
    }
    for (prompt, &target) in targets.iter().enumerate() {
        if !(target > 0.0 && target < 1.0) {
            return Err(ScenarioError::TargetRange { prompt, target });
        }
    }
    let k = fs.k();
    let mut theta = DVector::zeros(fs.d());
    let mut unreachable = Vec::new();
    for (i, &target) in targets.iter().enumerate() {
        let x = fs.features(i);
        let a = fs.correct(i);
        let others = (0..k).filter(|&j| j != a).fold(DVector::zeros(fs.d()), |acc, j| acc + x.row(j).transpose());
        let direction = x.row(a).transpose() - others / (k - 1) as f64;
        let xw = x * &direction;
        match solve_block(&xw, a, target) {
            Some(s) => theta += direction * s,
            None => unreachable.push(i),
        }
    }
    let theta = PolicyParams::new(theta)?;
    for (i, &target) in targets.iter().enumerate() {
        if unreachable.contains(&i) {
            continue;
        }
        let reached = policy::prompt_stats(fs, &theta, i)?.success;
        if (reached - target).abs() > PROFILE_TOL {
            unreachable.push(i);
        }
    }
    if unreachable.is_empty() {
        Ok(theta)
    } else {
        unreachable.sort_unstable();
        Err(ScenarioError::Unreachable { prompts: unreachable })
    }
}

/// Targets from [`DIFFICULTY_TARGETS`] assigned cyclically to `n` prompts.
pub fn cyclic_targets(n: usize, targets: &[f64]) -> Vec<f64> {
    (0..n).map(|i| targets[i % targets.len()]).collect()
}

/// Parameters of the heterogeneous difficulty preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyPreset {
    pub n: usize,
    pub k: usize,
    pub block_dim: usize,
    pub scale: f64,
    pub targets: Vec<f64>,
}

impl Default for DifficultyPreset {
    fn default() -> Self {
        Self { n: 6, k: 4, block_dim: 4, scale: 1.0, targets: DIFFICULTY_TARGETS.to_vec() }
    }
}

impl DifficultyPreset {
    /// Congruent blocks drawn from the scenario stream of `seed`, started at
    /// the cyclic difficulty targets.
    pub fn build(&self, seed: u64) -> Result<Scenario, ScenarioError> {
        let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
        let features = congruent_blocks(self.n, self.k, self.block_dim, self.scale, &mut rng)?;
        let theta0 = difficulty_profile(&features, &cyclic_targets(self.n, &self.targets))?;
        Ok(Scenario { features, theta0 })
    }
}

/// Largest absolute deviation of the realized success from its target.
pub fn profile_error(fs: &FeatureSet, theta: &PolicyParams, targets: &[f64]) -> f64 {
    targets
        .iter()
        .enumerate()
        .map(|(i, &t)| (oracle::enumerated_probs(fs, theta, i)[fs.correct(i)] - t).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::eig_spectral_norm;

    fn rng(seed: u64) -> crate::rng::StreamRng {
        stream_rng(seed, STREAM_SCENARIO, 0)
    }

    #[test]
    fn blocks_have_disjoint_supports() {
        let fs = orthogonal_blocks(2, 2, 2, 1.0, &mut rng(1)).unwrap();
        assert_eq!(fs.d(), 4);
        let cross = fs.features(0) * fs.features(1).transpose();
        assert_eq!(cross, DMatrix::zeros(2, 2));
        check_block_orthogonal(&fs).unwrap();
    }

    #[test]
    fn blocks_have_requested_spectral_norm() {
        let fs = orthogonal_blocks(5, 4, 3, 1.0, &mut rng(2)).unwrap();
        for i in 0..fs.n() {
            let x = fs.features(i);
            let norm = eig_spectral_norm(&(x * x.transpose())).unwrap().sqrt();
            assert!((norm - 1.0).abs() <= 1e-10, "{norm}");
        }
        assert!((fs.x_max() - 1.0).abs() <= 1e-10);
        let fs = orthogonal_blocks(3, 3, 2, 2.5, &mut rng(3)).unwrap();
        assert!((fs.x_max() - 2.5).abs() <= 1e-10);
    }

    #[test]
    fn block_argument_errors() {
        assert!(orthogonal_blocks(2, 1, 2, 1.0, &mut rng(0)).is_err());
        assert!(orthogonal_blocks(2, 2, 0, 1.0, &mut rng(0)).is_err());
        assert!(orthogonal_blocks(2, 2, 2, 0.0, &mut rng(0)).is_err());
        assert!(random_features(2, 2, 4, 1.5, &mut rng(0)).is_err());
    }

    #[test]
    fn random_features_overlap_one_is_shared() {
        let fs = random_features(4, 3, 16, 1.0, &mut rng(4)).unwrap();
        for i in 1..fs.n() {
            assert_eq!(fs.features(i), fs.features(0));
        }
    }

    #[test]
    fn dense_features_are_not_block_orthogonal() {
        let fs = random_features(3, 2, 8, 0.0, &mut rng(5)).unwrap();
        assert!(matches!(difficulty_profile(&fs, &[0.5; 3]), Err(ScenarioError::NotBlockOrthogonal { .. })));
    }

    #[test]
    fn identity_block_target_gap() {
        let mut x = DMatrix::zeros(2, 2);
        x[(0, 0)] = 1.0;
        x[(1, 1)] = 1.0;
        let fs = FeatureSet::new(vec![x], vec![0]).unwrap();
        let theta = difficulty_profile(&fs, &[0.2]).unwrap();
        let gap = theta.theta()[0] - theta.theta()[1];
        assert!((gap - 0.25f64.ln()).abs() < 1e-9, "{gap}");
    }

    #[test]
    fn half_target_on_symmetric_features_is_zero() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let fs = FeatureSet::new(vec![x], vec![1]).unwrap();
        let theta = difficulty_profile(&fs, &[0.5]).unwrap();
        assert_eq!(theta.theta().amax(), 0.0);
    }

    #[test]
    fn mixed_targets_are_reached() {
        let targets = [0.05, 0.5, 0.9, 0.95];
        for seed in 0..5 {
            let fs = orthogonal_blocks(4, 2, 3, 1.0, &mut rng(seed)).unwrap();
            let theta = difficulty_profile(&fs, &targets).unwrap();
            for (i, t) in targets.iter().enumerate() {
                let s = policy::prompt_stats(&fs, &theta, i).unwrap().success;
                assert!((s - t).abs() <= 1e-9, "seed {seed} prompt {i}: {s}");
            }
        }
    }

    #[test]
    fn degenerate_direction_is_reported_per_prompt() {
        let good = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let flat = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
        let fs = FeatureSet::new(vec![good, flat], vec![0, 0]).unwrap();
        assert_eq!(
            difficulty_profile(&fs, &[0.3, 0.7]),
            Err(ScenarioError::Unreachable { prompts: vec![1] })
        );
    }

    #[test]
    fn target_validation() {
        let fs = orthogonal_blocks(2, 2, 1, 1.0, &mut rng(6)).unwrap();
        assert!(matches!(difficulty_profile(&fs, &[0.5]), Err(ScenarioError::TargetCount { .. })));
        assert!(matches!(difficulty_profile(&fs, &[0.5, 1.0]), Err(ScenarioError::TargetRange { prompt: 1, .. })));
    }

    #[test]
    fn preset_builds_and_hits_targets() {
        let preset = DifficultyPreset::default();
        let sc = preset.build(0).unwrap();
        assert_eq!(sc.features.n(), 6);
        assert!(profile_error(&sc.features, &sc.theta0, &preset.targets) <= 1e-9);
    }
}
