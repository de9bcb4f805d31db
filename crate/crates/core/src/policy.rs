//! Log-linear softmax policy over per-prompt feature matrices.
//!
//! For prompt `i` with feature matrix `X_i` (`K x d`) and correct output
//! `a_i`, the policy is `π_θ(i) = softmax(X_i θ)` and the reward is one-hot
//! at `a_i`, so the per-prompt objective equals the success probability
//! `π*_θ(i) = [π_θ(i)]_{a_i}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("prompt index {index} out of range for {n} prompts")]
    PromptOutOfRange { index: usize, n: usize },
    #[error("prompt {prompt}: feature matrix is {rows}x{cols}, expected {k}x{d}")]
    FeatureShape { prompt: usize, rows: usize, cols: usize, k: usize, d: usize },
    #[error("prompt {prompt}: correct index {index} is not below K = {k}")]
    CorrectOutOfRange { prompt: usize, index: usize, k: usize },
    #[error("invalid dimensions: n = {n}, K = {k}, d = {d} (need n >= 1, K >= 2, d >= 1)")]
    Dimensions { n: usize, k: usize, d: usize },
    #[error("feature matrices and correct indices disagree in length ({features} vs {correct})")]
    LengthMismatch { features: usize, correct: usize },
    #[error("feature entries must be finite (prompt {prompt})")]
    NonFiniteFeatures { prompt: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error("parameter vector has a non-finite entry at {index}")]
    NonFiniteParams { index: usize },
    #[error("non-finite logits for prompt {prompt}")]
    NonFiniteLogits { prompt: usize },
}

/// A problem instance: one `K x d` feature matrix and one correct-answer
/// index per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Vec<DMatrix<f64>>,
    correct: Vec<usize>,
    k: usize,
    d: usize,
    prompt_norms: Vec<f64>,
    x_max: f64,
}

impl FeatureSet {
    pub fn new(features: Vec<DMatrix<f64>>, correct: Vec<usize>) -> Result<Self, PolicyError> {
        if features.len() != correct.len() {
            return Err(PolicyError::LengthMismatch {
                features: features.len(),
                correct: correct.len(),
            });
        }
        let n = features.len();
        let (k, d) = features.first().map(|x| x.shape()).unwrap_or((0, 0));
        if n == 0 || k < 2 || d == 0 {
            return Err(PolicyError::Dimensions { n, k, d });
        }
        for (prompt, (x, &a)) in features.iter().zip(&correct).enumerate() {
            let (rows, cols) = x.shape();
            if rows != k || cols != d {
                return Err(PolicyError::FeatureShape { prompt, rows, cols, k, d });
            }
            if a >= k {
                return Err(PolicyError::CorrectOutOfRange { prompt, index: a, k });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(PolicyError::NonFiniteFeatures { prompt });
            }
        }
        let prompt_norms: Vec<f64> = features.iter().map(linalg::operator_norm).collect();
        let x_max = prompt_norms.iter().copied().fold(0.0, f64::max);
        Ok(Self { features, correct, k, d, prompt_norms, x_max })
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `X_max = max_i ‖X_i‖`.
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn features(&self, i: usize) -> &DMatrix<f64> {
        &self.features[i]
    }

    pub fn correct(&self, i: usize) -> usize {
        self.correct[i]
    }

    pub fn all_features(&self) -> &[DMatrix<f64>] {
        &self.features
    }

    pub fn all_correct(&self) -> &[usize] {
        &self.correct
    }

    /// Spectral norm `‖X_i‖`.
    pub fn prompt_norm(&self, i: usize) -> f64 {
        self.prompt_norms[i]
    }

    pub fn check_prompt(&self, i: usize) -> Result<(), PolicyError> {
        if i < self.n() {
            Ok(())
        } else {
            Err(PolicyError::PromptOutOfRange { index: i, n: self.n() })
        }
    }

    fn check_params(&self, p: &PolicyParams) -> Result<(), PolicyError> {
        if p.len() != self.d {
            return Err(PolicyError::ParamLength { got: p.len(), expected: self.d });
        }
        Ok(())
    }
}

/// Parameter vector `θ` shared by all prompts. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyParams(DVector<f64>);

impl PolicyParams {
    pub fn new(theta: DVector<f64>) -> Result<Self, PolicyError> {
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteParams { index });
        }
        Ok(Self(theta))
    }

    pub fn zeros(d: usize) -> Self {
        Self(DVector::zeros(d))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, PolicyError> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `θ + step`, rejecting non-finite results.
    pub fn shifted(&self, step: &DVector<f64>) -> Result<Self, PolicyError> {
        Self::new(&self.0 + step)
    }
}

impl TryFrom<Vec<f64>> for PolicyParams {
    type Error = PolicyError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(DVector::from_vec(values))
    }
}

impl From<PolicyParams> for Vec<f64> {
    fn from(p: PolicyParams) -> Self {
        p.0.as_slice().to_vec()
    }
}

/// Per-prompt quantities derived from `π_θ(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptStats {
    pub probs: DVector<f64>,
    /// `π*`, the probability of the correct output.
    pub success: f64,
    /// `1 - π*`, summed over the incorrect outputs so it keeps full relative
    /// precision when `π*` is close to one.
    pub failure: f64,
    /// Bernoulli reward variance `π*(1 - π*)`.
    pub variance: f64,
    /// `J_i`, equal to `π*` for one-hot rewards.
    pub objective: f64,
}

impl PromptStats {
    /// `sqrt(V)`.
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `J(after) - J(before)`, taken on whichever of `π*` or `1 - π*` is the
    /// smaller, well-conditioned quantity.
    pub fn objective_change(before: &PromptStats, after: &PromptStats) -> f64 {
        if before.success > 0.5 && after.success > 0.5 {
            before.failure - after.failure
        } else {
            after.success - before.success
        }
    }
}

/// Softmax of `X_i θ` with max-logit subtraction.
pub fn prompt_stats(fs: &FeatureSet, p: &PolicyParams, i: usize) -> Result<PromptStats, PolicyError> {
    fs.check_prompt(i)?;
    fs.check_params(p)?;
    stats_unchecked(fs, p, i)
}

pub(crate) fn stats_unchecked(fs: &FeatureSet, p: &PolicyParams, i: usize) -> Result<PromptStats, PolicyError> {
    let logits = fs.features(i) * p.theta();
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(PolicyError::NonFiniteLogits { prompt: i });
    }
    let top = logits.max();
    let mut probs = logits.map(|z| (z - top).exp());
    let total = probs.sum();
    probs /= total;
    let a = fs.correct(i);
    let success = probs[a];
    let failure: f64 = probs.iter().enumerate().filter(|&(j, _)| j != a).map(|(_, &q)| q).sum();
    Ok(PromptStats {
        probs,
        success,
        failure,
        variance: success * failure,
        objective: success,
    })
}

/// `H(π) r_i`, with `H(π) = diag(π) - π π^T`, for one-hot `r_i`:
/// entry `a_i` is `π*(1 - π*)`, every other entry `j` is `-π* π_j`.
fn curvature_weights(stats: &PromptStats, a: usize) -> DVector<f64> {
    let mut w = stats.probs.map(|q| -stats.success * q);
    w[a] = stats.variance;
    w
}

/// `∇J_i(θ) = π*(1-π*) x_{a_i} - π* Σ_{j≠a_i} π_j x_j`.
pub fn policy_gradient(fs: &FeatureSet, p: &PolicyParams, i: usize) -> Result<DVector<f64>, PolicyError> {
    let stats = prompt_stats(fs, p, i)?;
    Ok(gradient_from_stats(fs, i, &stats))
}

pub(crate) fn gradient_from_stats(fs: &FeatureSet, i: usize, stats: &PromptStats) -> DVector<f64> {
    let weights = curvature_weights(stats, fs.correct(i));
    fs.features(i).tr_mul(&weights)
}

/// `∇J_i(θ) = X_i^T (diag(π) - π π^T) r_i` assembled literally with a dense
/// one-hot reward vector. Reference path for [`policy_gradient`].
pub fn policy_gradient_matrix_form(
    fs: &FeatureSet,
    p: &PolicyParams,
    i: usize,
) -> Result<DVector<f64>, PolicyError> {
    let stats = prompt_stats(fs, p, i)?;
    let pi = &stats.probs;
    let h = DMatrix::from_diagonal(pi) - pi * pi.transpose();
    let mut r = DVector::zeros(fs.k());
    r[fs.correct(i)] = 1.0;
    Ok(fs.features(i).transpose() * (h * r))
}

/// GRPO direction `∇J_i / max(sqrt(V), eps_floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrpoGradient {
    pub gradient: DVector<f64>,
    /// `1 / max(sqrt(V), eps_floor)`.
    pub scale: f64,
    /// Set when `sqrt(V) < eps_floor` and the floor replaced the divisor.
    pub floor_active: bool,
}

pub fn grpo_gradient(
    fs: &FeatureSet,
    p: &PolicyParams,
    i: usize,
    eps_floor: f64,
) -> Result<GrpoGradient, PolicyError> {
    let stats = prompt_stats(fs, p, i)?;
    let raw = gradient_from_stats(fs, i, &stats);
    Ok(grpo_from_parts(raw, &stats, eps_floor))
}

pub(crate) fn grpo_from_parts(raw: DVector<f64>, stats: &PromptStats, eps_floor: f64) -> GrpoGradient {
    let std = stats.std_dev();
    let floor_active = std < eps_floor;
    let scale = 1.0 / std.max(eps_floor);
    GrpoGradient { gradient: raw * scale, scale, floor_active }
}

/// `y^T ∇²J_i(θ) y = (H r)^T (X y ⊙ X y) - 2 (H r)^T (X y) (π^T X y)`.
pub fn hessian_quadratic_form(
    fs: &FeatureSet,
    p: &PolicyParams,
    i: usize,
    y: &DVector<f64>,
) -> Result<f64, PolicyError> {
    if y.len() != fs.d() {
        return Err(PolicyError::ParamLength { got: y.len(), expected: fs.d() });
    }
    let stats = prompt_stats(fs, p, i)?;
    let weights = curvature_weights(&stats, fs.correct(i));
    let u = fs.features(i) * y;
    let squares = u.component_mul(&u);
    Ok(weights.dot(&squares) - 2.0 * weights.dot(&u) * stats.probs.dot(&u))
}

/// Dense symmetric Hessian
/// `X_i^T [diag(H r) - (H r) π^T - π (H r)^T] X_i`.
pub fn hessian_matrix(fs: &FeatureSet, p: &PolicyParams, i: usize) -> Result<DMatrix<f64>, PolicyError> {
    let stats = prompt_stats(fs, p, i)?;
    Ok(hessian_from_stats(fs, i, &stats))
}

pub(crate) fn hessian_from_stats(fs: &FeatureSet, i: usize, stats: &PromptStats) -> DMatrix<f64> {
    let weights = curvature_weights(stats, fs.correct(i));
    let pi = &stats.probs;
    let cross = &weights * pi.transpose();
    let middle = DMatrix::from_diagonal(&weights) - &cross - cross.transpose();
    let x = fs.features(i);
    let h = x.transpose() * middle * x;
    (&h + h.transpose()) * 0.5
}
