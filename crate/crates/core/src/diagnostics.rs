//! Measured assumption constants and empirical curvature statistics.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::policy::{self, FeatureSet, PolicyError, PolicyParams, PromptStats};
use crate::rng::{stream_rng, STREAM_BALL, STREAM_FISHER, STREAM_PERMUTATION};
use crate::trainers::TrajectoryLog;

/// Pairs whose projection term falls below this are vacuous for the M bound.
pub const M_VACUOUS_TOL: f64 = 1e-12;
/// Default permutation count for significance tests.
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
/// `2√2 + 1`, the sharper curvature constant behind the `4 X_max² V` bound.
pub const SHARP_HESSIAN_CONSTANT: f64 = 3.828_427_124_746_19;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} prompts, got {got}")]
    TooFewPrompts { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn all_stats(fs: &FeatureSet, p: &PolicyParams) -> Result<Vec<PromptStats>, PolicyError> {
    (0..fs.n()).map(|i| policy::prompt_stats(fs, p, i)).collect()
}

fn all_gradients(fs: &FeatureSet, stats: &[PromptStats]) -> Vec<DVector<f64>> {
    stats.iter().enumerate().map(|(i, s)| policy::gradient_from_stats(fs, i, s)).collect()
}

fn require_pairs(fs: &FeatureSet) -> Result<(), DiagnosticsError> {
    if fs.n() < 2 {
        return Err(DiagnosticsError::TooFewPrompts { needed: 2, got: fs.n() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCosine {
    pub i: usize,
    pub j: usize,
    pub cos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineStats {
    pub cos_mean: f64,
    /// Population standard deviation over pairs.
    pub cos_std: f64,
    pub frac_abs_below_0p1: f64,
    pub frac_abs_below_0p15: f64,
    pub frac_positive: f64,
    pub pairs: Vec<PairCosine>,
    /// Prompts with an exactly zero gradient; their pairs are left out.
    pub zero_gradient_prompts: Vec<usize>,
    /// Set when no pair survives the zero-gradient exclusion.
    pub empty: bool,
}

/// `cos(∇J_i, ∇J_j)` for all `i < j`.
pub fn pairwise_grad_cosines(fs: &FeatureSet, p: &PolicyParams) -> Result<CosineStats, DiagnosticsError> {
    require_pairs(fs)?;
    let stats = all_stats(fs, p)?;
    let grads = all_gradients(fs, &stats);
    Ok(cosines_from_gradients(&grads))
}

pub(crate) fn cosines_from_gradients(grads: &[DVector<f64>]) -> CosineStats {
    let norms: Vec<f64> = grads.iter().map(|g| g.norm()).collect();
    let zero_gradient_prompts: Vec<usize> = (0..grads.len()).filter(|&i| norms[i] == 0.0).collect();
    let mut pairs = Vec::new();
    for i in 0..grads.len() {
        for j in (i + 1)..grads.len() {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let cos = (grads[i].dot(&grads[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            pairs.push(PairCosine { i, j, cos });
        }
    }
    if pairs.is_empty() {
        return CosineStats {
            cos_mean: 0.0,
            cos_std: 0.0,
            frac_abs_below_0p1: 0.0,
            frac_abs_below_0p15: 0.0,
            frac_positive: 0.0,
            pairs,
            zero_gradient_prompts,
            empty: true,
        };
    }
    let count = pairs.len() as f64;
    let mean = pairs.iter().map(|c| c.cos).sum::<f64>() / count;
    let var = pairs.iter().map(|c| (c.cos - mean).powi(2)).sum::<f64>() / count;
    let frac = |pred: &dyn Fn(f64) -> bool| pairs.iter().filter(|c| pred(c.cos)).count() as f64 / count;
    CosineStats {
        cos_mean: mean,
        cos_std: var.sqrt(),
        frac_abs_below_0p1: frac(&|c| c.abs() < 0.1),
        frac_abs_below_0p15: frac(&|c| c.abs() < 0.15),
        frac_positive: frac(&|c| c > 0.0),
        pairs,
        zero_gradient_prompts,
        empty: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MStatus {
    /// Every ordered pair has a vanishing projection term.
    Vacuous,
    Bounded,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairViolation {
    pub i: usize,
    pub j: usize,
    pub inner: f64,
    pub projection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MBoundReport {
    pub status: MStatus,
    /// Tightest feasible M; `0` when vacuous, `None` when violated.
    pub m_hat: Option<f64>,
    /// Ordered pair attaining `m_hat`.
    pub worst_pair: Option<(usize, usize)>,
    pub vacuous_pairs: usize,
    pub violations: Vec<PairViolation>,
}

/// Smallest `M` with `M ⟨∇J_i, ∇J_j⟩ ≥ ‖X_i ∇J_j‖² / ‖X_i‖²` over ordered pairs.
pub fn m_bound(fs: &FeatureSet, p: &PolicyParams) -> Result<MBoundReport, DiagnosticsError> {
    require_pairs(fs)?;
    let stats = all_stats(fs, p)?;
    let grads = all_gradients(fs, &stats);
    let mut m_hat = 0.0f64;
    let mut worst_pair = None;
    let mut vacuous_pairs = 0;
    let mut violations = Vec::new();
    for i in 0..fs.n() {
        let norm_sq = fs.prompt_norm(i).powi(2);
        for j in (0..fs.n()).filter(|&j| j != i) {
            let projection = if norm_sq > 0.0 {
                (fs.features(i) * &grads[j]).norm_squared() / norm_sq
            } else {
                0.0
            };
            if projection <= M_VACUOUS_TOL {
                vacuous_pairs += 1;
                continue;
            }
            let inner = grads[i].dot(&grads[j]);
            if inner <= 0.0 {
                violations.push(PairViolation { i, j, inner, projection });
                continue;
            }
            let candidate = projection / inner;
            if worst_pair.is_none() || candidate > m_hat {
                m_hat = candidate;
                worst_pair = Some((i, j));
            }
        }
    }
    let (status, m_hat) = if !violations.is_empty() {
        (MStatus::Violated, None)
    } else if worst_pair.is_none() {
        (MStatus::Vacuous, Some(0.0))
    } else {
        (MStatus::Bounded, Some(m_hat))
    };
    Ok(MBoundReport { status, m_hat, worst_pair, vacuous_pairs, violations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    /// `max ‖∇J_i‖ / min ‖∇J_j‖`; `None` when some gradient is zero.
    pub r1_hat: Option<f64>,
    /// `max sqrt(V_i) / min sqrt(V_j)`; `None` when some variance is zero.
    pub r2_hat: Option<f64>,
    pub zero_gradient_prompts: Vec<usize>,
    pub zero_variance_prompts: Vec<usize>,
}

fn max_min_ratio(values: &[f64]) -> Option<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    (lo > 0.0).then(|| hi / lo)
}

pub fn scale_regularity(fs: &FeatureSet, p: &PolicyParams) -> Result<ScaleReport, DiagnosticsError> {
    let stats = all_stats(fs, p)?;
    let grad_norms: Vec<f64> = all_gradients(fs, &stats).iter().map(|g| g.norm()).collect();
    let std_devs: Vec<f64> = stats.iter().map(PromptStats::std_dev).collect();
    Ok(ScaleReport {
        r1_hat: max_min_ratio(&grad_norms),
        r2_hat: max_min_ratio(&std_devs),
        zero_gradient_prompts: (0..fs.n()).filter(|&i| grad_norms[i] == 0.0).collect(),
        zero_variance_prompts: (0..fs.n()).filter(|&i| std_devs[i] == 0.0).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CReport {
    /// `C(i,T) = (8/(3T)) Σ_{t<T} sqrt(V_t(i))`.
    pub per_prompt: Vec<f64>,
    /// `C(T)`, the mean of `per_prompt`.
    pub aggregate: f64,
}

pub fn c_constant(log: &TrajectoryLog) -> Result<CReport, DiagnosticsError> {
    let horizon = log.horizon();
    if horizon == 0 {
        return Err(DiagnosticsError::EmptyLog);
    }
    let per_prompt: Vec<f64> =
        log.totals.std_dev_sum.iter().map(|s| 8.0 / (3.0 * horizon as f64) * s).collect();
    let aggregate = per_prompt.iter().sum::<f64>() / per_prompt.len() as f64;
    Ok(CReport { per_prompt, aggregate })
}

/// `C` restricted to the first `t` iterations (parameters `θ_0..θ_{t-1}`).
pub fn c_prefix(log: &TrajectoryLog, t: usize) -> Result<f64, DiagnosticsError> {
    if t == 0 || t > log.horizon() {
        return Err(DiagnosticsError::InvalidArgument(format!("prefix length {t} outside 1..={}", log.horizon())));
    }
    Ok(8.0 / 3.0 * log.records[..t].iter().map(|r| r.mean_std_dev).sum::<f64>() / t as f64)
}

/// `C` over consecutive windows of `window` iterations; each entry is
/// `(last t in window, C)`. The final window may be shorter.
pub fn c_windowed(log: &TrajectoryLog, window: usize) -> Result<Vec<(usize, f64)>, DiagnosticsError> {
    if window == 0 {
        return Err(DiagnosticsError::InvalidArgument("window must be >= 1".into()));
    }
    if log.horizon() == 0 {
        return Err(DiagnosticsError::EmptyLog);
    }
    Ok(log
        .records
        .chunks(window)
        .map(|chunk| {
            let c = 8.0 / 3.0 * chunk.iter().map(|r| r.mean_std_dev).sum::<f64>() / chunk.len() as f64;
            (chunk.last().map(|r| r.t).unwrap_or(0), c)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    I,
    II,
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    pub t1: f64,
    pub t2: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        Self { t1: 0.055, t2: 0.10 }
    }
}

pub fn phase_classify(cos_std: f64, thresholds: PhaseThresholds) -> Phase {
    if cos_std < thresholds.t1 {
        Phase::I
    } else if cos_std < thresholds.t2 {
        Phase::II
    } else {
        Phase::III
    }
}

fn sample_output<R: Rng + ?Sized>(probs: &DVector<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, q) in probs.iter().enumerate() {
        acc += q;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

fn score(fs: &FeatureSet, i: usize, stats: &PromptStats, o: usize) -> DVector<f64> {
    let x = fs.features(i);
    x.row(o).transpose() - x.tr_mul(&stats.probs)
}

/// `B · m ⊙ m` where `m` is the mean score over the given `(prompt, output)`
/// draws.
pub fn fisher_diag_from_samples(
    fs: &FeatureSet,
    p: &PolicyParams,
    draws: &[(usize, usize)],
) -> Result<DVector<f64>, DiagnosticsError> {
    if draws.is_empty() {
        return Err(DiagnosticsError::InvalidArgument("batch must be nonempty".into()));
    }
    let stats = all_stats(fs, p)?;
    let mut mean = DVector::zeros(fs.d());
    for &(i, o) in draws {
        fs.check_prompt(i)?;
        if o >= fs.k() {
            return Err(DiagnosticsError::InvalidArgument(format!("output {o} out of range")));
        }
        mean += score(fs, i, &stats[i], o);
    }
    let b = draws.len() as f64;
    mean /= b;
    Ok(mean.component_mul(&mean) * b)
}

/// Diagonal Fisher proxy with prompts drawn uniformly with replacement and
/// one output sampled per prompt from the current policy.
pub fn fisher_diag_proxy<R: Rng + ?Sized>(
    fs: &FeatureSet,
    p: &PolicyParams,
    batch: usize,
    rng: &mut R,
) -> Result<DVector<f64>, DiagnosticsError> {
    let draws = sample_draws(fs, p, batch, None, rng)?;
    fisher_diag_from_samples(fs, p, &draws)
}

fn sample_draws<R: Rng + ?Sized>(
    fs: &FeatureSet,
    p: &PolicyParams,
    batch: usize,
    prompt: Option<usize>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, DiagnosticsError> {
    if batch == 0 {
        return Err(DiagnosticsError::InvalidArgument("batch must be >= 1".into()));
    }
    let stats = all_stats(fs, p)?;
    Ok((0..batch)
        .map(|_| {
            let i = prompt.unwrap_or_else(|| rng.random_range(0..fs.n()));
            (i, sample_output(&stats[i].probs, rng))
        })
        .collect())
}

/// Pearson correlation; `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// One-sided permutation p-value `(1 + #{r_perm ≥ r_obs}) / (1 + N)` for a
/// positive association, shuffling `y`.
pub fn permutation_p_value(x: &[f64], y: &[f64], n_permutations: usize, seed: u64) -> Option<f64> {
    let observed = pearson(x, y)?;
    let mut rng = stream_rng(seed, STREAM_PERMUTATION, 0);
    let mut shuffled = y.to_vec();
    let mut hits = 0usize;
    for _ in 0..n_permutations {
        shuffled.shuffle(&mut rng);
        if pearson(x, &shuffled).is_some_and(|r| r >= observed - 1e-15) {
            hits += 1;
        }
    }
    Some((1 + hits) as f64 / (1 + n_permutations) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    /// Batch Fisher proxy over all prompts.
    pub h: Vec<f64>,
    pub batch_size: usize,
    /// Per-prompt `‖∇²J_i‖`.
    pub curvature: Vec<f64>,
    /// Per-prompt `V_i`.
    pub variance: Vec<f64>,
    /// Per-prompt sum of the Fisher proxy from a batch drawn on that prompt only.
    pub fisher_energy: Vec<f64>,
    /// Pearson r between `curvature` and `variance`; `None` when undefined.
    pub pearson_r: Option<f64>,
    pub p_value: Option<f64>,
    /// Pearson r between `fisher_energy` and `variance`.
    pub fisher_pearson_r: Option<f64>,
    pub permutations: usize,
}

/// Correlation between exact per-prompt curvature and reward variance.
pub fn curvature_variance_correlation(
    fs: &FeatureSet,
    p: &PolicyParams,
    batch: usize,
    seed: u64,
    n_permutations: usize,
) -> Result<FisherReport, DiagnosticsError> {
    if fs.n() < 3 {
        return Err(DiagnosticsError::TooFewPrompts { needed: 3, got: fs.n() });
    }
    let stats = all_stats(fs, p)?;
    let curvature = stats
        .iter()
        .enumerate()
        .map(|(i, s)| linalg::spectral_norm(&policy::hessian_from_stats(fs, i, s)))
        .collect::<Result<Vec<f64>, _>>()?;
    let variance: Vec<f64> = stats.iter().map(|s| s.variance).collect();
    let mut rng = stream_rng(seed, STREAM_FISHER, 0);
    let h = fisher_diag_proxy(fs, p, batch, &mut rng)?;
    let fisher_energy = (0..fs.n())
        .map(|i| {
            let mut rng = stream_rng(seed, STREAM_FISHER, 1 + i as u64);
            let draws = sample_draws(fs, p, batch, Some(i), &mut rng)?;
            Ok(fisher_diag_from_samples(fs, p, &draws)?.sum())
        })
        .collect::<Result<Vec<f64>, DiagnosticsError>>()?;
    Ok(FisherReport {
        h: h.as_slice().to_vec(),
        batch_size: batch,
        pearson_r: pearson(&curvature, &variance),
        p_value: permutation_p_value(&curvature, &variance, n_permutations, seed),
        fisher_pearson_r: pearson(&fisher_energy, &variance),
        curvature,
        variance,
        fisher_energy,
        permutations: n_permutations,
    })
}

/// Mean Pearson r between curvature at checkpoint `k` and variance at
/// checkpoint `k + 1`; `None` when no adjacent pair has a defined correlation.
pub fn lagged_correlation(curvature: &[Vec<f64>], variance: &[Vec<f64>]) -> Option<f64> {
    let rs: Vec<f64> = curvature
        .iter()
        .zip(variance.iter().skip(1))
        .filter_map(|(c, v)| pearson(c, v))
        .collect();
    (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBoundRow {
    pub prompt: usize,
    pub variance: f64,
    pub hessian_norm: f64,
    pub grad_norm: f64,
    /// `4 X_max² V`.
    pub hessian_bound: f64,
    /// `(2√2 + 1) ‖X_i‖² V`.
    pub hessian_bound_sharp: f64,
    /// `X_max / 2`.
    pub lipschitz_bound: f64,
    /// `2 ‖X_i‖ V`.
    pub lipschitz_bound_sharp: f64,
    /// `sqrt(V) / X_max`.
    pub ball_radius: f64,
    /// Largest `‖∇²J_i(θ')‖` over the sampled ball points (and the centre).
    pub ball_hessian_max: f64,
    /// `(5/2) X_max² sqrt(V)`.
    pub local_bound: f64,
    pub ball_samples: usize,
}

impl CurvatureBoundRow {
    pub fn hessian_slack(&self) -> f64 {
        self.hessian_bound - self.hessian_norm
    }

    pub fn lipschitz_slack(&self) -> f64 {
        self.lipschitz_bound - self.grad_norm
    }

    pub fn local_slack(&self) -> f64 {
        self.local_bound - self.ball_hessian_max
    }

    pub fn holds(&self) -> bool {
        self.hessian_norm <= self.hessian_bound_sharp
            && self.hessian_norm <= self.hessian_bound
            && self.grad_norm <= self.lipschitz_bound_sharp
            && self.grad_norm <= self.lipschitz_bound
            && self.ball_hessian_max <= self.local_bound
    }
}

/// Uniform point in the Euclidean ball of `radius` around `center`.
pub fn sample_in_ball<R: Rng + ?Sized>(center: &DVector<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    let d = center.len();
    let mut direction = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = direction.norm();
    if norm == 0.0 || d == 0 {
        return center.clone();
    }
    direction /= norm;
    let u: f64 = rng.random();
    center + direction * (radius * u.powf(1.0 / d as f64))
}

/// Per-prompt curvature and Lipschitz measurements against the three bounds.
/// Local smoothness is probed at `ball_samples` uniform points of the ball.
pub fn lemma_bound_report(
    fs: &FeatureSet,
    p: &PolicyParams,
    ball_samples: usize,
    seed: u64,
) -> Result<Vec<CurvatureBoundRow>, DiagnosticsError> {
    let x_max = fs.x_max();
    let x2 = x_max * x_max;
    let stats = all_stats(fs, p)?;
    stats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let hessian_norm = linalg::spectral_norm(&policy::hessian_from_stats(fs, i, s))?;
            let grad_norm = policy::gradient_from_stats(fs, i, s).norm();
            let xi = fs.prompt_norm(i);
            let ball_radius = if x_max > 0.0 { s.std_dev() / x_max } else { 0.0 };
            let mut rng = stream_rng(seed, STREAM_BALL, i as u64);
            let mut ball_hessian_max = hessian_norm;
            for _ in 0..ball_samples {
                let probe = PolicyParams::new(sample_in_ball(p.theta(), ball_radius, &mut rng))?;
                let h = policy::hessian_matrix(fs, &probe, i)?;
                ball_hessian_max = ball_hessian_max.max(linalg::spectral_norm(&h)?);
            }
            Ok(CurvatureBoundRow {
                prompt: i,
                variance: s.variance,
                hessian_norm,
                grad_norm,
                hessian_bound: 4.0 * x2 * s.variance,
                hessian_bound_sharp: SHARP_HESSIAN_CONSTANT * xi * xi * s.variance,
                lipschitz_bound: 0.5 * x_max,
                lipschitz_bound_sharp: 2.0 * xi * s.variance,
                ball_radius,
                ball_hessian_max,
                local_bound: 2.5 * x2 * s.std_dev(),
                ball_samples,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub cos_mean: f64,
    pub cos_std: f64,
    pub frac_abs_below_0p1: f64,
    pub frac_positive: f64,
    pub cosines_empty: bool,
    pub m_status: MStatus,
    pub m_hat: Option<f64>,
    pub m_worst_pair: Option<(usize, usize)>,
    pub m_violations: Vec<PairViolation>,
    pub r1_hat: Option<f64>,
    pub r2_hat: Option<f64>,
    pub c_of_t: Option<f64>,
    pub phase: Phase,
}

impl AssumptionReport {
    pub fn has_violations(&self) -> bool {
        self.m_status == MStatus::Violated
    }
}

pub fn assumption_report(
    fs: &FeatureSet,
    p: &PolicyParams,
    log: Option<&TrajectoryLog>,
    thresholds: PhaseThresholds,
) -> Result<AssumptionReport, DiagnosticsError> {
    let cos = pairwise_grad_cosines(fs, p)?;
    let m = m_bound(fs, p)?;
    let scale = scale_regularity(fs, p)?;
    let c_of_t = match log {
        Some(log) => Some(c_constant(log)?.aggregate),
        None => None,
    };
    Ok(AssumptionReport {
        cos_mean: cos.cos_mean,
        cos_std: cos.cos_std,
        frac_abs_below_0p1: cos.frac_abs_below_0p1,
        frac_positive: cos.frac_positive,
        cosines_empty: cos.empty,
        m_status: m.status,
        m_hat: m.m_hat,
        m_worst_pair: m.worst_pair,
        m_violations: m.violations,
        r1_hat: scale.r1_hat,
        r2_hat: scale.r2_hat,
        c_of_t,
        phase: phase_classify(cos.cos_std, thresholds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use crate::trainers::{run_trajectory, Algorithm, TrainerConfig};
    use nalgebra::DMatrix;

    fn identity_like() -> FeatureSet {
        FeatureSet::new(vec![DMatrix::identity(2, 2)], vec![0]).unwrap()
    }

    fn orthogonal(seed: u64) -> FeatureSet {
        let mut rng = stream_rng(seed, 1, 0);
        scenarios::orthogonal_blocks(5, 3, 3, 1.0, &mut rng).unwrap()
    }

    #[test]
    fn orthogonal_cosines_are_zero() {
        let fs = orthogonal(3);
        let p = PolicyParams::from_slice(&vec![0.3; fs.d()]).unwrap();
        let c = pairwise_grad_cosines(&fs, &p).unwrap();
        assert!(c.pairs.iter().all(|pc| pc.cos.abs() <= 1e-10));
        assert_eq!(c.frac_abs_below_0p1, 1.0);
        assert_eq!(phase_classify(c.cos_std, PhaseThresholds::default()), Phase::I);
    }

    #[test]
    fn duplicated_prompt_cosine_one_and_m_at_most_one() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.3, 0.8, 0.5, 0.5]);
        let fs = FeatureSet::new(vec![x.clone(), x], vec![1, 1]).unwrap();
        let p = PolicyParams::from_slice(&[0.1, -0.2]).unwrap();
        let c = pairwise_grad_cosines(&fs, &p).unwrap();
        assert!((c.pairs[0].cos - 1.0).abs() < 1e-12);
        let m = m_bound(&fs, &p).unwrap();
        assert_eq!(m.status, MStatus::Bounded);
        assert!(m.m_hat.unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn orthogonal_m_is_vacuous() {
        let fs = orthogonal(8);
        let p = PolicyParams::from_slice(&vec![-0.4; fs.d()]).unwrap();
        let m = m_bound(&fs, &p).unwrap();
        assert_eq!(m.status, MStatus::Vacuous);
        assert_eq!(m.m_hat, Some(0.0));
        assert_eq!(m.vacuous_pairs, 20);
    }

    #[test]
    fn anti_aligned_pair_violates() {
        // shared features, opposite correct answers
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let fs = FeatureSet::new(vec![x.clone(), x], vec![0, 1]).unwrap();
        let m = m_bound(&fs, &PolicyParams::zeros(2)).unwrap();
        assert_eq!(m.status, MStatus::Violated);
        assert_eq!(m.m_hat, None);
        assert_eq!(m.violations.len(), 2);
    }

    #[test]
    fn single_prompt_rejected() {
        let fs = identity_like();
        assert!(matches!(
            pairwise_grad_cosines(&fs, &PolicyParams::zeros(2)),
            Err(DiagnosticsError::TooFewPrompts { .. })
        ));
    }

    #[test]
    fn all_zero_gradients_flag_empty() {
        let fs = FeatureSet::new(vec![DMatrix::from_element(2, 2, 1.0); 3], vec![0, 1, 0]).unwrap();
        let c = pairwise_grad_cosines(&fs, &PolicyParams::zeros(2)).unwrap();
        assert!(c.empty);
        assert_eq!(c.zero_gradient_prompts, vec![0, 1, 2]);
    }

    #[test]
    fn variance_ratio_example() {
        let targets = [0.5, 0.9];
        let mut rng = stream_rng(4, 1, 0);
        let fs = scenarios::congruent_blocks(2, 2, 2, 1.0, &mut rng).unwrap();
        let theta = scenarios::difficulty_profile(&fs, &targets).unwrap();
        let r = scale_regularity(&fs, &theta).unwrap();
        assert!((r.r2_hat.unwrap() - 0.5 / 0.3).abs() < 1e-8);
        assert!(r.r1_hat.unwrap() >= 1.0);
    }

    #[test]
    fn symmetric_prompts_regular() {
        let mut rng = stream_rng(5, 1, 0);
        let fs = scenarios::congruent_blocks(3, 2, 3, 1.0, &mut rng).unwrap();
        let theta = scenarios::difficulty_profile(&fs, &[0.5; 3]).unwrap();
        let r = scale_regularity(&fs, &theta).unwrap();
        assert!((r.r1_hat.unwrap() - 1.0).abs() < 1e-8);
        assert!((r.r2_hat.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_variance_flagged() {
        let x0 = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let x1 = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let fs = FeatureSet::new(vec![x0, x1], vec![0, 0]).unwrap();
        let p = PolicyParams::from_slice(&[900.0, 0.0, 0.0, 0.0]).unwrap();
        let r = scale_regularity(&fs, &p).unwrap();
        assert_eq!(r.r2_hat, None);
        assert_eq!(r.zero_variance_prompts, vec![0]);
    }

    #[test]
    fn phase_table_values() {
        let t = PhaseThresholds::default();
        assert_eq!(phase_classify(0.045, t), Phase::I);
        assert_eq!(phase_classify(0.066, t), Phase::II);
        assert_eq!(phase_classify(0.130, t), Phase::III);
    }

    #[test]
    fn pinned_half_gives_four_thirds() {
        // equal rows never move, so V stays at 1/4
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let fs = FeatureSet::new(vec![x], vec![0]).unwrap();
        let mut cfg = TrainerConfig::new(Algorithm::Grpo, 3, 0);
        cfg.step_rule = crate::trainers::StepRule::Manual(1e-300);
        let log = run_trajectory(&cfg, &fs, &PolicyParams::zeros(2)).unwrap();
        let c = c_constant(&log).unwrap();
        assert!((c.aggregate - 4.0 / 3.0).abs() < 1e-12);
        assert!((c_prefix(&log, 2).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(c_windowed(&log, 2).unwrap().len(), 2);
    }

    #[test]
    fn fisher_single_draw_example() {
        let fs = identity_like();
        let h = fisher_diag_from_samples(&fs, &PolicyParams::zeros(2), &[(0, 1)]).unwrap();
        assert!((h[0] - 0.25).abs() < 1e-15 && (h[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fisher_vanishes_for_deterministic_policy() {
        let fs = identity_like();
        let p = PolicyParams::from_slice(&[40.0, 0.0]).unwrap();
        let mut rng = stream_rng(1, STREAM_FISHER, 0);
        let h = fisher_diag_proxy(&fs, &p, 8, &mut rng).unwrap();
        assert!(h.amax() < 1e-30);
    }

    #[test]
    fn pearson_perfect_and_undefined() {
        let x = [0.1, 0.4, 0.2, 0.9];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(pearson(&x, &[2.0; 4]), None);
        let p = permutation_p_value(&x, &y, 999, 0).unwrap();
        // 4! orderings, one of which is the identity
        assert!(p > 0.0 && p < 0.2);
    }

    #[test]
    fn lagged_pairs_adjacent_checkpoints() {
        let c = vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0]];
        let v = vec![vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 3.0]];
        assert!((lagged_correlation(&c, &v).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(lagged_correlation(&c[..1], &v[..1]), None);
    }

    #[test]
    fn lemma_rows_ln3_point() {
        let fs = identity_like();
        let p = PolicyParams::from_slice(&[3f64.ln(), 0.0]).unwrap();
        let rows = lemma_bound_report(&fs, &p, 50, 0).unwrap();
        let r = &rows[0];
        assert!((r.hessian_norm - 0.1875).abs() < 1e-14);
        assert!((r.hessian_slack() - 0.5625).abs() < 1e-14);
        assert!((r.grad_norm - 0.2652).abs() < 1e-4);
        assert!((r.lipschitz_slack() - 0.2348).abs() < 1e-4);
        assert!(r.holds());
    }

    #[test]
    fn lemma_rows_uniform_point() {
        let fs = identity_like();
        let rows = lemma_bound_report(&fs, &PolicyParams::zeros(2), 0, 0).unwrap();
        assert!(rows[0].hessian_norm.abs() < 1e-16);
        assert_eq!(rows[0].hessian_slack(), rows[0].hessian_bound);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = stream_rng(2, STREAM_BALL, 0);
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        for _ in 0..1000 {
            assert!((sample_in_ball(&c, 0.3, &mut rng) - &c).norm() <= 0.3 + 1e-15);
        }
    }
}
