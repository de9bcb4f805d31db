//! Brute-force references.
//!
//! Nothing here calls into [`crate::policy`] derivative code: probabilities
//! are recomputed through log-sum-exp, derivatives come from central
//! differences and eigenvalues from cyclic Jacobi rotations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::policy::{FeatureSet, PolicyParams};

/// Default central-difference step for gradients.
pub const FD_GRADIENT_STEP: f64 = 1e-5;
/// Default central-difference step for Hessians.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("objective returned a non-finite value at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("matrix is not symmetric")]
    Asymmetric,
}

/// Central differences `(f(θ + h e_k) - f(θ - h e_k)) / 2h`.
pub fn fd_gradient<F>(f: F, theta: &DVector<f64>, h: f64) -> Result<DVector<f64>, OracleError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(h > 0.0) {
        return Err(OracleError::BadStep(h));
    }
    let mut out = DVector::zeros(theta.len());
    let mut probe = theta.clone();
    for k in 0..theta.len() {
        probe[k] = theta[k] + h;
        let up = f(&probe);
        probe[k] = theta[k] - h;
        let down = f(&probe);
        probe[k] = theta[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(OracleError::NonFinite { coordinate: k });
        }
        out[k] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Second-order central stencil, symmetrized as `(M + M^T) / 2`.
///
/// Diagonal: `(f(+h) - 2 f(0) + f(-h)) / h²`. Off-diagonal: the four-point
/// mixed stencil over `±h e_k ± h e_l` divided by `4h²`.
pub fn fd_hessian<F>(f: F, theta: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, OracleError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(h > 0.0) {
        return Err(OracleError::BadStep(h));
    }
    let d = theta.len();
    let center = f(theta);
    if !center.is_finite() {
        return Err(OracleError::NonFinite { coordinate: 0 });
    }
    let eval = |probe: &DVector<f64>, coordinate: usize| {
        let v = f(probe);
        if v.is_finite() { Ok(v) } else { Err(OracleError::NonFinite { coordinate }) }
    };
    let mut m = DMatrix::zeros(d, d);
    let mut probe = theta.clone();
    for k in 0..d {
        probe[k] = theta[k] + h;
        let up = eval(&probe, k)?;
        probe[k] = theta[k] - h;
        let down = eval(&probe, k)?;
        probe[k] = theta[k];
        m[(k, k)] = (up - 2.0 * center + down) / (h * h);
        for l in (k + 1)..d {
            let mut corner = |sk: f64, sl: f64| {
                probe[k] = theta[k] + sk * h;
                probe[l] = theta[l] + sl * h;
                let v = eval(&probe, k);
                probe[k] = theta[k];
                probe[l] = theta[l];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            m[(k, l)] = v;
            m[(l, k)] = v;
        }
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// `log Σ exp(z)`.
fn log_sum_exp(z: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = z.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + z.map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Output probabilities for prompt `i`, computed as `exp(z_j - lse(z))`.
pub fn enumerated_probs(fs: &FeatureSet, p: &PolicyParams, i: usize) -> Vec<f64> {
    let x = fs.features(i);
    let theta = p.theta();
    let logits: Vec<f64> = (0..fs.k()).map(|j| x.row(j).transpose().dot(theta)).collect();
    let lse = log_sum_exp(logits.iter().copied());
    logits.iter().map(|z| (z - lse).exp()).collect()
}

/// `Σ_j π_j g(j)` by explicit enumeration over the `K` outputs.
pub fn enumerate_expectation<G>(fs: &FeatureSet, p: &PolicyParams, i: usize, g: G) -> f64
where
    G: Fn(usize) -> f64,
{
    enumerated_probs(fs, p, i)
        .iter()
        .enumerate()
        .map(|(j, q)| q * g(j))
        .sum()
}

/// Objective evaluator for finite differences that keeps relative precision
/// on both ends of `[0, 1]`: returns `π*` when `π*` is at most one half at the
/// reference point, else `-(1 - π*)` (same derivatives, better conditioned).
pub fn success_evaluator<'a>(
    fs: &'a FeatureSet,
    i: usize,
    reference: &PolicyParams,
) -> impl Fn(&DVector<f64>) -> f64 + 'a {
    let x = fs.features(i).clone();
    let a = fs.correct(i);
    let lower_branch = {
        let q = enumerated_probs(fs, reference, i);
        q[a] <= 0.5
    };
    move |theta: &DVector<f64>| {
        let logits: Vec<f64> = (0..x.nrows()).map(|j| x.row(j).transpose().dot(theta)).collect();
        let lse = log_sum_exp(logits.iter().copied());
        if lower_branch {
            (logits[a] - lse).exp()
        } else {
            let wrong = logits.iter().enumerate().filter(|&(j, _)| j != a).map(|(_, &z)| z);
            -(log_sum_exp(wrong) - lse).exp()
        }
    }
}

/// Score `∇ log π(o_j | q_i) = x_j - Σ_l π_l x_l`.
pub fn score_vector(fs: &FeatureSet, p: &PolicyParams, i: usize, j: usize) -> DVector<f64> {
    let x = fs.features(i);
    let q = enumerated_probs(fs, p, i);
    let mean = (0..fs.k()).fold(DVector::zeros(fs.d()), |acc, l| acc + x.row(l).transpose() * q[l]);
    x.row(j).transpose() - mean
}

/// Exact diagonal of the Fisher information averaged over uniformly chosen
/// prompts, `(1/n) Σ_i Σ_j π_ij (score_ij ⊙ score_ij)`, by enumeration.
pub fn exact_diag_fisher(fs: &FeatureSet, p: &PolicyParams) -> DVector<f64> {
    let mut total = DVector::zeros(fs.d());
    for i in 0..fs.n() {
        let scores: Vec<DVector<f64>> = (0..fs.k()).map(|j| score_vector(fs, p, i, j)).collect();
        for k in 0..fs.d() {
            total[k] += enumerate_expectation(fs, p, i, |j| scores[j][k] * scores[j][k]);
        }
    }
    total / fs.n() as f64
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>, OracleError> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(OracleError::Asymmetric);
    }
    let scale = m.amax().max(1.0);
    for r in 0..d {
        for c in (r + 1)..d {
            if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * scale {
                return Err(OracleError::Asymmetric);
            }
        }
    }
    let mut a = (m + m.transpose()) * 0.5;
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|r| (0..d).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)] * a[(r, c)])
            .sum();
        let diag: f64 = (0..d).map(|r| a[(r, r)] * a[(r, r)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..d).map(|r| a[(r, r)]).collect())
}

/// `max |λ|` from [`jacobi_eigenvalues`].
pub fn eig_spectral_norm(m: &DMatrix<f64>) -> Result<f64, OracleError> {
    Ok(jacobi_eigenvalues(m)?.into_iter().fold(0.0, |acc, l| acc.max(l.abs())))
}

/// `f(a) = max_{l ∈ [a - s/2, a + s/2] ∩ [0,1]} 4 l (1 - l) / s` with
/// `s = sqrt(a(1-a))`. The inner maximum of the concave `l(1-l)` sits at
/// `1/2` when the interval contains it and at the nearer endpoint otherwise.
pub fn local_smoothness_ratio(a: f64) -> f64 {
    let s = (a * (1.0 - a)).sqrt();
    let lo = (a - s / 2.0).max(0.0);
    let hi = (a + s / 2.0).min(1.0);
    let l = 0.5_f64.clamp(lo, hi);
    4.0 * l * (1.0 - l) / s
}

/// Evaluates [`local_smoothness_ratio`] on `a_k = k / (2 resolution)`,
/// `k = 1..=resolution`, and returns `(argmax, max)`.
pub fn grid_max_f(resolution: usize) -> (f64, f64) {
    let resolution = resolution.max(1);
    (1..=resolution)
        .map(|k| {
            let a = k as f64 / (2.0 * resolution as f64);
            (a, local_smoothness_ratio(a))
        })
        .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_of_quadratic() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 4.0]);
        let q = |t: &DVector<f64>| (t.transpose() * &a * t)[(0, 0)];
        let theta = DVector::from_column_slice(&[0.3, -0.5, 0.6]);
        let g = fd_gradient(q, &theta, FD_GRADIENT_STEP).unwrap();
        let exact = &a * &theta * 2.0;
        assert!((g - exact).amax() <= 1e-9);
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let theta = DVector::from_column_slice(&[1.0, 2.0]);
        let g = fd_gradient(|_| 3.5, &theta, 1e-5).unwrap();
        assert_eq!(g.amax(), 0.0);
        assert!(fd_gradient(|_| 1.0, &theta, 0.0).is_err());
        assert!(matches!(
            fd_gradient(|t| if t[1] > 2.0 { f64::NAN } else { 0.0 }, &theta, 1e-5),
            Err(OracleError::NonFinite { coordinate: 1 })
        ));
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        let a = DMatrix::from_row_slice(2, 2, &[1.5, -0.25, -0.25, 0.75]);
        let q = |t: &DVector<f64>| (t.transpose() * &a * t)[(0, 0)];
        let at_origin = fd_hessian(q, &DVector::zeros(2), FD_HESSIAN_STEP).unwrap();
        assert!((at_origin - &a * 2.0).amax() <= 1e-8);
        // dyadic point and step keep every stencil evaluation exact
        let theta = DVector::from_column_slice(&[0.25, -0.75]);
        let h = fd_hessian(q, &theta, 2f64.powi(-13)).unwrap();
        assert!((h - &a * 2.0).amax() <= 1e-8);
    }

    #[test]
    fn jacobi_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, -5.0]));
        assert_eq!(eig_spectral_norm(&m).unwrap(), 5.0);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((eig_spectral_norm(&m).unwrap() - 1.0).abs() < 1e-15);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) * 0.09375;
        assert!((eig_spectral_norm(&m).unwrap() - 0.1875).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(eig_spectral_norm(&bad), Err(OracleError::Asymmetric));
    }

    #[test]
    fn f_anchor_values() {
        assert!((local_smoothness_ratio(0.5) - 2.0).abs() < 1e-15);
        let boundary = 0.5 - 5f64.sqrt() / 10.0;
        assert!((local_smoothness_ratio(boundary) - 5f64.sqrt()).abs() < 1e-6);
        assert!((local_smoothness_ratio(0.1) - 2.5).abs() < 1e-12);
        let (arg, max) = grid_max_f(100_000);
        assert!((arg - 0.1).abs() <= 1e-3, "{arg}");
        assert!((max - 2.5).abs() <= 1e-3, "{max}");
    }

    #[test]
    fn grid_max_never_exceeds_five_halves() {
        for res in [1_000, 1_234, 10_007, 50_000] {
            let (_, max) = grid_max_f(res);
            assert!(max <= 2.5 + 1e-9, "res {res}: {max}");
        }
    }
}
