//! The divergence rate ξ(σ), its independent upper-bound computation, and the
//! planning formulas for the χ² test (expected statistic, null variance,
//! sample size).
//!
//! ξ(σ) is the worst-case (over states at unit Frobenius distance) χ²
//! divergence per squared distance, maximized over measurements. It depends
//! only on the spectrum `λ` of σ:
//!
//! ```text
//! S = diag(λ) - λ λᵀ,    ξ(σ) = 1 / (1 + μ_max(S)),    2/3 <= ξ <= 1
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chi2stat::critical_value;
use crate::divergences::{chi2_divergence, ProbVector};
use crate::error::{Error, Result};
use crate::operators::DensityMatrix;
use crate::tolerance;

/// Eigenvalues below this count as the zero mode of the upper-bound matrix.
pub const ZERO_MODE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRateResult {
    pub xi: f64,
    /// Largest eigenvalue of `S`.
    pub mu_s: f64,
    /// `S` in σ's eigenbasis (real symmetric, rows in descending-λ order).
    pub s_matrix: Vec<Vec<f64>>,
    pub spectrum: Vec<f64>,
    /// σ has an eigenvalue below `1e-10`. `S` involves no division by
    /// eigenvalues, so ξ is evaluated on the exact spectrum either way.
    pub rank_deficient: bool,
}

fn clamped_spectrum(sigma: &DensityMatrix) -> Vec<f64> {
    sigma.eigenvalues().iter().map(|&l| l.max(0.0)).collect()
}

fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `S = Σ λ_α |α><α| - Σ λ_α λ_β |α><β|`.
pub fn s_matrix(spectrum: &[f64]) -> DMatrix<f64> {
    let d = spectrum.len();
    DMatrix::from_fn(d, d, |a, b| {
        let diag = if a == b { spectrum[a] } else { 0.0 };
        diag - spectrum[a] * spectrum[b]
    })
}

pub fn divergence_rate(sigma: &DensityMatrix) -> Result<DivergenceRateResult> {
    let spectrum = clamped_spectrum(sigma);
    let s = s_matrix(&spectrum);
    let ev = symmetric_eigenvalues(s.clone());
    let mu_s = ev.last().copied().unwrap_or(0.0).max(0.0);
    let s_matrix = (0..s.nrows())
        .map(|i| s.row(i).iter().cloned().collect())
        .collect();
    Ok(DivergenceRateResult {
        xi: 1.0 / (1.0 + mu_s),
        mu_s,
        s_matrix,
        spectrum,
        rank_deficient: sigma.is_rank_deficient(),
    })
}

/// The second route to ξ: `P_s diag(1/(1+λ)) P_s`, with `P_s` projecting out
/// `Σ_α sqrt(λ_α/(1+λ_α)) |α>`. Its smallest nonzero eigenvalue equals ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundResult {
    pub matrix: Vec<Vec<f64>>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub smallest_nonzero: f64,
}

pub fn upper_bound_matrix(sigma: &DensityMatrix) -> Result<UpperBoundResult> {
    upper_bound_from_spectrum(&clamped_spectrum(sigma))
}

pub fn upper_bound_from_spectrum(spectrum: &[f64]) -> Result<UpperBoundResult> {
    let d = spectrum.len();
    let inv: Vec<f64> = spectrum.iter().map(|l| 1.0 / (1.0 + l)).collect();
    let mut v: Vec<f64> = spectrum.iter().zip(&inv).map(|(l, i)| (l * i).sqrt()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let proj = DMatrix::from_fn(d, d, |a, b| if a == b { 1.0 } else { 0.0 } - v[a] * v[b]);
    let diag = DMatrix::from_fn(d, d, |a, b| if a == b { inv[a] } else { 0.0 });
    let m = &proj * diag * &proj;
    let m = (&m + m.transpose()) * 0.5;
    let eigenvalues = symmetric_eigenvalues(m.clone());
    let smallest_nonzero = eigenvalues
        .iter()
        .copied()
        .find(|&e| e > ZERO_MODE)
        .ok_or_else(|| Error::ConvergenceFailure("upper-bound matrix has no nonzero eigenvalue".into()))?;
    Ok(UpperBoundResult {
        matrix: (0..d).map(|i| m.row(i).iter().cloned().collect()).collect(),
        eigenvalues,
        smallest_nonzero,
    })
}

/// Exact finite-`n` mean of the statistic when outcomes follow `q` but the
/// hypothesis predicts `p`: `(n-1)·χ²(p,q) + Σ q_i/p_i - 1`.
pub fn expected_statistic(p: &ProbVector, q: &ProbVector, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let chi2 = chi2_divergence(p, q)?;
    let ratio: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .filter(|(&pi, _)| pi >= tolerance::P_FLOOR)
        .map(|(pi, qi)| qi / pi)
        .sum();
    Ok((n - 1) as f64 * chi2 + ratio - 1.0)
}

/// Variance of the statistic under the hypothesis:
/// `2(r-1) + (Σ 1/p_i - r² - 2r + 2)/n`.
pub fn statistic_variance_null(p: &ProbVector, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if let Some((i, &pi)) = p.probs().iter().enumerate().find(|(_, &pi)| pi < tolerance::P_FLOOR) {
        return Err(Error::SupportViolation { index: i, p: pi });
    }
    let r = p.len() as f64;
    let inv_sum: f64 = p.probs().iter().map(|pi| 1.0 / pi).sum();
    Ok(2.0 * (r - 1.0) + (inv_sum - r * r - 2.0 * r + 2.0) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize {
    pub n: u64,
    /// `(χ²_α - df) / (ε² ξ)` before rounding up.
    pub raw: f64,
    pub xi: f64,
    pub critical_value: f64,
}

/// Shots needed for the mean statistic of a state at Frobenius distance
/// `epsilon` to reach the critical value: `ceil((χ²_α - df)/(ε² ξ))`.
pub fn required_samples(sigma: &DensityMatrix, df: usize, epsilon: f64, alpha: f64) -> Result<SampleSize> {
    required_samples_for_rate(divergence_rate(sigma)?.xi, df, epsilon, alpha)
}

pub fn required_samples_for_rate(xi: f64, df: usize, epsilon: f64, alpha: f64) -> Result<SampleSize> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("xi = {xi} must be positive")));
    }
    let crit = critical_value(df, alpha)?;
    let raw = (crit - df as f64) / (epsilon * epsilon * xi);
    Ok(SampleSize {
        n: raw.ceil().max(1.0) as u64,
        raw,
        xi,
        critical_value: crit,
    })
}
