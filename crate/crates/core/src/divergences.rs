//! Classical χ² and Kullback–Leibler divergences, and the Bures χ² divergence
//! `χ²_B(σ, ρ) = Tr[(ρ-σ) Ω_σ(ρ-σ)]` where `Ω_σ` inverts `X ↦ (σX + Xσ)/2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{check_dims, eigh, vec_matrix, CMatrix, DensityMatrix, Eigensystem, HermitianMatrix};
use crate::povm::{eigenbasis_povm, Povm};
use crate::tolerance;

/// A probability vector: nonnegative entries summing to 1 within `1e-10`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("probability {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `χ²(p, q) = Σ_i (q_i - p_i)² / p_i` with `p` the reference distribution.
///
/// Outcomes where `p_i` is below the floor are allowed only if `q_i = 0`.
pub fn chi2_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_dims(p.len(), q.len())?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi < tolerance::P_FLOOR {
            if qi > 0.0 {
                return Err(Error::SupportViolation { index: i, p: pi });
            }
            continue;
        }
        let d = qi - pi;
        acc += d * d / pi;
    }
    Ok(acc)
}

/// The same divergence through `Σ_i q_i² / p_i - 1`.
pub fn chi2_divergence_moment_form(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_dims(p.len(), q.len())?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi < tolerance::P_FLOOR {
            if qi > 0.0 {
                return Err(Error::SupportViolation { index: i, p: pi });
            }
            continue;
        }
        acc += qi * qi / pi;
    }
    Ok(acc - 1.0)
}

/// `Σ_i p_i ln(p_i / q_i)` in nats, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_dims(p.len(), q.len())?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::SupportViolation { index: i, p: qi });
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc)
}

/// Whether rank-deficient hypothesis states may be regularized before
/// operations that divide by their eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularization {
    #[default]
    Auto,
    Disabled,
}

fn prepare_sigma(sigma: &DensityMatrix, policy: Regularization) -> Result<(DensityMatrix, bool)> {
    match policy {
        Regularization::Auto => Ok(sigma.regularized()),
        Regularization::Disabled if sigma.is_rank_deficient() => Err(Error::SingularSigma {
            min_eigenvalue: sigma.min_eigenvalue(),
        }),
        Regularization::Disabled => Ok((sigma.clone(), false)),
    }
}

/// `Ω_σ(X)`, computed in σ's eigenbasis as `Ỹ_αβ = 2 X̃_αβ / (λ_α + λ_β)`.
/// Rank-deficient σ is regularized first.
pub fn apply_omega(sigma: &DensityMatrix, x: &HermitianMatrix) -> Result<HermitianMatrix> {
    apply_omega_with(sigma, x, Regularization::Auto).map(|(y, _)| y)
}

/// Like [`apply_omega`], also reporting whether σ was regularized.
pub fn apply_omega_with(
    sigma: &DensityMatrix,
    x: &HermitianMatrix,
    policy: Regularization,
) -> Result<(HermitianMatrix, bool)> {
    check_dims(sigma.dim(), x.dim())?;
    let (sigma, regularized) = prepare_sigma(sigma, policy)?;
    Ok((omega_in_eigenbasis(sigma.eigensystem(), x), regularized))
}

fn omega_in_eigenbasis(eigen: &Eigensystem, x: &HermitianMatrix) -> HermitianMatrix {
    let u = &eigen.vectors;
    let lam = &eigen.values;
    let mut xt = u.adjoint() * x.as_matrix() * u;
    let d = lam.len();
    for a in 0..d {
        for b in 0..d {
            xt[(a, b)] *= Complex64::new(2.0 / (lam[a] + lam[b]), 0.0);
        }
    }
    HermitianMatrix::symmetrized(u * xt * u.adjoint())
}

/// Bures χ² divergence together with `Ω_σ(ρ)` and its eigenbasis, the
/// projective measurement that attains it.
#[derive(Debug, Clone)]
pub struct BuresResult {
    /// `Tr[(ρ-σ) Ω_σ(ρ-σ)]`.
    pub value: f64,
    /// `<ρ| (σ⊗1 + 1⊗σᵀ)/2 |ρ>^{-1} - 1`, from a linear solve in vectorized space.
    pub value_vectorized: f64,
    pub omega_rho: HermitianMatrix,
    pub optimal_basis: Eigensystem,
    pub regularized: bool,
}

pub fn bures_chi2(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<BuresResult> {
    bures_chi2_with(sigma, rho, Regularization::Auto)
}

pub fn bures_chi2_with(
    sigma: &DensityMatrix,
    rho: &DensityMatrix,
    policy: Regularization,
) -> Result<BuresResult> {
    check_dims(sigma.dim(), rho.dim())?;
    let (sigma, regularized) = prepare_sigma(sigma, policy)?;
    let diff = rho.as_hermitian().sub(sigma.as_hermitian())?;
    let value = diff.trace_product(&omega_in_eigenbasis(sigma.eigensystem(), &diff));
    let omega_rho = omega_in_eigenbasis(sigma.eigensystem(), rho.as_hermitian());
    let optimal_basis = eigh(&omega_rho)?;
    let value_vectorized = vectorized_bures(&sigma, rho)?;
    Ok(BuresResult {
        value,
        value_vectorized,
        omega_rho,
        optimal_basis,
        regularized,
    })
}

/// With `|A> = (A⊗1)|I>`, left multiplication by σ is `σ⊗1` and right
/// multiplication is `1⊗σᵀ`, so `Ω_σ^{-1}` is `(σ⊗1 + 1⊗σᵀ)/2` on coordinates.
fn vectorized_bures(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    let d = sigma.dim();
    let s: &CMatrix = sigma.as_matrix();
    let eye = DMatrix::<Complex64>::identity(d, d);
    let superop = (s.kronecker(&eye) + eye.kronecker(&s.transpose())) * Complex64::new(0.5, 0.0);
    let r: DVector<Complex64> = vec_matrix(rho.as_matrix()).coords;
    let y = superop
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::SingularSigma {
            min_eigenvalue: sigma.min_eigenvalue(),
        })?;
    Ok(r.dotc(&y).re - 1.0)
}

/// The von Neumann measurement in the eigenbasis of `Ω_σ(ρ)`.
pub fn lemma1_optimal_basis(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<Povm> {
    check_dims(sigma.dim(), rho.dim())?;
    let (sigma, _) = sigma.regularized();
    eigenbasis_povm(&omega_in_eigenbasis(sigma.eigensystem(), rho.as_hermitian()))
}
