//! Brute-force falsifiers for the closed forms.
//!
//! The sweeps sample random POVMs and random traceless directions and check
//! that nothing beats the Bures value, that nothing undercuts ξ, and that
//! splitting an element into a rank-1 piece never lowers the quadratic form.
//! Trial `t` of a sweep seeded with `s` uses seed `s + t`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::{bures_chi2, chi2_divergence, lemma1_optimal_basis};
use crate::error::{Error, Result};
use crate::operators::{eigh, vec, CMatrix, DensityMatrix, HermitianMatrix};
use crate::povm::{induced_distribution, numerical_rank, optimal_povm, validate_povm, Povm};
use crate::simulator::Seed;

/// Seeds tried by [`random_povm`] before giving up on a singular total.
pub const POVM_RETRIES: u64 = 16;

/// Saturation tolerances are absolute up to a Bures value of 1 and relative above.
const DOMINATION_SLACK: f64 = 1e-9;
const CANDIDATE_TOL: f64 = 1e-10;
const XI_LOWER_REL: f64 = 1e-6;
const XI_UPPER_REL: f64 = 0.02;
const SPLIT_PSD_TOL: f64 = -1e-9;

const PGD_STEP: f64 = 0.1;
const PGD_ITERATIONS: usize = 500;
const PGD_STARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub trials: u64,
    pub seed: Seed,
    pub dim: usize,
}

impl SweepConfig {
    pub fn new(trials: u64, seed: u64, dim: usize) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        Ok(Self {
            trials,
            seed: Seed(seed),
            dim,
        })
    }
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Hermitian inverse square root, or `None` when `m` is numerically singular.
fn inverse_sqrt(m: &HermitianMatrix) -> Result<Option<CMatrix>> {
    let es = eigh(m)?;
    let max = es.values.first().copied().unwrap_or(0.0);
    if es.values.iter().any(|&l| l <= 1e-12 * max.max(1.0)) {
        return Ok(None);
    }
    let d = es.dim();
    let scale = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            Complex64::new(es.values[i].powf(-0.5), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(Some(&es.vectors * scale * es.vectors.adjoint()))
}

/// Random POVM with elements `T^{-1/2} G_i G_i† T^{-1/2}`, `G_i` a complex
/// Gaussian `D × D` matrix and `T = Σ G_i G_i†`.
pub fn random_povm(dim: usize, n_elements: usize, seed: u64) -> Result<Povm> {
    random_povm_with_rank(dim, n_elements, dim, seed)
}

/// As [`random_povm`] with `G_i` of shape `D × rank`, so each element has that rank.
pub fn random_povm_with_rank(dim: usize, n_elements: usize, rank: usize, seed: u64) -> Result<Povm> {
    if n_elements < 2 {
        return Err(Error::TooFewElements { count: n_elements });
    }
    if dim == 0 || rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!("rank {rank} invalid for dimension {dim}")));
    }
    for attempt in 0..POVM_RETRIES {
        let mut rng = Seed(seed).trial(attempt).rng();
        let raw: Vec<CMatrix> = (0..n_elements)
            .map(|_| {
                let g = gaussian_matrix(&mut rng, dim, rank);
                &g * g.adjoint()
            })
            .collect();
        let total = raw.iter().fold(CMatrix::zeros(dim, dim), |acc, a| acc + a);
        let Some(t) = inverse_sqrt(&HermitianMatrix::symmetrized(total))? else {
            continue;
        };
        let elements = raw
            .iter()
            .map(|a| HermitianMatrix::symmetrized(&t * a * &t))
            .collect();
        return validate_povm(elements);
    }
    Err(Error::SingularTotal { attempts: POVM_RETRIES as usize })
}

/// Random POVM with `D²` elements whose span is the full operator space.
pub fn random_informationally_complete_povm(dim: usize, seed: u64) -> Result<Povm> {
    for attempt in 0..POVM_RETRIES {
        let povm = random_povm(dim, dim * dim, seed.wrapping_add(attempt * POVM_RETRIES))?;
        if numerical_rank(povm.elements()) == dim * dim {
            return Ok(povm);
        }
    }
    Err(Error::CompletenessUnreachable {
        dim,
        attempts: POVM_RETRIES as usize,
    })
}

/// Uniformly random direction among traceless Hermitian matrices of unit
/// Frobenius norm.
pub fn random_traceless_direction(dim: usize, seed: u64) -> HermitianMatrix {
    let mut rng = Seed(seed).rng();
    let coords: Vec<f64> = (0..dim * dim - 1).map(|_| rng.sample(StandardNormal)).collect();
    let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
    let unit: Vec<f64> = coords.iter().map(|c| c / norm).collect();
    from_coordinates(dim, &unit)
}

/// Density matrix `G G† / Tr[G G†]` from a square complex Gaussian `G`.
/// Full rank with probability one.
pub fn random_density(dim: usize, seed: u64) -> DensityMatrix {
    let mut rng = Seed(seed).rng();
    let g = gaussian_matrix(&mut rng, dim, dim);
    let a = &g * g.adjoint();
    let tr = a.trace().re;
    let m = HermitianMatrix::symmetrized(a.unscale(tr));
    crate::operators::validate_density(&m).expect("Ginibre matrix is a valid state")
}

/// Orthonormal basis of traceless Hermitian matrices (generalized Gell-Mann).
pub fn traceless_basis(dim: usize) -> Vec<HermitianMatrix> {
    let zero = Complex64::new(0.0, 0.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(dim * dim - 1);
    for j in 0..dim {
        for k in j + 1..dim {
            let mut re = CMatrix::from_element(dim, dim, zero);
            re[(j, k)] = Complex64::new(s, 0.0);
            re[(k, j)] = Complex64::new(s, 0.0);
            out.push(HermitianMatrix::symmetrized(re));
            let mut im = CMatrix::from_element(dim, dim, zero);
            im[(j, k)] = Complex64::new(0.0, -s);
            im[(k, j)] = Complex64::new(0.0, s);
            out.push(HermitianMatrix::symmetrized(im));
        }
    }
    for l in 1..dim {
        let norm = ((l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; dim];
        diag[..l].iter_mut().for_each(|x| *x = 1.0 / norm);
        diag[l] = -(l as f64) / norm;
        out.push(HermitianMatrix::diagonal(&diag));
    }
    out
}

fn from_coordinates(dim: usize, coords: &[f64]) -> HermitianMatrix {
    traceless_basis(dim)
        .iter()
        .zip(coords)
        .fold(HermitianMatrix::zeros(dim), |acc, (b, &c)| {
            acc.add(&b.scale(c)).expect("equal dimensions")
        })
}

fn coordinates(basis: &[HermitianMatrix], x: &HermitianMatrix) -> Vec<f64> {
    basis.iter().map(|b| b.trace_product(x)).collect()
}

/// `Σ_i (Tr[E_i X])² / Tr[E_i σ]`: the χ² divergence per squared step along `X`.
pub fn quadratic_form(povm: &Povm, sigma: &DensityMatrix, x: &HermitianMatrix) -> Result<f64> {
    let mut total = 0.0;
    for e in povm.elements() {
        let p = sigma.expectation(e)?;
        let t = e.trace_product(x);
        total += t * t / p;
    }
    Ok(total)
}

/// The form as a real symmetric matrix on traceless-basis coordinates.
fn form_matrix(povm: &Povm, sigma: &DensityMatrix) -> Result<DMatrix<f64>> {
    let basis = traceless_basis(sigma.dim());
    let m = basis.len();
    let mut q = DMatrix::<f64>::zeros(m, m);
    for e in povm.elements() {
        let w = 1.0 / sigma.expectation(e)?;
        let a = DVector::from_vec(coordinates(&basis, e));
        q += w * &a * a.transpose();
    }
    Ok((&q + q.transpose()) * 0.5)
}

/// The unit traceless direction minimizing [`quadratic_form`] and the minimum.
pub fn least_favorable_direction(povm: &Povm, sigma: &DensityMatrix) -> Result<(f64, HermitianMatrix)> {
    let eig = SymmetricEigen::new(form_matrix(povm, sigma)?);
    let k = eig.eigenvalues.imin();
    let coords: Vec<f64> = eig.eigenvectors.column(k).iter().cloned().collect();
    Ok((eig.eigenvalues[k], from_coordinates(sigma.dim(), &coords)))
}

/// `F = Σ_i |E_i><E_i| / Tr[E_i σ]` on the `D²`-dimensional operator space.
pub fn form_operator(povm: &Povm, sigma: &DensityMatrix) -> Result<HermitianMatrix> {
    let d2 = sigma.dim() * sigma.dim();
    let mut f = CMatrix::zeros(d2, d2);
    for e in povm.elements() {
        let w = 1.0 / sigma.expectation(e)?;
        let v = vec(e).coords;
        f += (&v * v.adjoint()).scale(w);
    }
    Ok(HermitianMatrix::symmetrized(f))
}

/// `L_ii = Tr[E_i(1 - E_i)σ]`, `L_ij = -Tr[E_i E_j σ]`. Not Hermitian in
/// general; its Hermitian part is `C⁻¹ - U† A⁻¹ U` and is PSD.
pub fn l_matrix(povm: &Povm, sigma: &DensityMatrix) -> CMatrix {
    let r = povm.len();
    let s = sigma.as_matrix();
    let es = povm.elements();
    CMatrix::from_fn(r, r, |i, j| {
        let eij = es[i].as_matrix() * es[j].as_matrix() * s;
        if i == j {
            (es[i].as_matrix() * s).trace() - eij.trace()
        } else {
            -eij.trace()
        }
    })
}

/// Summary shared by all sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub claim: String,
    pub closed_form: f64,
    pub empirical: f64,
    pub gap: f64,
    pub trials: u64,
    pub seed: u64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub bures_value: f64,
    /// Largest χ² over the random POVMs.
    pub max_found: f64,
    /// `max_found - bures_value`; never above `1e-9` on success.
    pub gap: f64,
    /// χ² of the eigenbasis of `Ω_σ(ρ)`.
    pub candidate_value: f64,
    pub achiever_matches: bool,
    pub trials: u64,
    pub seed: u64,
    pub passed: bool,
}

impl Lemma1Report {
    pub fn to_report(&self) -> OracleReport {
        OracleReport {
            claim: "bures chi2 is the maximum classical chi2 over measurements".into(),
            closed_form: self.bures_value,
            empirical: self.max_found.max(self.candidate_value),
            gap: self.gap,
            trials: self.trials,
            seed: self.seed,
            verdict: self.passed,
        }
    }
}

fn measured_chi2(povm: &Povm, sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    chi2_divergence(&induced_distribution(povm, sigma)?, &induced_distribution(povm, rho)?)
}

fn require_full_rank(sigma: &DensityMatrix) -> Result<()> {
    if sigma.is_rank_deficient() {
        return Err(Error::SingularSigma {
            min_eigenvalue: sigma.min_eigenvalue(),
        });
    }
    Ok(())
}

/// Compares the Bures value against random POVMs of `D..=D²+2` elements,
/// alternating rank-1 and full-rank elements, and against the saturating basis.
pub fn verify_lemma1(sigma: &DensityMatrix, rho: &DensityMatrix, config: &SweepConfig) -> Result<Lemma1Report> {
    require_full_rank(sigma)?;
    let d = sigma.dim();
    crate::operators::check_dims(d, rho.dim())?;
    let bures = bures_chi2(sigma, rho)?.value;
    let candidate = measured_chi2(&lemma1_optimal_basis(sigma, rho)?, sigma, rho)?;
    let sizes = d * d + 3 - d;
    let max_found = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let n = d + (t as usize % sizes);
            let rank = if t % 2 == 0 { 1 } else { d };
            let povm = random_povm_with_rank(d, n.max(2), rank, config.seed.trial(t).0)?;
            measured_chi2(&povm, sigma, rho)
        })
        .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))?;
    let gap = max_found - bures;
    let scale = bures.max(1.0);
    let achiever_matches = (candidate - bures).abs() <= CANDIDATE_TOL * scale;
    Ok(Lemma1Report {
        bures_value: bures,
        max_found,
        gap,
        candidate_value: candidate,
        achiever_matches,
        trials: config.trials,
        seed: config.seed.0,
        passed: gap <= DOMINATION_SLACK * scale && achiever_matches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub xi_closed_form: f64,
    /// Smallest form value after random draws and gradient polishing.
    pub min_found_over_x: f64,
    /// `min_found_over_x / xi_closed_form - 1`.
    pub relative_gap: f64,
    /// Smallest eigenvalue of the form restricted to traceless directions.
    pub exact_min: f64,
    pub regularized: bool,
    pub trials: u64,
    pub seed: u64,
    pub passed: bool,
}

impl XiReport {
    pub fn to_report(&self) -> OracleReport {
        OracleReport {
            claim: "optimal design attains the divergence rate".into(),
            closed_form: self.xi_closed_form,
            empirical: self.min_found_over_x,
            gap: self.relative_gap,
            trials: self.trials,
            seed: self.seed,
            verdict: self.passed,
        }
    }
}

fn rayleigh(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(q * x))
}

/// Projected gradient descent on the unit sphere of traceless coordinates.
fn polish(q: &DMatrix<f64>, start: DVector<f64>) -> f64 {
    let mut x = start;
    let mut value = rayleigh(q, &x);
    let mut step = PGD_STEP;
    for _ in 0..PGD_ITERATIONS {
        let g = q * &x * 2.0;
        let tangent = &g - &x * g.dot(&x);
        let trial = &x - tangent * step;
        let norm = trial.norm();
        if norm == 0.0 {
            break;
        }
        let trial = trial / norm;
        let v = rayleigh(q, &trial);
        if v < value {
            x = trial;
            value = v;
        } else {
            step /= 2.0;
            if step < 1e-18 {
                break;
            }
        }
    }
    value
}

/// Minimizes the quadratic form of `optimal_povm(σ)` over traceless unit
/// directions and compares the minimum with ξ(σ). A rank-deficient σ is
/// replaced by its regularization first.
pub fn verify_xi(sigma: &DensityMatrix, config: &SweepConfig) -> Result<XiReport> {
    let (sigma, regularized) = sigma.regularized();
    let d = sigma.dim();
    let optimal = optimal_povm(&sigma)?;
    let xi = optimal.xi();
    let q = form_matrix(&optimal.flattened, &sigma)?;
    let basis = traceless_basis(d);

    let mut draws: Vec<(f64, DVector<f64>)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let x = random_traceless_direction(d, config.seed.trial(t).0);
            let c = DVector::from_vec(coordinates(&basis, &x));
            (rayleigh(&q, &c), c)
        })
        .collect();
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));
    draws.truncate(PGD_STARTS);
    let min_found = draws
        .into_par_iter()
        .map(|(_, c)| polish(&q, c))
        .reduce(|| f64::INFINITY, f64::min);

    let exact_min = SymmetricEigen::new(q).eigenvalues.min();
    let relative_gap = min_found / xi - 1.0;
    Ok(XiReport {
        xi_closed_form: xi,
        min_found_over_x: min_found,
        relative_gap,
        exact_min,
        regularized,
        trials: config.trials,
        seed: config.seed.0,
        passed: min_found >= xi * (1.0 - XI_LOWER_REL) && min_found <= xi * (1.0 + XI_UPPER_REL),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Smallest eigenvalue of `F_after - F_before`.
    pub min_eigenvalue: f64,
    /// Smallest `form_after(X) - form_before(X)` over random directions.
    pub min_form_increase: f64,
    pub trials: u64,
    pub seed: u64,
    pub passed: bool,
}

impl SplitReport {
    pub fn to_report(&self) -> OracleReport {
        OracleReport {
            claim: "splitting off a rank-1 element never lowers the quadratic form".into(),
            closed_form: 0.0,
            empirical: self.min_eigenvalue,
            gap: self.min_eigenvalue,
            trials: self.trials,
            seed: self.seed,
            verdict: self.passed,
        }
    }
}

/// Replaces element `index` by `E - λ|v><v|` and appends `λ|v><v|`, where
/// `(λ, v)` is its top eigenpair.
pub fn split_element(povm: &Povm, index: usize) -> Result<Povm> {
    let e = povm
        .elements()
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("element {index} out of range")))?;
    let es = eigh(e)?;
    let rank = es.values.iter().filter(|&&l| l > crate::tolerance::RANK_EPS).count();
    if rank < 2 {
        return Err(Error::InvalidArgument(format!(
            "element {index} has rank {rank}; splitting needs rank at least 2"
        )));
    }
    let top = es.projector(0).scale(es.values[0]);
    let rest = e.sub(&top)?;
    let mut elements = povm.elements().to_vec();
    elements[index] = rest;
    elements.push(top);
    validate_povm(elements)
}

pub fn verify_split_dominance(
    povm: &Povm,
    index: usize,
    sigma: &DensityMatrix,
    config: &SweepConfig,
) -> Result<SplitReport> {
    require_full_rank(sigma)?;
    let split = split_element(povm, index)?;
    let before = form_operator(povm, sigma)?;
    let after = form_operator(&split, sigma)?;
    let min_eigenvalue = after.sub(&before)?.min_eigenvalue()?;
    let d = sigma.dim();
    let min_form_increase = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let x = random_traceless_direction(d, config.seed.trial(t).0);
            Ok(quadratic_form(&split, sigma, &x)? - quadratic_form(povm, sigma, &x)?)
        })
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))?;
    Ok(SplitReport {
        min_eigenvalue,
        min_form_increase,
        trials: config.trials,
        seed: config.seed.0,
        passed: min_eigenvalue >= SPLIT_PSD_TOL && min_form_increase >= SPLIT_PSD_TOL,
    })
}
