//! Dense complex operators: Hermitian matrices, density matrices, the
//! eigendecomposition contract and the row-major vectorization `|A> = (A ⊗ 1)|I>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerance;

pub type CMatrix = DMatrix<Complex64>;

const EIGEN_MAX_ITER: usize = 10_000;
const PHASE_EPS: f64 = 1e-12;

/// A square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMatrix,
}

impl HermitianMatrix {
    /// Validates hermiticity to [`tolerance::HERMITIAN`] and stores the
    /// symmetrized matrix `(M + M†)/2`.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let deviation = hermitian_deviation(&m);
        if !(deviation <= tolerance::HERMITIAN) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without checking. For matrices Hermitian by construction.
    pub(crate) fn symmetrized(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Self {
            m: (m + adj) * Complex64::new(0.5, 0.0),
        }
    }

    pub fn from_real(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::NotSquare {
                    rows: d,
                    cols: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = Complex64::new(v, 0.0);
            }
        }
        Self::new(m)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self { m }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: CMatrix::zeros(dim, dim),
        }
    }

    /// `|v><v|` for an arbitrary (not necessarily normalized) vector.
    pub fn outer(v: &DVector<Complex64>) -> Self {
        Self {
            m: v * v.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.m.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: &self.m * Complex64::new(s, 0.0),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            m: &self.m + &other.m,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            m: &self.m - &other.m,
        })
    }

    /// Real part of `Tr[self · other]`, which is the full value for two Hermitian matrices.
    pub fn trace_product(&self, other: &Self) -> f64 {
        // Tr[AB] = sum_ij A_ij B_ji
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += (self.m[(i, j)] * other.m[(j, i)]).re;
            }
        }
        acc
    }

    /// `U† A U`, Hermitian when `A` is.
    pub fn conjugate_by_adjoint(&self, u: &CMatrix) -> Self {
        Self::symmetrized(u.adjoint() * &self.m * u)
    }

    /// `U A U†`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::symmetrized(u * &self.m * u.adjoint())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*eigh(self)?.values.last().expect("dim >= 1"))
    }
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, found })
    }
}

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
///
/// Phase convention: the first component of each eigenvector with modulus
/// above `1e-12` is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, i: usize) -> DVector<Complex64> {
        self.vectors.column(i).into_owned()
    }

    /// `U diag(values) U†`.
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let s = Complex64::new(self.values[j], 0.0);
            for i in 0..d {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Rank-one projector onto eigenvector `i`.
    pub fn projector(&self, i: usize) -> HermitianMatrix {
        HermitianMatrix::outer(&self.vector(i))
    }
}

/// Hermitian eigendecomposition, deterministic for a fixed input.
pub fn eigh(m: &HermitianMatrix) -> Result<Eigensystem> {
    let d = m.dim();
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| {
            Error::ConvergenceFailure(format!(
                "no convergence within {EIGEN_MAX_ITER} iterations for a {d}x{d} matrix"
            ))
        })?;

    let mut order: Vec<usize> = (0..d).collect();
    // stable: ties keep the solver's index order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut vectors = CMatrix::zeros(d, d);
    let mut values = Vec::with_capacity(d);
    for (col, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let phase = v
            .iter()
            .find(|z| z.norm() > PHASE_EPS)
            .map(|z| z.conj() / z.norm())
            .unwrap_or(Complex64::new(1.0, 0.0));
        for i in 0..d {
            vectors[(i, col)] = v[i] * phase;
        }
    }
    Ok(Eigensystem { values, vectors })
}

/// A Hermitian, positive-semidefinite, unit-trace matrix together with its
/// eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    base: HermitianMatrix,
    eigen: Eigensystem,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &CMatrix {
        self.base.as_matrix()
    }

    pub fn eigensystem(&self) -> &Eigensystem {
        &self.eigen
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigen.values.last().expect("dim >= 1")
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let base = HermitianMatrix::identity(dim).scale(1.0 / dim as f64);
        let eigen = Eigensystem {
            values: vec![1.0 / dim as f64; dim],
            vectors: CMatrix::identity(dim, dim),
        };
        Self { base, eigen }
    }

    /// `diag(probs)` in the computational basis.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        validate_density(&HermitianMatrix::diagonal(probs))
    }

    /// `|ψ><ψ|` for a vector normalized here.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        validate_density(&HermitianMatrix::outer(&(psi / Complex64::new(norm, 0.0))))
    }

    /// Builds `U diag(values) U†` from a spectrum already known to be valid.
    pub(crate) fn from_spectrum(values: Vec<f64>, vectors: CMatrix) -> Self {
        let eigen = Eigensystem { values, vectors };
        let base = HermitianMatrix::symmetrized(eigen.reconstruct());
        Self { base, eigen }
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.min_eigenvalue() < tolerance::RANK_EPS
    }

    /// `(1 - Dδ)σ + δ·1` with `δ = 1e-9` when the smallest eigenvalue is below
    /// `1e-10`; otherwise the state itself. The flag reports which happened.
    pub fn regularized(&self) -> (DensityMatrix, bool) {
        if !self.is_rank_deficient() {
            return (self.clone(), false);
        }
        let delta = tolerance::REGULARIZATION_DELTA;
        let d = self.dim() as f64;
        let values = self
            .eigen
            .values
            .iter()
            .map(|&l| (1.0 - d * delta) * l.max(0.0) + delta)
            .collect();
        (
            DensityMatrix::from_spectrum(values, self.eigen.vectors.clone()),
            true,
        )
    }

    /// `Tr[E σ]`.
    pub fn expectation(&self, e: &HermitianMatrix) -> Result<f64> {
        check_dims(self.dim(), e.dim())?;
        Ok(self.base.trace_product(e))
    }
}

/// Symmetrizes `M` and accepts it as a state iff it is PSD (to the active
/// tolerance) and has unit trace.
pub fn validate_density(m: &HermitianMatrix) -> Result<DensityMatrix> {
    let base = HermitianMatrix::new(m.as_matrix().clone())?;
    let trace = base.trace();
    let eigen = eigh(&base)?;
    let min = *eigen.values.last().expect("dim >= 1");
    if min < -tolerance::psd() {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    if !((trace - 1.0).abs() <= tolerance::TRACE) {
        return Err(Error::TraceNotOne { trace });
    }
    Ok(DensityMatrix { base, eigen })
}

/// `sqrt(Tr[(A-B)†(A-B)])`.
pub fn frobenius_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    Ok(a.as_hermitian().sub(b.as_hermitian())?.frobenius_norm())
}

/// Coordinates of `|A> = Σ_jk A_jk |j>|k>`, i.e. row-major flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedOperator {
    pub dim: usize,
    pub coords: DVector<Complex64>,
}

impl VectorizedOperator {
    /// `<self|other> = Σ conj(a_k) b_k`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coords.dotc(&other.coords)
    }
}

pub fn vec(a: &HermitianMatrix) -> VectorizedOperator {
    vec_matrix(a.as_matrix())
}

pub(crate) fn vec_matrix(a: &CMatrix) -> VectorizedOperator {
    let d = a.nrows();
    let coords = DVector::from_fn(d * d, |idx, _| a[(idx / d, idx % d)]);
    VectorizedOperator { dim: d, coords }
}

pub fn devec(v: &VectorizedOperator) -> Result<HermitianMatrix> {
    let d = v.dim;
    check_dims(d * d, v.coords.len())?;
    HermitianMatrix::new(CMatrix::from_fn(d, d, |i, j| v.coords[i * d + j]))
}
