//! POVMs, multi-setting measurement designs, and the optimal certification
//! measurement for a hypothesis state.

mod unbiased;

pub use unbiased::{prime_power, unbiased_bases, BasisConstruction, UnbiasedBases};

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::divergences::ProbVector;
use crate::error::{Error, Result};
use crate::gof::{divergence_rate, DivergenceRateResult};
use crate::operators::{check_dims, eigh, vec, DensityMatrix, HermitianMatrix};
use crate::tolerance;

/// An ordered list of PSD operators summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: Vec<HermitianMatrix>,
    labels: Option<Vec<String>>,
}

impl Povm {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `r - 1` for a single POVM of `r` outcomes.
    pub fn degrees_of_freedom(&self) -> usize {
        self.elements.len() - 1
    }

    /// Elements whose eigenvalues are all 0 or 1 and that are pairwise orthogonal.
    pub fn is_projective(&self) -> bool {
        self.elements.iter().enumerate().all(|(i, e)| {
            let sq = e.as_matrix() * e.as_matrix();
            (sq - e.as_matrix()).iter().all(|z| z.norm() < 1e-9)
                && self.elements[i + 1..]
                    .iter()
                    .all(|f| (e.as_matrix() * f.as_matrix()).iter().all(|z| z.norm() < 1e-9))
        })
    }

    /// The von Neumann measurement onto the columns of an orthonormal basis.
    pub fn from_basis(basis: &DMatrix<Complex64>) -> Result<Self> {
        let elements = (0..basis.ncols())
            .map(|m| HermitianMatrix::outer(&basis.column(m).into_owned()))
            .collect();
        validate_povm(elements)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.elements.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} elements",
                labels.len(),
                self.elements.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Max entrywise deviation of `Σ E_i` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        completeness_deviation(self.dim, &self.elements)
    }
}

fn completeness_deviation(dim: usize, elements: &[HermitianMatrix]) -> f64 {
    let mut total = DMatrix::<Complex64>::zeros(dim, dim);
    for e in elements {
        total += e.as_matrix();
    }
    (total - DMatrix::<Complex64>::identity(dim, dim))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Checks positivity of every element and `Σ E_i = 1`. Elements that are
/// identically zero are dropped before the checks.
pub fn validate_povm(elements: Vec<HermitianMatrix>) -> Result<Povm> {
    validate_povm_labeled(elements, None)
}

pub fn validate_povm_labeled(
    elements: Vec<HermitianMatrix>,
    labels: Option<Vec<String>>,
) -> Result<Povm> {
    let Some(first) = elements.first() else {
        return Err(Error::TooFewElements { count: 0 });
    };
    let dim = first.dim();
    if let Some(l) = &labels {
        if l.len() != elements.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} elements",
                l.len(),
                elements.len()
            )));
        }
    }
    let mut kept = Vec::with_capacity(elements.len());
    let mut kept_labels = labels.as_ref().map(|_| Vec::new());
    for (index, e) in elements.into_iter().enumerate() {
        check_dims(dim, e.dim())?;
        if e.max_abs() <= tolerance::ZERO_ELEMENT {
            continue;
        }
        let min_eigenvalue = e.min_eigenvalue()?;
        if min_eigenvalue < -tolerance::psd() {
            return Err(Error::ElementNotPsd {
                index,
                min_eigenvalue,
            });
        }
        kept.push(e);
        if let (Some(out), Some(l)) = (kept_labels.as_mut(), labels.as_ref()) {
            out.push(l[index].clone());
        }
    }
    let deviation = completeness_deviation(dim, &kept);
    if !(deviation <= tolerance::COMPLETENESS) {
        return Err(Error::CompletenessViolated { deviation });
    }
    if kept.len() < 2 {
        return Err(Error::TooFewElements { count: kept.len() });
    }
    Ok(Povm {
        dim,
        elements: kept,
        labels: kept_labels,
    })
}

/// Born-rule outcome distribution `p_i = Tr[E_i ρ]`.
pub fn induced_distribution(povm: &Povm, state: &DensityMatrix) -> Result<ProbVector> {
    check_dims(povm.dim(), state.dim())?;
    let mut probs = Vec::with_capacity(povm.len());
    for (i, e) in povm.elements().iter().enumerate() {
        let p = state.as_hermitian().trace_product(e);
        if p < -1e-12 {
            return Err(Error::SupportViolation { index: i, p });
        }
        probs.push(p.max(0.0));
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    ProbVector::new(probs)
}

/// Rank of the `r × D²` matrix whose rows are `vec(E_i)`, with singular
/// values counted above `1e-8` times the largest.
pub(crate) fn numerical_rank(elements: &[HermitianMatrix]) -> usize {
    let Some(first) = elements.first() else {
        return 0;
    };
    let d2 = first.dim() * first.dim();
    let mut rows = DMatrix::<Complex64>::zeros(elements.len(), d2);
    for (i, e) in elements.iter().enumerate() {
        let v = vec(e);
        for k in 0..d2 {
            rows[(i, k)] = v.coords[k];
        }
    }
    let sv = SVD::new(rows, false, false).singular_values;
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter()
        .filter(|&&s| s > tolerance::RANK_RELATIVE * largest)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completeness {
    pub complete: bool,
    pub rank: usize,
    pub required: usize,
}

pub fn is_informationally_complete(povm: &Povm) -> Completeness {
    let rank = numerical_rank(povm.elements());
    let required = povm.dim() * povm.dim();
    Completeness {
        complete: rank == required,
        rank,
        required,
    }
}

/// One POVM measured a fixed fraction of the total shots.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignGroup {
    pub povm: Povm,
    pub fraction: f64,
}

/// Several resolutions of the identity, each measured a predetermined share
/// of the shots. Groups with fraction 0 are kept for reporting and receive no
/// shots.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDesign {
    groups: Vec<DesignGroup>,
}

impl MeasurementDesign {
    pub fn new(groups: Vec<DesignGroup>) -> Result<Self> {
        let Some(first) = groups.first() else {
            return Err(Error::InvalidDesign("no groups".into()));
        };
        let dim = first.povm.dim();
        let mut sum = 0.0;
        for (g, group) in groups.iter().enumerate() {
            check_dims(dim, group.povm.dim())?;
            if !(group.fraction >= 0.0 && group.fraction.is_finite()) {
                return Err(Error::InvalidDesign(format!(
                    "group {g} has fraction {}",
                    group.fraction
                )));
            }
            sum += group.fraction;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDesign(format!("fractions sum to {sum}")));
        }
        Ok(Self { groups })
    }

    pub fn single(povm: Povm) -> Self {
        Self {
            groups: vec![DesignGroup {
                povm,
                fraction: 1.0,
            }],
        }
    }

    pub fn groups(&self) -> &[DesignGroup] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.groups[0].povm.dim()
    }

    /// Groups that receive shots.
    pub fn active_groups(&self) -> impl Iterator<Item = (usize, &DesignGroup)> {
        self.groups.iter().enumerate().filter(|(_, g)| g.fraction > 0.0)
    }

    /// `fraction_g · E` for every element of every active group, as one POVM.
    pub fn flattened(&self) -> Result<Povm> {
        let mut elements = Vec::new();
        let mut labels = Vec::new();
        for (g, group) in self.active_groups() {
            for (i, e) in group.povm.elements().iter().enumerate() {
                elements.push(e.scale(group.fraction));
                labels.push(
                    group
                        .povm
                        .labels()
                        .map(|l| format!("g{g}:{}", l[i]))
                        .unwrap_or_else(|| format!("g{g}:{i}")),
                );
            }
        }
        validate_povm_labeled(elements, Some(labels))
    }
}

/// Independent outcome frequencies: `Σ_g (r_g - 1)` over groups that receive shots.
pub fn degrees_of_freedom(design: &MeasurementDesign) -> usize {
    design
        .active_groups()
        .map(|(_, g)| g.povm.degrees_of_freedom())
        .sum()
}

/// Which family of unbiased states fills the off-diagonal part of the optimal design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimalConstruction {
    /// `D` mutually unbiased bases over GF(prime^power); `D + 1` groups, `D² - 1` degrees of freedom.
    MutuallyUnbiased { prime: usize, power: u32 },
    /// `N` tight frames of `N` vectors `exp(2πi(xk + yk²)/N)/√D`, `N` the
    /// smallest prime `>= 2D - 1`. Used when `D` is not a prime power.
    PrimeFrame { modulus: usize },
}

#[derive(Debug, Clone)]
pub struct OptimalPovm {
    pub design: MeasurementDesign,
    /// Weighted union of all groups, zero-weight elements dropped.
    pub flattened: Povm,
    pub rate: DivergenceRateResult,
    pub construction: OptimalConstruction,
    /// The hypothesis state is rank deficient; tests against it regularize.
    pub regularized: bool,
}

impl OptimalPovm {
    pub fn xi(&self) -> f64 {
        self.rate.xi
    }

    pub fn degrees_of_freedom(&self) -> usize {
        degrees_of_freedom(&self.design)
    }

    /// Number of elements belonging to σ's eigenbasis at the head of `flattened`.
    pub fn eigenbasis_len(&self) -> usize {
        if self.design.groups()[0].fraction > 0.0 {
            self.design.dim()
        } else {
            0
        }
    }
}

/// The measurement attaining the divergence rate ξ(σ): σ's eigenbasis measured
/// a fraction `1 - ξ` of the time, and unbiased states (in σ's eigenbasis
/// coordinates) whose total weight is `ξ·1`.
pub fn optimal_povm(sigma: &DensityMatrix) -> Result<OptimalPovm> {
    let rate = divergence_rate(sigma)?;
    let xi = rate.xi.clamp(0.0, 1.0);
    let dim = sigma.dim();
    let u = &sigma.eigensystem().vectors;

    let mut groups = Vec::with_capacity(dim + 1);
    let eig_povm = Povm::from_basis(u)?.with_labels((0..dim).map(|i| format!("eig{i}")).collect())?;
    groups.push(DesignGroup {
        povm: eig_povm,
        fraction: 1.0 - xi,
    });

    let construction = match prime_power(dim) {
        Some((prime, power)) => {
            let bases = unbiased_bases(dim, dim)?;
            for (b, basis) in bases.bases.iter().enumerate() {
                let rotated = u * basis;
                let povm = Povm::from_basis(&rotated)?
                    .with_labels((0..dim).map(|m| format!("mub{b}.{m}")).collect())?;
                groups.push(DesignGroup {
                    povm,
                    fraction: xi / dim as f64,
                });
            }
            OptimalConstruction::MutuallyUnbiased { prime, power }
        }
        None => {
            let modulus = unbiased::frame_modulus(dim);
            let weight = dim as f64 / modulus as f64;
            for y in 0..modulus {
                let elements = (0..modulus)
                    .map(|x| {
                        let v: DVector<Complex64> = u * unbiased::prime_frame_vector(dim, modulus, x, y);
                        HermitianMatrix::outer(&v).scale(weight)
                    })
                    .collect();
                let povm = validate_povm(elements)?
                    .with_labels((0..modulus).map(|x| format!("frame{y}.{x}")).collect())?;
                groups.push(DesignGroup {
                    povm,
                    fraction: xi / modulus as f64,
                });
            }
            OptimalConstruction::PrimeFrame { modulus }
        }
    };

    let design = MeasurementDesign::new(groups)?;
    let flattened = design.flattened()?;
    Ok(OptimalPovm {
        design,
        flattened,
        rate,
        construction,
        regularized: sigma.is_rank_deficient(),
    })
}

/// The qubit 6-outcome measurement written in σ's eigenbasis:
/// `(1-ξ)|0><0|, (1-ξ)|1><1|, (ξ/2)|±><±|, (ξ/2)|±i><±i|`.
pub fn qubit_six_outcome(xi: f64) -> Result<Povm> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let kets = [
        [c(1.0, 0.0), c(0.0, 0.0)],
        [c(0.0, 0.0), c(1.0, 0.0)],
        [c(s, 0.0), c(s, 0.0)],
        [c(s, 0.0), c(-s, 0.0)],
        [c(s, 0.0), c(0.0, s)],
        [c(s, 0.0), c(0.0, -s)],
    ];
    let weights = [1.0 - xi, 1.0 - xi, xi / 2.0, xi / 2.0, xi / 2.0, xi / 2.0];
    let labels = ["0", "1", "+", "-", "+i", "-i"];
    let elements = kets
        .iter()
        .zip(weights)
        .map(|(k, w)| HermitianMatrix::outer(&DVector::from_column_slice(k)).scale(w))
        .collect();
    validate_povm_labeled(elements, Some(labels.iter().map(|s| s.to_string()).collect()))
}

/// Eigenprojector POVM of a Hermitian operator.
pub(crate) fn eigenbasis_povm(m: &HermitianMatrix) -> Result<Povm> {
    Povm::from_basis(&eigh(m)?.vectors)
}
