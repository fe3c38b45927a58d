//! Quantum χ² goodness-of-fit testing.
//!
//! Given a hypothesis state σ and measurement counts drawn from an unknown
//! state ρ, decide whether ρ = σ. The crate provides the Bures χ² divergence,
//! the divergence rate ξ(σ) with a measurement design achieving it, the
//! Pearson statistic with its asymptotic χ² calibration, a seeded multinomial
//! simulator, and numerical oracles that check the closed forms.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chi2stat;
pub mod divergences;
pub mod error;
pub mod gof;
pub mod io;
pub mod operators;
pub mod oracle;
pub mod povm;
pub mod simulator;
mod special;
pub mod tolerance;

pub use chi2stat::{
    chi2_lower_tail, chi2_pdf, chi2_upper_tail, critical_value, run_test, test_statistic, Decision,
    ExperimentRecord, GroupCounts, Statistic, TestReport,
};
pub use divergences::{
    apply_omega, bures_chi2, chi2_divergence, kl_divergence, lemma1_optimal_basis, BuresResult, ProbVector,
    Regularization,
};
pub use error::{Error, Result};
pub use gof::{divergence_rate, required_samples, upper_bound_matrix, DivergenceRateResult, SampleSize};
pub use operators::{
    devec, eigh, frobenius_distance, validate_density, vec, CMatrix, DensityMatrix, Eigensystem, HermitianMatrix,
    VectorizedOperator,
};
pub use povm::{
    degrees_of_freedom, induced_distribution, optimal_povm, validate_povm, DesignGroup, MeasurementDesign,
    OptimalPovm, Povm,
};
pub use simulator::{power_curve, sample_record, Seed, SimulationPlan};

pub use special::{gamma_p, gamma_q, ln_gamma};
