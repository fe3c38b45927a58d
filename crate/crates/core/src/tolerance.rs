//! Numerical tolerances shared across the crate.
//!
//! All values are compile-time constants except the PSD tolerance, which can be
//! overridden through the `QCHI2_TOL_PSD` environment variable or
//! [`set_psd_override`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

/// Max |M_ij - conj(M_ji)| accepted as Hermitian.
pub const HERMITIAN: f64 = 1e-12;
/// Default lower bound on eigenvalues accepted as PSD (states and POVM elements).
pub const PSD_DEFAULT: f64 = 1e-10;
/// |Tr(rho) - 1| accepted for a density matrix.
pub const TRACE: f64 = 1e-12;
/// Max entrywise deviation of a POVM element sum from the identity.
pub const COMPLETENESS: f64 = 1e-10;
/// Eigenvalues below this mark a state as rank deficient.
pub const RANK_EPS: f64 = 1e-10;
/// Mixing weight used to regularize rank-deficient states.
pub const REGULARIZATION_DELTA: f64 = 1e-9;
/// Smallest hypothesis probability usable as a chi-squared denominator.
pub const P_FLOOR: f64 = 1e-12;
/// Relative singular-value cutoff for numerical rank.
pub const RANK_RELATIVE: f64 = 1e-8;
/// Elements whose entries are all below this are treated as absent.
pub const ZERO_ELEMENT: f64 = 1e-14;

pub const PSD_ENV_VAR: &str = "QCHI2_TOL_PSD";

static PSD_OVERRIDE: AtomicU64 = AtomicU64::new(0);
static PSD_FROM_ENV: OnceLock<f64> = OnceLock::new();

/// Active PSD tolerance: explicit override, then environment, then default.
pub fn psd() -> f64 {
    let bits = PSD_OVERRIDE.load(Ordering::Relaxed);
    if bits != 0 {
        return f64::from_bits(bits);
    }
    *PSD_FROM_ENV.get_or_init(|| {
        std::env::var(PSD_ENV_VAR)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite() && *v >= 0.0)
            .unwrap_or(PSD_DEFAULT)
    })
}

/// Process-wide override of the PSD tolerance (used by the CLI `--tol-psd` flag).
pub fn set_psd_override(tol: f64) {
    assert!(tol.is_finite() && tol > 0.0, "PSD tolerance must be positive");
    PSD_OVERRIDE.store(tol.to_bits(), Ordering::Relaxed);
}
