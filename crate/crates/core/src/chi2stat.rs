//! The χ² distribution and the accept/reject protocol built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::DensityMatrix;
use crate::povm::{induced_distribution, MeasurementDesign};
use crate::special::{gamma_p, gamma_q, ln_gamma};
use crate::tolerance;

/// Counts below this expected value make the asymptotic distribution doubtful.
pub const SMALL_EXPECTED_COUNT: f64 = 5.0;

/// Density of the χ² distribution with `df` degrees of freedom.
pub fn chi2_pdf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("df must be positive".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::DomainEdge(format!("chi2 density at x = {x}")));
    }
    let k = df as f64 / 2.0;
    if x == 0.0 {
        return match df {
            1 => Err(Error::DomainEdge(
                "chi2 density with df = 1 diverges at x = 0".into(),
            )),
            2 => Ok(0.5),
            _ => Ok(0.0),
        };
    }
    Ok(((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp())
}

/// Upper tail mass `∫_x^∞ P_df`, i.e. `Q(df/2, x/2)`.
pub fn chi2_upper_tail(x: f64, df: usize) -> f64 {
    assert!(df > 0, "df must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// Lower tail mass `∫_0^x P_df`, i.e. `P(df/2, x/2)`.
pub fn chi2_lower_tail(x: f64, df: usize) -> f64 {
    assert!(df > 0, "df must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// The χ²_α with upper tail mass `alpha`: bisection on
/// `[0, df + 40√df + 100]`, then Newton polishing.
pub fn critical_value(df: usize, alpha: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("df must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} not in (0, 1)")));
    }
    let dff = df as f64;
    let (mut lo, mut hi) = (0.0_f64, dff + 40.0 * dff.sqrt() + 100.0);
    if chi2_upper_tail(hi, df) > alpha {
        return Err(Error::ConvergenceFailure(format!(
            "critical value for df={df}, alpha={alpha} lies beyond the search bracket"
        )));
    }
    // upper tail is decreasing in x
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_upper_tail(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut err = chi2_upper_tail(x, df) - alpha;
    for _ in 0..8 {
        let dens = match chi2_pdf(x, df) {
            Ok(d) if d > 0.0 => d,
            _ => break,
        };
        let next = x + err / dens;
        if !(next > 0.0) {
            break;
        }
        let next_err = chi2_upper_tail(next, df) - alpha;
        if next_err.abs() >= err.abs() {
            break;
        }
        x = next;
        err = next_err;
    }
    if err.abs() > 1e-10 {
        return Err(Error::ConvergenceFailure(format!(
            "critical value for df={df}, alpha={alpha} has tail error {err:e}"
        )));
    }
    Ok(x)
}

/// Observed counts for one design group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub n: u64,
    pub counts: Vec<u64>,
}

/// Click counts recorded under a measurement design.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    design: MeasurementDesign,
    groups: Vec<GroupCounts>,
}

impl ExperimentRecord {
    /// Checks that every group has one count per outcome and that counts sum
    /// to the declared totals.
    pub fn new(design: MeasurementDesign, groups: Vec<GroupCounts>) -> Result<Self> {
        if groups.len() != design.groups().len() {
            return Err(Error::CountMismatch {
                group: groups.len().min(design.groups().len()),
                detail: format!(
                    "{} count groups for a design with {} groups",
                    groups.len(),
                    design.groups().len()
                ),
            });
        }
        for (g, (counts, group)) in groups.iter().zip(design.groups()).enumerate() {
            if counts.counts.len() != group.povm.len() {
                return Err(Error::CountMismatch {
                    group: g,
                    detail: format!(
                        "{} counts for a POVM with {} outcomes",
                        counts.counts.len(),
                        group.povm.len()
                    ),
                });
            }
            let total: u64 = counts.counts.iter().sum();
            if total != counts.n {
                return Err(Error::CountMismatch {
                    group: g,
                    detail: format!("counts sum to {total}, declared n = {}", counts.n),
                });
            }
        }
        if groups.iter().all(|g| g.n == 0) {
            return Err(Error::CountMismatch {
                group: 0,
                detail: "no shots recorded".into(),
            });
        }
        Ok(Self { design, groups })
    }

    pub fn design(&self) -> &MeasurementDesign {
        &self.design
    }

    pub fn groups(&self) -> &[GroupCounts] {
        &self.groups
    }

    pub fn total_shots(&self) -> u64 {
        self.groups.iter().map(|g| g.n).sum()
    }
}

/// The χ² statistic summed over groups that received shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub value: f64,
    pub df: usize,
    pub per_group: Vec<f64>,
    pub small_count_warning: bool,
    /// The hypothesis was rank deficient and its regularization was used for `p_i`.
    pub regularized: bool,
}

/// `c² = Σ_groups Σ_i (n_i - n p_i)² / (n p_i)` with `p_i = Tr[E_i σ]`.
pub fn test_statistic(record: &ExperimentRecord, sigma: &DensityMatrix) -> Result<Statistic> {
    let (sigma, regularized) = sigma.regularized();
    let mut value = 0.0;
    let mut df = 0;
    let mut per_group = Vec::with_capacity(record.groups.len());
    let mut small_count_warning = false;
    for (g, (counts, group)) in record.groups.iter().zip(record.design.groups()).enumerate() {
        if counts.n == 0 {
            per_group.push(0.0);
            continue;
        }
        let p = induced_distribution(&group.povm, &sigma)?;
        let n = counts.n as f64;
        let mut stat = 0.0;
        for (i, (&pi, &ni)) in p.probs().iter().zip(&counts.counts).enumerate() {
            if pi < tolerance::P_FLOOR {
                return Err(Error::ZeroProbabilityOutcome {
                    group: g,
                    outcome: i,
                    p: pi,
                });
            }
            let expected = n * pi;
            small_count_warning |= expected < SMALL_EXPECTED_COUNT;
            let d = ni as f64 - expected;
            stat += d * d / expected;
        }
        value += stat;
        df += counts.counts.len() - 1;
        per_group.push(stat);
    }
    Ok(Statistic {
        value,
        df,
        per_group,
        small_count_warning,
        regularized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    /// Fluctuations too large: the data disagree with the hypothesis.
    RejectHigh,
    /// Fluctuations too small: the data match the expectations suspiciously well.
    RejectLow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub df: usize,
    pub alpha: f64,
    pub two_sided: bool,
    /// Upper critical value: `χ²_α` one-sided, `χ²_{α/2}` two-sided.
    pub critical_value: f64,
    /// Lower critical value, two-sided only.
    pub critical_value_low: Option<f64>,
    /// Upper-tail mass at the statistic.
    pub p_value: f64,
    pub lower_tail: f64,
    pub decision: Decision,
    pub small_count_warning: bool,
    pub regularized: bool,
}

pub fn run_test(
    record: &ExperimentRecord,
    sigma: &DensityMatrix,
    alpha: f64,
    two_sided: bool,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} not in (0, 1)")));
    }
    let stat = test_statistic(record, sigma)?;
    if stat.df == 0 {
        return Err(Error::InvalidDesign(
            "no degrees of freedom: every measured group has a single outcome".into(),
        ));
    }
    decide(stat, alpha, two_sided)
}

/// Applies the one- or two-sided rule to an already computed statistic.
pub fn decide(stat: Statistic, alpha: f64, two_sided: bool) -> Result<TestReport> {
    let df = stat.df;
    let p_value = chi2_upper_tail(stat.value, df);
    let lower_tail = chi2_lower_tail(stat.value, df);
    let (critical_value, critical_value_low, decision) = if two_sided {
        let half = alpha / 2.0;
        let decision = if p_value <= half {
            Decision::RejectHigh
        } else if lower_tail <= half {
            Decision::RejectLow
        } else {
            Decision::Accept
        };
        (
            critical_value(df, half)?,
            Some(critical_value(df, 1.0 - half)?),
            decision,
        )
    } else {
        let crit = critical_value(df, alpha)?;
        let decision = if stat.value >= crit {
            Decision::RejectHigh
        } else {
            Decision::Accept
        };
        (crit, None, decision)
    };
    Ok(TestReport {
        statistic: stat.value,
        df,
        alpha,
        two_sided,
        critical_value,
        critical_value_low,
        p_value,
        lower_tail,
        decision,
        small_count_warning: stat.small_count_warning,
        regularized: stat.regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::HermitianMatrix;
    use crate::povm::validate_povm;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn z_design() -> MeasurementDesign {
        MeasurementDesign::single(
            validate_povm(vec![
                HermitianMatrix::diagonal(&[1.0, 0.0]),
                HermitianMatrix::diagonal(&[0.0, 1.0]),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn pdf_df2_closed_form() {
        assert_eq!(chi2_pdf(0.0, 2).unwrap(), 0.5);
        for &x in &[0.1, 1.0, 3.0, 12.0] {
            assert!(close(chi2_pdf(x, 2).unwrap(), 0.5 * (-x / 2.0f64).exp(), 1e-15));
        }
    }

    #[test]
    fn pdf_df1_at_zero_is_a_domain_edge() {
        assert!(matches!(chi2_pdf(0.0, 1), Err(Error::DomainEdge(_))));
        assert!(chi2_pdf(1e-8, 1).unwrap().is_finite());
        assert!(chi2_pdf(-1.0, 3).is_err());
        assert_eq!(chi2_pdf(0.0, 5).unwrap(), 0.0);
    }

    #[test]
    fn upper_tail_examples() {
        assert_eq!(chi2_upper_tail(0.0, 4), 1.0);
        let x = 2.0 * 20f64.ln();
        assert!(close(chi2_upper_tail(x, 2), 0.05, 1e-15));
        assert!(close(chi2_upper_tail(7.8147, 3), 0.05, 1e-4));
    }

    #[test]
    fn critical_value_df2() {
        let x = critical_value(2, 0.05).unwrap();
        assert!(close(x, 2.0 * 20f64.ln(), 1e-12));
    }

    #[test]
    fn critical_value_median_approximation() {
        for df in [50usize, 100, 400] {
            let x = critical_value(df, 0.5).unwrap();
            let approx = df as f64 - 2.0 / 3.0;
            assert!(((x - approx) / approx).abs() < 0.01);
            assert!(close(chi2_upper_tail(x, df), 0.5, 1e-10));
        }
    }

    #[test]
    fn critical_value_rejects_bad_alpha() {
        assert!(critical_value(3, 0.0).is_err());
        assert!(critical_value(3, 1.0).is_err());
        assert!(critical_value(0, 0.05).is_err());
    }

    #[test]
    fn statistic_examples() {
        let sigma = DensityMatrix::maximally_mixed(2);
        let rec = ExperimentRecord::new(z_design(), vec![GroupCounts { n: 100, counts: vec![60, 40] }]).unwrap();
        let s = test_statistic(&rec, &sigma).unwrap();
        assert!(close(s.value, 4.0, 1e-12));
        assert_eq!(s.df, 1);
        assert!(!s.small_count_warning);

        let exact = ExperimentRecord::new(z_design(), vec![GroupCounts { n: 100, counts: vec![50, 50] }]).unwrap();
        assert_eq!(test_statistic(&exact, &sigma).unwrap().value, 0.0);
    }

    #[test]
    fn small_counts_warn() {
        let sigma = DensityMatrix::maximally_mixed(2);
        let rec = ExperimentRecord::new(z_design(), vec![GroupCounts { n: 6, counts: vec![3, 3] }]).unwrap();
        assert!(test_statistic(&rec, &sigma).unwrap().small_count_warning);
    }

    #[test]
    fn record_count_mismatches() {
        assert!(matches!(
            ExperimentRecord::new(z_design(), vec![GroupCounts { n: 10, counts: vec![3, 3] }]),
            Err(Error::CountMismatch { .. })
        ));
        assert!(matches!(
            ExperimentRecord::new(z_design(), vec![GroupCounts { n: 6, counts: vec![3, 2, 1] }]),
            Err(Error::CountMismatch { .. })
        ));
        assert!(ExperimentRecord::new(z_design(), vec![]).is_err());
    }

    #[test]
    fn regularized_pure_hypothesis_gives_finite_statistic() {
        let pure = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let rec = ExperimentRecord::new(z_design(), vec![GroupCounts { n: 100, counts: vec![100, 0] }]).unwrap();
        let s = test_statistic(&rec, &pure).unwrap();
        assert!(s.regularized);
        assert!(s.value < 1e-6);
    }

    #[test]
    fn zero_probability_outcome_is_rejected() {
        let povm = validate_povm(vec![
            HermitianMatrix::diagonal(&[1.0, 1.0 - 1e-6]),
            HermitianMatrix::diagonal(&[0.0, 1e-6]),
        ])
        .unwrap();
        let pure = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let rec = ExperimentRecord::new(
            MeasurementDesign::single(povm),
            vec![GroupCounts { n: 100, counts: vec![100, 0] }],
        )
        .unwrap();
        assert!(matches!(
            test_statistic(&rec, &pure),
            Err(Error::ZeroProbabilityOutcome { group: 0, outcome: 1, .. })
        ));
    }

    #[test]
    fn two_sided_rejects_too_good_fit() {
        let stat = Statistic { value: 0.0, df: 3, per_group: vec![0.0], small_count_warning: false, regularized: false };
        let r = decide(stat, 0.05, true).unwrap();
        assert_eq!(r.decision, Decision::RejectLow);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.lower_tail, 0.0);
    }

    #[test]
    fn statistic_at_its_mean_is_accepted() {
        let stat = Statistic { value: 3.0, df: 3, per_group: vec![3.0], small_count_warning: false, regularized: false };
        let r = decide(stat, 0.05, false).unwrap();
        assert_eq!(r.decision, Decision::Accept);
        assert!(r.critical_value_low.is_none());
        let big = Statistic { value: 8.0, df: 3, per_group: vec![8.0], small_count_warning: false, regularized: false };
        assert_eq!(decide(big, 0.05, false).unwrap().decision, Decision::RejectHigh);
    }
}
