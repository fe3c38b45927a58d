//! Seeded generation of click records from a true state.
//!
//! Every draw comes from a ChaCha20 stream keyed by `seed_from_u64(seed)`.
//! Groups are sampled in design order and, within a group, outcomes are drawn
//! as a chain of conditional binomials, so a record is a pure function of the
//! plan.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chi2stat::{critical_value, ExperimentRecord, GroupCounts, SMALL_EXPECTED_COUNT};
use crate::error::{Error, Result};
use crate::operators::DensityMatrix;
use crate::povm::{induced_distribution, MeasurementDesign};
use crate::special::ln_gamma;
use crate::tolerance;

/// Identifier written into plan and record files.
pub const PRNG_ID: &str = "chacha20-rand_chacha-0.9";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Seed of the `index`-th independent trial.
    pub fn trial(self, index: u64) -> Seed {
        Seed(self.0.wrapping_add(index))
    }

    pub fn rng(self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.0)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub design: MeasurementDesign,
    pub true_state: DensityMatrix,
    pub n_total: u64,
    pub seed: Seed,
}

/// Largest-remainder rounding of `n_total · fraction_g`.
/// Ties in the remainder go to the lower group index.
pub fn allocate_shots(fractions: &[f64], n_total: u64) -> Vec<u64> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n_total as f64).collect();
    let mut shots: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = shots.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = n_total.saturating_sub(assigned) as usize;
    for &g in order.iter().filter(|&&g| fractions[g] > 0.0).cycle().take(missing) {
        shots[g] += 1;
    }
    shots
}

/// Uniform double in `[0, 1)` from the top 53 bits of one output word.
fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Binomial(n, p) by inverse transform, visiting outcomes outward from the mode.
pub fn sample_binomial(rng: &mut impl RngCore, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let nf = n as f64;
    let mode = (((nf + 1.0) * p).floor() as u64).min(n);
    let mf = mode as f64;
    let ln_pmf = ln_gamma(nf + 1.0) - ln_gamma(mf + 1.0) - ln_gamma(nf - mf + 1.0)
        + mf * p.ln()
        + (nf - mf) * (-p).ln_1p();
    let odds = p / (1.0 - p);
    let u = uniform(rng);

    let mut acc = ln_pmf.exp();
    if u < acc {
        return mode;
    }
    let (mut hi, mut hi_pmf) = (mode, acc);
    let (mut lo, mut lo_pmf) = (mode, acc);
    loop {
        let can_up = hi < n;
        let can_down = lo > 0;
        if !can_up && !can_down {
            return mode;
        }
        if can_up {
            hi_pmf *= (n - hi) as f64 / (hi + 1) as f64 * odds;
            hi += 1;
            acc += hi_pmf;
            if u < acc {
                return hi;
            }
        }
        if can_down {
            lo_pmf *= lo as f64 / (n - lo + 1) as f64 / odds;
            lo -= 1;
            acc += lo_pmf;
            if u < acc {
                return lo;
            }
        }
    }
}

/// Multinomial(n, q) as a chain of conditional binomials.
pub fn sample_multinomial(rng: &mut impl RngCore, n: u64, q: &[f64]) -> Vec<u64> {
    let mut counts = vec![0; q.len()];
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, &qi) in q.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == q.len() {
            counts[i] = remaining;
            break;
        }
        let p = if mass > 0.0 { (qi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = sample_binomial(rng, remaining, p);
        counts[i] = k;
        remaining -= k;
        mass -= qi;
    }
    counts
}

fn outcome_distributions(design: &MeasurementDesign, state: &DensityMatrix) -> Result<Vec<Vec<f64>>> {
    design
        .groups()
        .iter()
        .map(|g| induced_distribution(&g.povm, state).map(|p| p.probs().to_vec()))
        .collect()
}

fn draw_groups(rng: &mut impl RngCore, shots: &[u64], q: &[Vec<f64>]) -> Vec<GroupCounts> {
    shots
        .iter()
        .zip(q)
        .map(|(&n, qg)| GroupCounts {
            n,
            counts: sample_multinomial(rng, n, qg),
        })
        .collect()
}

pub fn sample_record(plan: &SimulationPlan) -> Result<ExperimentRecord> {
    if plan.n_total == 0 {
        return Err(Error::InvalidArgument("n_total must be positive".into()));
    }
    let q = outcome_distributions(&plan.design, &plan.true_state)?;
    let fractions: Vec<f64> = plan.design.groups().iter().map(|g| g.fraction).collect();
    let shots = allocate_shots(&fractions, plan.n_total);
    let groups = draw_groups(&mut plan.seed.rng(), &shots, &q);
    ExperimentRecord::new(plan.design.clone(), groups)
}

/// Precomputed hypothesis and true distributions for repeated trials at a
/// fixed total shot count. Produces the same counts as [`sample_record`] and
/// the same statistic as `test_statistic` for each trial seed.
#[derive(Debug, Clone)]
pub struct Harness {
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    shots: Vec<u64>,
    df: usize,
    small_count_warning: bool,
}

impl Harness {
    pub fn new(sigma: &DensityMatrix, rho: &DensityMatrix, design: &MeasurementDesign, n_total: u64) -> Result<Self> {
        if n_total == 0 {
            return Err(Error::InvalidArgument("n_total must be positive".into()));
        }
        let (sigma, _) = sigma.regularized();
        let p = outcome_distributions(design, &sigma)?;
        let q = outcome_distributions(design, rho)?;
        let fractions: Vec<f64> = design.groups().iter().map(|g| g.fraction).collect();
        let shots = allocate_shots(&fractions, n_total);
        let mut df = 0;
        let mut small_count_warning = false;
        for (g, (pg, &n)) in p.iter().zip(&shots).enumerate() {
            if n == 0 {
                continue;
            }
            if let Some((i, &pi)) = pg.iter().enumerate().find(|(_, &pi)| pi < tolerance::P_FLOOR) {
                return Err(Error::ZeroProbabilityOutcome { group: g, outcome: i, p: pi });
            }
            small_count_warning |= pg.iter().any(|&pi| n as f64 * pi < SMALL_EXPECTED_COUNT);
            df += pg.len() - 1;
        }
        Ok(Self {
            p,
            q,
            shots,
            df,
            small_count_warning,
        })
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn shots(&self) -> &[u64] {
        &self.shots
    }

    pub fn small_count_warning(&self) -> bool {
        self.small_count_warning
    }

    pub fn sample(&self, seed: Seed) -> Vec<GroupCounts> {
        draw_groups(&mut seed.rng(), &self.shots, &self.q)
    }

    pub fn statistic(&self, groups: &[GroupCounts]) -> f64 {
        let mut value = 0.0;
        for (counts, pg) in groups.iter().zip(&self.p) {
            if counts.n == 0 {
                continue;
            }
            let n = counts.n as f64;
            let mut stat = 0.0;
            for (&pi, &ni) in pg.iter().zip(&counts.counts) {
                let expected = n * pi;
                let d = ni as f64 - expected;
                stat += d * d / expected;
            }
            value += stat;
        }
        value
    }

    /// Statistics of trials `0..trials`, trial `t` seeded with `seed + t`.
    pub fn statistics(&self, seed: Seed, trials: u64) -> Vec<f64> {
        (0..trials)
            .into_par_iter()
            .map(|t| self.statistic(&self.sample(seed.trial(t))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub n: u64,
    pub rejection_rate: f64,
    pub trials: u64,
}

pub const MIN_POWER_TRIALS: u64 = 100;

/// One-sided rejection rate at level `alpha` for each total shot count.
/// Every grid point reuses trial seeds `seed + t`.
pub fn power_curve(
    sigma: &DensityMatrix,
    rho: &DensityMatrix,
    design: &MeasurementDesign,
    alpha: f64,
    n_grid: &[u64],
    trials: u64,
    seed: Seed,
) -> Result<Vec<PowerPoint>> {
    if trials < MIN_POWER_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "power curve needs at least {MIN_POWER_TRIALS} trials, got {trials}"
        )));
    }
    n_grid
        .iter()
        .map(|&n| {
            let harness = Harness::new(sigma, rho, design, n)?;
            let crit = critical_value(harness.df(), alpha)?;
            let rejected = harness
                .statistics(seed, trials)
                .into_iter()
                .filter(|&c| c >= crit)
                .count();
            Ok(PowerPoint {
                n,
                rejection_rate: rejected as f64 / trials as f64,
                trials,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chi2stat::test_statistic;
    use crate::povm::{qubit_six_outcome, validate_povm, DesignGroup, Povm};
    use crate::operators::HermitianMatrix;

    fn computational(d: usize) -> Povm {
        let elements = (0..d)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                HermitianMatrix::diagonal(&v)
            })
            .collect();
        validate_povm(elements).unwrap()
    }

    #[test]
    fn allocation_sums_and_rounds() {
        let shots = allocate_shots(&[0.5, 0.25, 0.25], 7);
        assert_eq!(shots.iter().sum::<u64>(), 7);
        assert_eq!(shots, vec![3, 2, 2]);
        let shots = allocate_shots(&[1.0 / 3.0; 3], 100);
        assert_eq!(shots, vec![34, 33, 33]);
        assert_eq!(allocate_shots(&[0.0, 1.0], 5), vec![0, 5]);
    }

    #[test]
    fn binomial_edges() {
        let mut rng = Seed(1).rng();
        assert_eq!(sample_binomial(&mut rng, 0, 0.3), 0);
        assert_eq!(sample_binomial(&mut rng, 10, 0.0), 0);
        assert_eq!(sample_binomial(&mut rng, 10, 1.0), 10);
        for _ in 0..100 {
            assert!(sample_binomial(&mut rng, 5, 0.5) <= 5);
        }
    }

    #[test]
    fn binomial_mean_large_n() {
        let mut rng = Seed(2).rng();
        let (n, p) = (1_000_000u64, 0.013);
        let m: f64 = (0..2000).map(|_| sample_binomial(&mut rng, n, p) as f64).sum::<f64>() / 2000.0;
        let se = (n as f64 * p * (1.0 - p) / 2000.0).sqrt();
        assert!((m - n as f64 * p).abs() < 4.0 * se);
    }

    #[test]
    fn eigenstate_gives_one_outcome() {
        let design = MeasurementDesign::single(computational(3));
        let plan = SimulationPlan {
            design,
            true_state: DensityMatrix::diagonal(&[0.0, 1.0, 0.0]).unwrap(),
            n_total: 1000,
            seed: Seed(9),
        };
        let rec = sample_record(&plan).unwrap();
        assert_eq!(rec.groups()[0].counts, vec![0, 1000, 0]);
    }

    #[test]
    fn same_seed_same_record() {
        let design = MeasurementDesign::single(qubit_six_outcome(0.8).unwrap());
        let plan = SimulationPlan {
            design,
            true_state: DensityMatrix::diagonal(&[0.6, 0.4]).unwrap(),
            n_total: 1234,
            seed: Seed(77),
        };
        assert_eq!(sample_record(&plan).unwrap(), sample_record(&plan).unwrap());
        let other = SimulationPlan { seed: Seed(78), ..plan.clone() };
        assert_ne!(sample_record(&plan).unwrap(), sample_record(&other).unwrap());
    }

    #[test]
    fn frequencies_converge() {
        let design = MeasurementDesign::single(qubit_six_outcome(0.8).unwrap());
        let rho = DensityMatrix::diagonal(&[0.7, 0.3]).unwrap();
        let q = induced_distribution(&design.groups()[0].povm, &rho).unwrap();
        let n = 1_000_000u64;
        let plan = SimulationPlan {
            design,
            true_state: rho,
            n_total: n,
            seed: Seed(3),
        };
        let rec = sample_record(&plan).unwrap();
        for (&c, &qi) in rec.groups()[0].counts.iter().zip(q.probs()) {
            let f = c as f64 / n as f64;
            assert!((f - qi).abs() <= 5.0 * (qi * (1.0 - qi) / n as f64).sqrt());
        }
    }

    #[test]
    fn uneven_allocation_reported() {
        let a = computational(2);
        let b = qubit_six_outcome(1.0).unwrap();
        let design = MeasurementDesign::new(vec![
            DesignGroup { povm: a, fraction: 0.5 },
            DesignGroup { povm: b, fraction: 0.5 },
        ])
        .unwrap();
        let plan = SimulationPlan {
            design,
            true_state: DensityMatrix::maximally_mixed(2),
            n_total: 101,
            seed: Seed(0),
        };
        let rec = sample_record(&plan).unwrap();
        assert_eq!(rec.groups()[0].n + rec.groups()[1].n, 101);
        assert_eq!(rec.groups()[0].n, 51);
    }

    #[test]
    fn harness_matches_record_path() {
        let design = MeasurementDesign::single(qubit_six_outcome(0.84).unwrap());
        let sigma = DensityMatrix::diagonal(&[0.7, 0.3]).unwrap();
        let rho = DensityMatrix::diagonal(&[0.6, 0.4]).unwrap();
        let h = Harness::new(&sigma, &rho, &design, 500).unwrap();
        for t in 0..5 {
            let seed = Seed(40).trial(t);
            let plan = SimulationPlan {
                design: design.clone(),
                true_state: rho.clone(),
                n_total: 500,
                seed,
            };
            let rec = sample_record(&plan).unwrap();
            assert_eq!(rec.groups(), h.sample(seed).as_slice());
            let stat = test_statistic(&rec, &sigma).unwrap();
            assert_eq!(stat.value, h.statistic(rec.groups()));
            assert_eq!(stat.df, h.df());
        }
    }

    #[test]
    fn power_curve_needs_trials() {
        let design = MeasurementDesign::single(computational(2));
        let s = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            power_curve(&s, &s, &design, 0.05, &[10], 10, Seed(0)),
            Err(Error::InvalidArgument(_))
        ));
    }
}
