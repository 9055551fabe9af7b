//! Closed-form detection, miss and false-detection probabilities for
//! two-pixel sampling, plus a literal Monte Carlo simulation to check them.
//!
//! With `N` candidate pixels of which `n` lie on a line, one draw of two
//! distinct pixels lands both on the line with probability
//! `n(n-1) / (N(N-1))`. Restricting sampling to a region holding a fraction
//! `I_c` of the image shrinks the population to `N·I_c` while the line stays
//! whole, so the hit probability grows. Noise is modelled as spread uniformly,
//! so a spurious structure of `m` pixels keeps only `m·I_c` of them.
//!
//! Over `M` independent draws the hit count is binomial; a line is missed
//! when it collects at most `k0` hits, and a spurious structure is falsely
//! accepted when it collects more than `k0`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

/// Largest `M` evaluated with exact rational arithmetic.
pub const EXACT_LIMIT: u64 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ProbError {
    #[error("population N = {0} must be at least 2")]
    SmallPopulation(f64),
    #[error("{what} = {count} exceeds the population {population}")]
    CountExceedsPopulation {
        what: &'static str,
        count: f64,
        population: f64,
    },
    #[error("segmentation coefficient {0} outside (0, 1]")]
    Coefficient(f64),
    #[error("k = {k} outside 0..={m}")]
    CountRange { k: u64, m: u64 },
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("partitions must be at least 1")]
    NoPartitions,
    #[error("{what} = {value} is not a whole number of pixels")]
    Fractional { what: &'static str, value: f64 },
    #[error("M must be at least 1")]
    NoExperiments,
}

fn clamp_unit(value: f64, what: &str) -> f64 {
    if !(0.0..=1.0).contains(&value) {
        log::debug!("{what}: clamped {value} into [0, 1]");
    }
    value.clamp(0.0, 1.0)
}

fn pair_ratio(k: u64, population: u64) -> f64 {
    let num = BigInt::from(k) * BigInt::from(k.saturating_sub(1));
    let den = BigInt::from(population) * BigInt::from(population - 1);
    BigRational::new(num, den).to_f64().expect("finite ratio")
}

fn check_coefficient(i_c: f64) -> Result<(), ProbError> {
    if !(i_c > 0.0 && i_c <= 1.0) {
        return Err(ProbError::Coefficient(i_c));
    }
    Ok(())
}

/// `n(n-1) / (N(N-1))`, evaluated exactly.
pub fn p_hit(n: u64, total: u64) -> Result<f64, ProbError> {
    if total < 2 {
        return Err(ProbError::SmallPopulation(total as f64));
    }
    if n > total {
        return Err(ProbError::CountExceedsPopulation {
            what: "n",
            count: n as f64,
            population: total as f64,
        });
    }
    Ok(pair_ratio(n, total))
}

/// `n(n-1) / ((N·I_c)(N·I_c - 1))`: the line lies wholly inside the region.
pub fn p_hit_improved(n: u64, total: u64, i_c: f64) -> Result<f64, ProbError> {
    check_coefficient(i_c)?;
    let population = total as f64 * i_c;
    if population < 2.0 {
        return Err(ProbError::SmallPopulation(population));
    }
    let n_f = n as f64;
    if n_f > population {
        return Err(ProbError::CountExceedsPopulation {
            what: "n",
            count: n_f,
            population,
        });
    }
    if i_c == 1.0 {
        return Ok(pair_ratio(n, total));
    }
    let value = n_f * (n_f - 1.0).max(0.0) / (population * (population - 1.0));
    Ok(clamp_unit(value, "p_hit_improved"))
}

/// `m(m-1) / (N(N-1))`.
pub fn p_noise(m: u64, total: u64) -> Result<f64, ProbError> {
    if total < 2 {
        return Err(ProbError::SmallPopulation(total as f64));
    }
    if m > total {
        return Err(ProbError::CountExceedsPopulation {
            what: "m",
            count: m as f64,
            population: total as f64,
        });
    }
    Ok(pair_ratio(m, total))
}

/// `(m·I_c)(m·I_c - 1) / ((N·I_c)(N·I_c - 1))`: only the fraction `I_c` of
/// uniformly spread noise survives masking.
pub fn p_noise_improved(m: u64, total: u64, i_c: f64) -> Result<f64, ProbError> {
    check_coefficient(i_c)?;
    if m > total {
        return Err(ProbError::CountExceedsPopulation {
            what: "m",
            count: m as f64,
            population: total as f64,
        });
    }
    let population = total as f64 * i_c;
    if population < 2.0 {
        return Err(ProbError::SmallPopulation(population));
    }
    if i_c == 1.0 {
        return Ok(pair_ratio(m, total));
    }
    let surviving = m as f64 * i_c;
    let value = surviving * (surviving - 1.0) / (population * (population - 1.0));
    Ok(clamp_unit(value, "p_noise_improved"))
}

fn check_binomial(m: u64, k: u64, p: f64) -> Result<(), ProbError> {
    if k > m {
        return Err(ProbError::CountRange { k, m });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(ProbError::Probability(p));
    }
    Ok(())
}

fn exact_terms(m: u64, p: f64) -> Vec<BigRational> {
    let p = BigRational::from_float(p).expect("p is finite");
    let q = BigRational::one() - &p;
    let mut binom = BigInt::one();
    let mut terms = Vec::with_capacity(m as usize + 1);
    for k in 0..=m {
        if k > 0 {
            binom = binom * BigInt::from(m - k + 1) / BigInt::from(k);
        }
        let term = BigRational::from_integer(binom.clone())
            * num_traits::pow(p.clone(), k as usize)
            * num_traits::pow(q.clone(), (m - k) as usize);
        terms.push(term);
    }
    terms
}

fn ln_choose(m: u64, k: u64) -> f64 {
    libm::lgamma(m as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((m - k) as f64 + 1.0)
}

fn log_domain_pmf(m: u64, k: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == m { 1.0 } else { 0.0 };
    }
    let ln = ln_choose(m, k) + k as f64 * p.ln() + (m - k) as f64 * (-p).ln_1p();
    ln.exp()
}

fn to_unit(value: &BigRational) -> f64 {
    if value.is_zero() {
        return 0.0;
    }
    value.to_f64().expect("probability is finite")
}

/// `C(M,k) p^k (1-p)^(M-k)`; exact for `M <= 64`, log-domain above.
pub fn binom_pmf(m: u64, k: u64, p: f64) -> Result<f64, ProbError> {
    check_binomial(m, k, p)?;
    if m <= EXACT_LIMIT {
        return Ok(to_unit(&exact_terms(m, p)[k as usize]));
    }
    Ok(clamp_unit(log_domain_pmf(m, k, p), "binom_pmf"))
}

/// `P(ξ <= k0)`: the line collects at most `k0` hits in `M` draws.
pub fn p_miss(m: u64, k0: u64, p: f64) -> Result<f64, ProbError> {
    check_binomial(m, k0, p)?;
    if m <= EXACT_LIMIT {
        let terms = exact_terms(m, p);
        let sum = terms[..=k0 as usize]
            .iter()
            .fold(BigRational::zero(), |acc, t| acc + t);
        return Ok(to_unit(&sum));
    }
    let lower: f64 = (0..=k0).map(|k| log_domain_pmf(m, k, p)).sum();
    let upper: f64 = (k0 + 1..=m).map(|k| log_domain_pmf(m, k, p)).sum();
    // normalizing by the total keeps the pair exactly complementary
    Ok(clamp_unit(lower / (lower + upper), "p_miss"))
}

/// `1 - P(ξ <= k0)`, summed over the upper tail.
pub fn p_false(m: u64, k0: u64, p: f64) -> Result<f64, ProbError> {
    check_binomial(m, k0, p)?;
    if m <= EXACT_LIMIT {
        let terms = exact_terms(m, p);
        let sum = terms[k0 as usize + 1..]
            .iter()
            .fold(BigRational::zero(), |acc, t| acc + t);
        return Ok(to_unit(&sum));
    }
    let lower: f64 = (0..=k0).map(|k| log_domain_pmf(m, k, p)).sum();
    let upper: f64 = (k0 + 1..=m).map(|k| log_domain_pmf(m, k, p)).sum();
    Ok(clamp_unit(upper / (lower + upper), "p_false"))
}

/// One sampling scenario of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingScenario {
    /// Total candidate pixels `N`.
    pub total: u64,
    /// Pixels on the true line.
    pub n: u64,
    /// Pixels on a spurious structure.
    pub m: u64,
    pub i_c: f64,
    /// Number of sampling experiments.
    pub experiments: u64,
    /// Detection-count cutoff.
    pub k0: u64,
}

impl SamplingScenario {
    pub fn validate(&self) -> Result<(), ProbError> {
        if self.total < 2 {
            return Err(ProbError::SmallPopulation(self.total as f64));
        }
        for (what, count) in [("n", self.n), ("m", self.m)] {
            if count > self.total {
                return Err(ProbError::CountExceedsPopulation {
                    what,
                    count: count as f64,
                    population: self.total as f64,
                });
            }
        }
        check_coefficient(self.i_c)?;
        if self.experiments == 0 {
            return Err(ProbError::NoExperiments);
        }
        if self.k0 > self.experiments {
            return Err(ProbError::CountRange {
                k: self.k0,
                m: self.experiments,
            });
        }
        Ok(())
    }
}

/// Which pixel population the simulated draws come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// All `N` pixels.
    Whole,
    /// The `N·I_c` pixels left after region segmentation.
    Segmented,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub probability: f64,
    pub std_error: f64,
    pub hits: u64,
    pub trials: u64,
    pub partitions: u64,
}

impl Estimate {
    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.probability - value).abs() <= k * self.std_error
    }
}

fn whole_count(value: f64, what: &'static str) -> Result<u64, ProbError> {
    let rounded = value.round();
    if (value - rounded).abs() > 1e-9 {
        return Err(ProbError::Fractional { what, value });
    }
    Ok(rounded as u64)
}

/// Draws `trials` unordered pairs of distinct pixels from a population of
/// `population` pixels whose first `target` pixels are "on the line", split
/// across `partitions` independent substreams of `seed`.
pub fn simulate_pairs(
    population: u64,
    target: u64,
    trials: u64,
    seed: u64,
    partitions: u64,
) -> Result<Estimate, ProbError> {
    if population < 2 {
        return Err(ProbError::SmallPopulation(population as f64));
    }
    if target > population {
        return Err(ProbError::CountExceedsPopulation {
            what: "target",
            count: target as f64,
            population: population as f64,
        });
    }
    if trials == 0 {
        return Err(ProbError::NoTrials);
    }
    if partitions == 0 {
        return Err(ProbError::NoPartitions);
    }
    let share = |i: u64| trials / partitions + u64::from(i < trials % partitions);
    let hits: u64 = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..partitions)
            .map(|i| {
                scope.spawn(move || {
                    let mut rng = SplitMix64::substream(seed, i);
                    let mut hits = 0u64;
                    for _ in 0..share(i) {
                        let (a, b) = rng.distinct_pair(population as usize);
                        if (a as u64) < target && (b as u64) < target {
                            hits += 1;
                        }
                    }
                    hits
                })
            })
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("simulation worker"))
            .sum()
    });
    let probability = hits as f64 / trials as f64;
    Ok(Estimate {
        probability,
        std_error: (probability * (1.0 - probability) / trials as f64).sqrt(),
        hits,
        trials,
        partitions,
    })
}

/// Simulated probability that a draw lands both pixels on the true line.
pub fn monte_carlo_hit(
    scenario: &SamplingScenario,
    population: Population,
    trials: u64,
    seed: u64,
    partitions: u64,
) -> Result<Estimate, ProbError> {
    scenario.validate()?;
    let pool = match population {
        Population::Whole => scenario.total,
        Population::Segmented => whole_count(scenario.total as f64 * scenario.i_c, "N*I_c")?,
    };
    simulate_pairs(pool, scenario.n, trials, seed, partitions)
}

/// Simulated probability that a draw lands both pixels on the spurious structure.
pub fn monte_carlo_noise(
    scenario: &SamplingScenario,
    population: Population,
    trials: u64,
    seed: u64,
    partitions: u64,
) -> Result<Estimate, ProbError> {
    scenario.validate()?;
    let (pool, target) = match population {
        Population::Whole => (scenario.total, scenario.m),
        Population::Segmented => (
            whole_count(scenario.total as f64 * scenario.i_c, "N*I_c")?,
            whole_count(scenario.m as f64 * scenario.i_c, "m*I_c")?,
        ),
    };
    simulate_pairs(pool, target, trials, seed, partitions)
}

/// Every closed-form quantity for one scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub p_hit: f64,
    pub p_hit_improved: f64,
    pub p_noise: f64,
    pub p_noise_improved: f64,
    pub p_miss: f64,
    pub p_miss_improved: f64,
    pub p_false: f64,
    pub p_false_improved: f64,
}

pub fn summarize(s: &SamplingScenario) -> Result<ScenarioSummary, ProbError> {
    s.validate()?;
    let p_hit_v = p_hit(s.n, s.total)?;
    let p_hit_i = p_hit_improved(s.n, s.total, s.i_c)?;
    let p_noise_v = p_noise(s.m, s.total)?;
    let p_noise_i = p_noise_improved(s.m, s.total, s.i_c)?;
    Ok(ScenarioSummary {
        p_hit: p_hit_v,
        p_hit_improved: p_hit_i,
        p_noise: p_noise_v,
        p_noise_improved: p_noise_i,
        p_miss: p_miss(s.experiments, s.k0, p_hit_v)?,
        p_miss_improved: p_miss(s.experiments, s.k0, p_hit_i)?,
        p_false: p_false(s.experiments, s.k0, p_noise_v)?,
        p_false_improved: p_false(s.experiments, s.k0, p_noise_i)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// All unordered pairs of `0..population`, counting those inside `0..target`.
    fn enumerate_pairs(population: u64, target: u64) -> f64 {
        let (mut hits, mut total) = (0u64, 0u64);
        for a in 0..population {
            for b in a + 1..population {
                total += 1;
                if a < target && b < target {
                    hits += 1;
                }
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn hit_probability_basics() {
        assert_eq!(p_hit(7, 7).unwrap(), 1.0);
        assert_eq!(p_hit(0, 7).unwrap(), 0.0);
        assert_eq!(p_hit(1, 7).unwrap(), 0.0);
        assert!(close(p_hit(2, 4).unwrap(), enumerate_pairs(4, 2), 1e-15));
        assert!(close(p_hit(2, 4).unwrap(), 1.0 / 6.0, 1e-15));
        assert!(matches!(p_hit(5, 4), Err(ProbError::CountExceedsPopulation { .. })));
        assert!(matches!(p_hit(0, 1), Err(ProbError::SmallPopulation(_))));
    }

    #[test]
    fn improved_hit_probability() {
        assert_eq!(p_hit_improved(30, 100, 1.0).unwrap(), p_hit(30, 100).unwrap());
        let improved = p_hit_improved(100, 1000, 0.4).unwrap();
        assert!(close(improved, 0.062_030, 5e-7), "{improved}");
        assert!(close(improved, enumerate_pairs(400, 100), 1e-12));
        assert!(close(p_hit(100, 1000).unwrap(), 0.009_910, 5e-7));
        assert!(close(p_hit_improved(40, 100, 0.4).unwrap(), 1.0, 1e-15));
        assert!(matches!(p_hit_improved(41, 100, 0.4), Err(ProbError::CountExceedsPopulation { .. })));
        assert!(matches!(p_hit_improved(1, 100, 0.01), Err(ProbError::SmallPopulation(_))));
        assert!(matches!(p_hit_improved(1, 100, 0.0), Err(ProbError::Coefficient(_))));
        assert!(matches!(p_hit_improved(1, 100, 1.5), Err(ProbError::Coefficient(_))));
    }

    #[test]
    fn noise_probabilities() {
        assert_eq!(p_noise(0, 1000).unwrap(), 0.0);
        assert_eq!(p_noise_improved(0, 1000, 0.4).unwrap(), 0.0);
        assert_eq!(p_noise_improved(100, 1000, 1.0).unwrap(), p_noise(100, 1000).unwrap());
        let improved = p_noise_improved(100, 1000, 0.4).unwrap();
        assert!(close(improved, 0.009_774, 5e-7), "{improved}");
        assert!(close(improved, enumerate_pairs(400, 40), 1e-12));
        assert!(improved < p_noise(100, 1000).unwrap());
        assert!(matches!(p_noise(1001, 1000), Err(ProbError::CountExceedsPopulation { .. })));
        // fewer than one surviving pixel clamps to zero
        assert_eq!(p_noise_improved(2, 1000, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn pmf_values() {
        assert_eq!(binom_pmf(1, 1, 0.3).unwrap(), 0.3);
        assert_eq!(binom_pmf(4, 2, 0.5).unwrap(), 0.375);
        let small = binom_pmf(1000, 0, 0.01).unwrap();
        assert!(close(small, 0.99f64.powi(1000), 1e-15), "{small}");
        assert!(close(small, 4.317e-5, 1e-8));
        assert!(matches!(binom_pmf(3, 4, 0.5), Err(ProbError::CountRange { .. })));
        assert!(matches!(binom_pmf(3, 1, 1.5), Err(ProbError::Probability(_))));
    }

    #[test]
    fn exact_and_log_paths_agree_at_the_boundary() {
        for &p in &[1e-4, 0.01, 0.062_03, 0.3, 0.5, 0.97] {
            for k in 0..=EXACT_LIMIT {
                let exact = binom_pmf(EXACT_LIMIT, k, p).unwrap();
                let logd = log_domain_pmf(EXACT_LIMIT, k, p);
                assert!(
                    (exact - logd).abs() <= 1e-12 * exact.max(1e-300) + 1e-300,
                    "k={k} p={p}: {exact} vs {logd}"
                );
            }
            let below = p_miss(EXACT_LIMIT, 5, p).unwrap();
            let above = p_miss(EXACT_LIMIT + 1, 5, p).unwrap();
            assert!(above <= below + 1e-15);
        }
    }

    #[test]
    fn miss_and_false_edge_cases() {
        assert_eq!(p_miss(10, 10, 0.3).unwrap(), 1.0);
        assert_eq!(p_miss(100, 10, 0.0).unwrap(), 1.0);
        assert_eq!(p_miss(100, 0, 0.0).unwrap(), 1.0);
        assert_eq!(p_false(100, 3, 0.0).unwrap(), 0.0);
        assert_eq!(p_false(10, 10, 0.3).unwrap(), 0.0);
        let weak = p_miss(100, 5, 0.009_910).unwrap();
        let strong = p_miss(100, 5, 0.062_030).unwrap();
        assert!(strong < weak, "{strong} vs {weak}");
    }

    #[test]
    fn improved_false_detection_is_smaller() {
        let plain = p_false(100, 5, p_noise(100, 1000).unwrap()).unwrap();
        let improved = p_false(100, 5, p_noise_improved(100, 1000, 0.4).unwrap()).unwrap();
        assert!(improved < plain, "{improved} vs {plain}");
    }

    #[test]
    fn simulation_basics() {
        let all = simulate_pairs(10, 10, 1000, 1, 1).unwrap();
        assert_eq!(all.probability, 1.0);
        let est = simulate_pairs(4, 2, 1_000_000, 7, 4).unwrap();
        assert!(est.agrees_with(1.0 / 6.0, 3.0), "{est:?}");
        assert_eq!(simulate_pairs(4, 2, 1_000_000, 7, 4).unwrap(), est);
        assert_eq!(simulate_pairs(1, 1, 10, 0, 1), Err(ProbError::SmallPopulation(1.0)));
        assert_eq!(simulate_pairs(4, 2, 0, 0, 1), Err(ProbError::NoTrials));
        assert_eq!(simulate_pairs(4, 2, 1, 0, 0), Err(ProbError::NoPartitions));
    }

    #[test]
    fn scenario_simulations_match_closed_forms() {
        let scenario = SamplingScenario {
            total: 1000,
            n: 100,
            m: 100,
            i_c: 0.4,
            experiments: 100,
            k0: 5,
        };
        let hit = monte_carlo_hit(&scenario, Population::Segmented, 400_000, 11, 2).unwrap();
        assert!(hit.agrees_with(p_hit_improved(100, 1000, 0.4).unwrap(), 3.0), "{hit:?}");
        let noise = monte_carlo_noise(&scenario, Population::Segmented, 400_000, 12, 2).unwrap();
        assert!(noise.agrees_with(p_noise_improved(100, 1000, 0.4).unwrap(), 3.0), "{noise:?}");
        let odd = SamplingScenario { i_c: 0.4005, ..scenario };
        assert!(matches!(
            monte_carlo_hit(&odd, Population::Segmented, 10, 1, 1),
            Err(ProbError::Fractional { .. })
        ));
    }

    proptest! {
        #[test]
        fn pmf_sums_to_one(m in 1u64..400, p in 0.0f64..=1.0) {
            let total: f64 = (0..=m).map(|k| binom_pmf(m, k, p).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
        }

        #[test]
        fn miss_and_false_are_complementary(m in 1u64..300, k0_frac in 0.0f64..=1.0, p in 0.0f64..=1.0) {
            let k0 = ((m as f64) * k0_frac) as u64;
            let sum = p_miss(m, k0, p).unwrap() + p_false(m, k0, p).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12, "{}", sum);
        }

        #[test]
        fn miss_is_monotone_in_p(m in 1u64..200, k0_frac in 0.0f64..1.0, p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let k0 = ((m as f64) * k0_frac) as u64;
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(p_miss(m, k0, hi).unwrap() <= p_miss(m, k0, lo).unwrap() + 1e-12);
            prop_assert!(p_false(m, k0, hi).unwrap() + 1e-12 >= p_false(m, k0, lo).unwrap());
        }

        #[test]
        fn segmentation_raises_hit_probability(total in 4u64..100_000, n_frac in 0.0f64..1.0, i_c in 0.01f64..=1.0) {
            let population = total as f64 * i_c;
            prop_assume!(population >= 2.0);
            let n = ((population.floor()) * n_frac) as u64;
            let plain = p_hit(n, total).unwrap();
            let improved = p_hit_improved(n, total, i_c).unwrap();
            prop_assert!((0.0..=1.0).contains(&improved));
            prop_assert!(improved >= plain);
            if i_c < 1.0 && n >= 2 {
                prop_assert!(improved > plain);
            }
        }
    }
}
