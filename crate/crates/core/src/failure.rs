//! Storm-induced line-failure model.
//!
//! Wind speeds drive a non-homogeneous Poisson failure rate per hour and km
//! of line: a background rate below a critical wind speed, growing
//! quadratically above it. Summing the hourly rates over the storm window
//! gives a per-km cumulative intensity per grid cell; weighting by the line
//! length inside each cell gives the per-line cumulative intensity
//! `λ_e`, and `p_e = 1 − exp(−λ_e)` is the probability the line fails at
//! least once during the storm (a failed line stays failed).
//!
//! Scenario sampling draws independent Bernoulli failures per line. For the
//! sample-average approximation a small scenario subset is selected from
//! the most probable draws; see [`select_scenarios`].
//!
//! All randomness flows through explicitly passed, seedable generators.
//! Parallel workers must derive their seeds from a master seed via
//! [`worker_seed`] so runs stay reproducible.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::wind::CellId;

#[derive(Debug, Error)]
pub enum FailureError {
    #[error("nhpp parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("hourly rate list is empty")]
    EmptyRates,
    #[error("negative rate {0} at hour index {1}")]
    NegativeRate(f64, usize),
    #[error("no cumulative intensity available for cell {0}")]
    MissingCellIntensity(CellId),
    #[error("scenario has {scenario} edges but {probabilities} probabilities given")]
    DimensionMismatch {
        scenario: usize,
        probabilities: usize,
    },
    #[error("failure probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("selection needs subset_size <= top <= n_samples, got {subset_size}/{top}/{n_samples}")]
    InvalidSelection {
        subset_size: usize,
        top: usize,
        n_samples: usize,
    },
    #[error("only {distinct} distinct scenarios sampled, {requested} requested ({shortfall} short)")]
    TooFewDistinct {
        distinct: usize,
        requested: usize,
        shortfall: usize,
    },
}

/// Parameters of the quadratic wind-to-failure-rate law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NhppParams<T> {
    /// Quadratic gain above the critical wind speed.
    pub alpha: T,
    /// Critical wind speed, m/s.
    pub v_crit: T,
    /// Background failure rate, failures/hr/km.
    pub lambda_norm: T,
}

impl<T: Scalar> Default for NhppParams<T> {
    /// Values fitted on historical Category 1-3 storm data.
    fn default() -> Self {
        Self {
            alpha: T::c(4175.6),
            v_crit: T::c(20.6),
            lambda_norm: T::c(3.5e-5),
        }
    }
}

impl<T: Scalar> NhppParams<T> {
    pub fn new(alpha: T, v_crit: T, lambda_norm: T) -> Result<Self, FailureError> {
        for (name, value) in [
            ("alpha", alpha),
            ("v_crit", v_crit),
            ("lambda_norm", lambda_norm),
        ] {
            if value <= T::zero() {
                return Err(FailureError::NonPositiveParameter {
                    name,
                    value: value.f64(),
                });
            }
        }
        Ok(Self {
            alpha,
            v_crit,
            lambda_norm,
        })
    }
}

/// Poisson failure rate (failures/hr/km) at wind speed `v` (m/s).
///
/// Continuous and non-decreasing in `v`; equals `lambda_norm` for
/// `v <= v_crit`.
pub fn poisson_rate<T: Scalar>(v: T, params: &NhppParams<T>) -> T {
    if v < params.v_crit {
        params.lambda_norm
    } else {
        let ratio = v / params.v_crit;
        (T::one() + params.alpha * (ratio * ratio - T::one())) * params.lambda_norm
    }
}

/// Per-km cumulative intensity for one cell: the sum of its hourly rates
/// over the storm window (`Δt = 1 h`).
pub fn cell_cumulative_intensity<T: Scalar>(rates: &[T]) -> Result<T, FailureError> {
    if rates.is_empty() {
        return Err(FailureError::EmptyRates);
    }
    let mut total = T::zero();
    for (i, &r) in rates.iter().enumerate() {
        if r < T::zero() {
            return Err(FailureError::NegativeRate(r.f64(), i));
        }
        total += r;
    }
    Ok(total)
}

/// Cumulative intensity of a line: its length in each cell weighted by the
/// cell's per-km cumulative intensity.
pub fn line_cumulative_intensity<T: Scalar>(
    lengths: &BTreeMap<CellId, T>,
    cell_intensity: &BTreeMap<CellId, T>,
) -> Result<T, FailureError> {
    let mut total = T::zero();
    for (cell, &len) in lengths {
        let lambda = cell_intensity
            .get(cell)
            .ok_or(FailureError::MissingCellIntensity(*cell))?;
        total += len * *lambda;
    }
    Ok(total)
}

/// Probability that a line fails at least once over the storm window.
pub fn line_failure_probability<T: Scalar>(lambda_e: T) -> T {
    T::one() - (-lambda_e).exp()
}

/// Cumulative intensity and failure probability of one line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineIntensity<T> {
    pub edge: usize,
    pub lambda_e: T,
    pub p_e: T,
}

impl<T: Scalar> LineIntensity<T> {
    pub fn from_lambda(edge: usize, lambda_e: T) -> Self {
        Self {
            edge,
            lambda_e,
            p_e: line_failure_probability(lambda_e),
        }
    }
}

/// One failure scenario: a failed/intact flag per line plus the scenario
/// probability under independent line failures.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureScenario<T> {
    pub failed: Vec<bool>,
    pub prob: T,
}

impl<T: Scalar> FailureScenario<T> {
    pub fn failed_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.failed
            .iter()
            .enumerate()
            .filter_map(|(e, &f)| f.then_some(e))
    }

    pub fn failure_count(&self) -> usize {
        self.failed.iter().filter(|&&f| f).count()
    }
}

/// Probability of a failure pattern under independent per-line failures:
/// the product of `p_e` for failed lines and `1 − p_e` for intact ones.
pub fn scenario_probability<T: Scalar>(failed: &[bool], p: &[T]) -> Result<T, FailureError> {
    if failed.len() != p.len() {
        return Err(FailureError::DimensionMismatch {
            scenario: failed.len(),
            probabilities: p.len(),
        });
    }
    let mut prob = T::one();
    for (&f, &pe) in failed.iter().zip(p) {
        if pe < T::zero() || pe > T::one() {
            return Err(FailureError::ProbabilityOutOfRange(pe.f64()));
        }
        prob *= if f { pe } else { T::one() - pe };
    }
    Ok(prob)
}

/// Draw one scenario: an independent Bernoulli(`p_e`) flip per line.
pub fn sample_scenario<T: Scalar, R: Rng>(p: &[T], rng: &mut R) -> FailureScenario<T> {
    let failed: Vec<bool> = p.iter().map(|&pe| rng.gen::<f64>() < pe.f64()).collect();
    let prob = scenario_probability(&failed, p).expect("dimensions match by construction");
    FailureScenario { failed, prob }
}

/// Scenario-selection parameters: draw `n_samples` scenarios, keep the
/// `top` most probable distinct ones, then pick `subset_size` of those
/// uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionConfig {
    pub n_samples: usize,
    pub top: usize,
    pub subset_size: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            top: 100,
            subset_size: 10,
        }
    }
}

/// Select the scenario subset used by the sample-average approximation.
///
/// Sampled duplicates are collapsed before ranking; ranking is by
/// descending probability with the failure bit-vector as a deterministic
/// tie-break. The result is deterministic for a fixed generator state.
pub fn select_scenarios<T: Scalar, R: Rng>(
    p: &[T],
    rng: &mut R,
    cfg: &SelectionConfig,
) -> Result<Vec<FailureScenario<T>>, FailureError> {
    if cfg.subset_size > cfg.top || cfg.top > cfg.n_samples || cfg.subset_size == 0 {
        return Err(FailureError::InvalidSelection {
            subset_size: cfg.subset_size,
            top: cfg.top,
            n_samples: cfg.n_samples,
        });
    }
    let mut distinct: BTreeMap<Vec<bool>, T> = BTreeMap::new();
    for _ in 0..cfg.n_samples {
        let s = sample_scenario(p, rng);
        distinct.entry(s.failed).or_insert(s.prob);
    }
    if distinct.len() < cfg.subset_size {
        return Err(FailureError::TooFewDistinct {
            distinct: distinct.len(),
            requested: cfg.subset_size,
            shortfall: cfg.subset_size - distinct.len(),
        });
    }
    let mut ranked: Vec<(Vec<bool>, T)> = distinct.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scenario probabilities are comparable")
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(cfg.top);

    // Partial Fisher-Yates: uniform subset without replacement.
    let mut idx: Vec<usize> = (0..ranked.len()).collect();
    for i in 0..cfg.subset_size.min(idx.len()) {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut chosen: Vec<usize> = idx[..cfg.subset_size].to_vec();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|i| {
            let (failed, prob) = ranked[i].clone();
            FailureScenario { failed, prob }
        })
        .collect())
}

/// Portable seeded generator used across the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for parallel worker `worker` derived from `master`.
///
/// Workers must use `seeded_rng(worker_seed(master, i))` with distinct `i`
/// so that parallel sampling remains reproducible.
pub fn worker_seed(master: u64, worker: u64) -> u64 {
    master
        .wrapping_add(worker.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(1)
}
