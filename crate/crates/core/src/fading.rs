//! Hit ratio of a fixed placement under Rayleigh fading.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::generate::{derive_seed, rng_from_seed};
use crate::library::Placement;
use crate::objective::hit_units;
use crate::radio::RateTable;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingStats {
    pub mean: f64,
    /// Standard deviation of the per-realization hit ratio.
    pub std: f64,
    pub realizations: usize,
}

/// Hit ratio of one channel realization with per-link power gains
/// `gains[m * K + k]`.
pub fn realized_hit_ratio(scenario: &Scenario, placement: &Placement, gains: &[f64]) -> f64 {
    let k_users = scenario.n_users();
    let rates = RateTable::build(
        &scenario.radio_params(),
        &scenario.servers,
        &scenario.users,
        &scenario.library,
        &scenario.demand,
        |m, k| gains[m * k_users + k],
    );
    hit_units(scenario, &rates, placement) as f64 / scenario.demand.total() as f64
}

/// Unit-mean exponential power gains for every server-user pair.
pub fn sample_gains(n_links: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n_links).map(|_| Exp1.sample(&mut rng)).collect()
}

/// Averages the realized hit ratio over `n_realizations` independent draws.
/// Realization `r` uses its own seed derived from `(seed, r)`, so the result
/// does not depend on the thread schedule.
pub fn evaluate_fading(scenario: &Scenario, placement: &Placement, n_realizations: usize, seed: u64) -> FadingStats {
    let n_links = scenario.n_servers() * scenario.n_users();
    let ratios: Vec<f64> = (0..n_realizations as u64)
        .into_par_iter()
        .map(|r| realized_hit_ratio(scenario, placement, &sample_gains(n_links, derive_seed(seed, &[r]))))
        .collect();
    summarize(&ratios)
}

pub(crate) fn summarize(values: &[f64]) -> FadingStats {
    let n = values.len();
    if n == 0 {
        return FadingStats {
            mean: f64::NAN,
            std: f64::NAN,
            realizations: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    FadingStats {
        mean,
        std: var.sqrt(),
        realizations: n,
    }
}
