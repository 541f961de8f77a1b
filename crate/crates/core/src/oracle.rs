//! Exhaustive search for the optimal placement on desk-scale instances.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{BlockUnion, ModelLibrary, Placement};
use crate::radio::RateTable;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleBudget {
    /// Abort after this many rows plus placements visited.
    pub max_states: u64,
    pub time_limit_s: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_states: 50_000_000,
            time_limit_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub placement: Placement,
    pub hit_units: u64,
    pub hit_ratio: f64,
    pub visited: u64,
}

/// Every subset of models fitting `capacity` under block-union accounting,
/// as bitmasks over model ids, in lexicographic order of the 0/1 row
/// (model 0 most significant). Supersets of infeasible sets are never
/// visited.
pub fn feasible_rows(library: &ModelLibrary, capacity: u64) -> Vec<u64> {
    let n = library.n_models();
    assert!(n < 64, "row enumeration needs fewer than 64 models");
    let mut rows = Vec::new();
    fn walk(lib: &ModelLibrary, cap: u64, from: usize, mask: u64, union: &BlockUnion, rows: &mut Vec<u64>) {
        rows.push(mask);
        for i in from..lib.n_models() {
            if union.bytes() + union.extra_bytes(lib, i) > cap {
                continue;
            }
            let mut next = union.clone();
            next.insert(lib, i);
            walk(lib, cap, i + 1, mask | 1 << i, &next, rows);
        }
    }
    walk(library, capacity, 0, 0, &BlockUnion::new(library), &mut rows);
    let key = |mask: &u64| mask.reverse_bits() >> (64 - n.max(1));
    rows.sort_by_key(key);
    rows
}

/// Largest number of `x_{m,i} = 1` entries in any feasible placement.
pub fn max_feasible_cardinality(scenario: &Scenario) -> usize {
    (0..scenario.n_servers())
        .map(|m| {
            feasible_rows(&scenario.library, scenario.capacity(m))
                .iter()
                .map(|r| r.count_ones() as usize)
                .max()
                .unwrap_or(0)
        })
        .sum()
}

/// Optimal placement by enumeration. Among optimal placements the
/// lexicographically smallest matrix (row-major, 0 before 1) is returned.
pub fn exhaustive_search(scenario: &Scenario, rates: &RateTable, budget: &OracleBudget) -> Result<OracleResult> {
    let (n_servers, n_users, n_models) = (scenario.n_servers(), scenario.n_users(), scenario.n_models());
    if n_models >= 64 {
        return Err(Error::OracleBudget {
            visited: 0,
            reason: format!("{n_models} models is beyond exhaustive search"),
        });
    }
    let started = Instant::now();
    let deadline = Duration::from_secs_f64(budget.time_limit_s.max(0.0));
    let mut visited = 0u64;
    let n_req = n_users * n_models;
    let words = n_req.div_ceil(64).max(1);

    // Per server: feasible rows and the requests each row hits.
    let mut per_server: Vec<Vec<(u64, Vec<u64>)>> = Vec::with_capacity(n_servers);
    for m in 0..n_servers {
        let rows = feasible_rows(&scenario.library, scenario.capacity(m));
        visited += rows.len() as u64;
        if visited > budget.max_states {
            return Err(Error::OracleBudget {
                visited,
                reason: format!("more than {} states", budget.max_states),
            });
        }
        let covered = rows
            .into_iter()
            .map(|mask| {
                let mut bits = vec![0u64; words];
                for i in (0..n_models).filter(|&i| mask >> i & 1 == 1) {
                    for k in 0..n_users {
                        if rates.reach(m, k, i) {
                            let r = k * n_models + i;
                            bits[r / 64] |= 1 << (r % 64);
                        }
                    }
                }
                (mask, bits)
            })
            .collect();
        per_server.push(covered);
    }

    let weights: Vec<u64> = (0..n_req).map(|r| scenario.demand.p(r / n_models, r % n_models)).collect();

    struct Search<'a> {
        per_server: &'a [Vec<(u64, Vec<u64>)>],
        weights: &'a [u64],
        budget: &'a OracleBudget,
        started: Instant,
        deadline: Duration,
        visited: u64,
        best: Option<(u64, Vec<u64>)>,
        choice: Vec<u64>,
    }

    impl Search<'_> {
        fn go(&mut self, m: usize, acc: &[u64]) -> Result<()> {
            if m == self.per_server.len() {
                self.visited += 1;
                if self.visited.is_multiple_of(4096) && self.started.elapsed() > self.deadline {
                    return Err(Error::OracleBudget {
                        visited: self.visited,
                        reason: format!("time limit of {:?} exceeded", self.deadline),
                    });
                }
                if self.visited > self.budget.max_states {
                    return Err(Error::OracleBudget {
                        visited: self.visited,
                        reason: format!("more than {} states", self.budget.max_states),
                    });
                }
                let mut hits = 0u64;
                for (w, &word) in acc.iter().enumerate() {
                    let mut rest = word;
                    while rest != 0 {
                        hits += self.weights[w * 64 + rest.trailing_zeros() as usize];
                        rest &= rest - 1;
                    }
                }
                // Enumeration runs in lexicographic order, so only a strictly
                // better placement replaces the incumbent.
                if self.best.as_ref().is_none_or(|(b, _)| hits > *b) {
                    self.best = Some((hits, self.choice.clone()));
                }
                return Ok(());
            }
            let mut next = vec![0u64; acc.len()];
            for (mask, bits) in &self.per_server[m] {
                for (n, (a, b)) in next.iter_mut().zip(acc.iter().zip(bits)) {
                    *n = a | b;
                }
                self.choice[m] = *mask;
                self.go(m + 1, &next)?;
            }
            Ok(())
        }
    }

    let mut search = Search {
        per_server: &per_server,
        weights: &weights,
        budget,
        started,
        deadline,
        visited,
        best: None,
        choice: vec![0; n_servers],
    };
    search.go(0, &vec![0u64; words])?;
    let visited = search.visited;
    let (hit_units, masks) = search.best.expect("the empty placement is always feasible");
    let mut placement = Placement::empty(n_servers, n_models);
    for (m, mask) in masks.iter().enumerate() {
        for i in (0..n_models).filter(|&i| mask >> i & 1 == 1) {
            placement.set(m, i, true);
        }
    }
    Ok(OracleResult {
        placement,
        hit_units,
        hit_ratio: hit_units as f64 / scenario.demand.total() as f64,
        visited,
    })
}
