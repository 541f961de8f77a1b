//! Successive per-server placement for libraries with few shared blocks.
//!
//! Servers are decided one at a time in index order. For each server every
//! combination of shared blocks that fits its capacity is tried: with the
//! combination assumed cached, the models whose shared blocks it contains
//! only cost their specific bytes, and choosing among them is an additive
//! knapsack over residual utilities. The best combination wins, and the
//! requests the server now satisfies stop counting for later servers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knapsack::{DpTable, Quantizer, DEFAULT_DP_CELL_CAP};
use crate::library::{ModelLibrary, Placement};
use crate::objective::{residual_utilities, update_served, ServedMask};
use crate::radio::RateTable;
use crate::scenario::Scenario;

pub const DEFAULT_COMBINATION_CAP: u64 = 1 << 20;

/// Which shared-block combinations a server solve tries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationStrategy {
    /// Every subset of the shared blocks within capacity.
    #[default]
    Powerset,
    /// Only unions of the models' own shared-block sets. Yields the same
    /// placements as `Powerset` with far fewer knapsack solves.
    ModelUnions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecOptions {
    /// Value rounding parameter; 0 solves each server exactly.
    pub epsilon: f64,
    pub combination_cap: u64,
    pub dp_cell_cap: u64,
    pub combinations: CombinationStrategy,
}

impl Default for SpecOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            combination_cap: DEFAULT_COMBINATION_CAP,
            dp_cell_cap: DEFAULT_DP_CELL_CAP,
            combinations: CombinationStrategy::Powerset,
        }
    }
}

impl SpecOptions {
    pub fn exact() -> Self {
        Self {
            epsilon: 0.0,
            ..Self::default()
        }
    }

    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

/// A set of shared blocks assumed cached, with the models it makes eligible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Combination {
    /// Block ids, ascending.
    pub blocks: Vec<usize>,
    /// Bitmask over shared-block slots.
    pub mask: u64,
    /// Total size of `blocks`.
    pub shared_bytes: u64,
    /// Models whose shared blocks all lie in `blocks`, ascending.
    pub eligible: Vec<usize>,
    /// Per eligible model: bytes outside its shared blocks.
    pub specific_bytes: Vec<u64>,
}

/// Shared-block bookkeeping reused across the server solves of one run.
struct SharedIndex {
    slot_size: Vec<u64>,
    model_mask: Vec<u64>,
    model_specific: Vec<u64>,
}

impl SharedIndex {
    fn new(library: &ModelLibrary, cap: u64) -> Result<Self> {
        let beta = library.shared_blocks().len();
        if beta >= 64 || (1u64 << beta) > cap {
            return Err(Error::CombinationCap {
                shared_blocks: beta,
                cap,
            });
        }
        Ok(Self {
            slot_size: library.shared_blocks().iter().map(|&b| library.block_size(b)).collect(),
            model_mask: (0..library.n_models())
                .map(|i| library.shared_slots_of(i).iter().fold(0u64, |m, &s| m | 1 << s))
                .collect(),
            model_specific: (0..library.n_models()).map(|i| library.specific_bytes_of(i)).collect(),
        })
    }

    fn mask_bytes(&self, mask: u64) -> u64 {
        let mut bytes = 0;
        let mut rest = mask;
        while rest != 0 {
            bytes += self.slot_size[rest.trailing_zeros() as usize];
            rest &= rest - 1;
        }
        bytes
    }

    /// Masks of all subsets within `capacity`, depth-first.
    fn powerset(&self, capacity: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0u64, 0u64)];
        while let Some((slot, mask, bytes)) = stack.pop() {
            if slot == self.slot_size.len() {
                out.push(mask);
                continue;
            }
            stack.push((slot + 1, mask, bytes));
            let with = bytes + self.slot_size[slot];
            if with <= capacity {
                stack.push((slot + 1, mask | 1 << slot, with));
            }
        }
        out
    }

    /// Masks of all unions of model shared sets within `capacity`, with the
    /// empty set.
    fn model_unions(&self, capacity: u64, models: &[usize]) -> Vec<u64> {
        let mut seen: HashSet<u64> = HashSet::from([0]);
        let mut out = vec![0u64];
        let mut distinct: Vec<u64> = models.iter().map(|&i| self.model_mask[i]).filter(|&m| m != 0).collect();
        distinct.sort_unstable();
        distinct.dedup();
        for &mm in &distinct {
            let mut added = Vec::new();
            for &base in &out {
                let u = base | mm;
                if !seen.contains(&u) && self.mask_bytes(u) <= capacity {
                    seen.insert(u);
                    added.push(u);
                }
            }
            out.extend(added);
        }
        out
    }

    fn combination(&self, library: &ModelLibrary, mask: u64, models: impl Iterator<Item = usize>) -> Combination {
        let eligible: Vec<usize> = models.filter(|&i| self.model_mask[i] & !mask == 0).collect();
        Combination {
            blocks: (0..self.slot_size.len())
                .filter(|&s| mask >> s & 1 == 1)
                .map(|s| library.shared_blocks()[s])
                .collect(),
            mask,
            shared_bytes: self.mask_bytes(mask),
            specific_bytes: eligible.iter().map(|&i| self.model_specific[i]).collect(),
            eligible,
        }
    }
}

/// Every subset of the shared blocks whose total size fits `capacity`,
/// including the empty one, with eligible models and their specific sizes.
pub fn enumerate_combinations(library: &ModelLibrary, capacity: u64, cap: u64) -> Result<Vec<Combination>> {
    let index = SharedIndex::new(library, cap)?;
    Ok(index
        .powerset(capacity)
        .into_iter()
        .map(|mask| index.combination(library, mask, 0..library.n_models()))
        .collect())
}

/// Outcome of one server solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerSolution {
    /// Models cached on the server, ascending.
    pub models: Vec<usize>,
    /// Residual demand units the server newly serves.
    pub utility: u64,
    /// Shared blocks of the winning combination.
    pub combination: Vec<usize>,
}

/// Solves one server given the requests earlier servers already serve.
pub fn solve_server(
    scenario: &Scenario,
    rates: &RateTable,
    served: &ServedMask,
    server: usize,
    options: &SpecOptions,
) -> Result<ServerSolution> {
    let index = SharedIndex::new(&scenario.library, options.combination_cap)?;
    let quantizer = Quantizer::new(options.epsilon)?;
    solve_server_with(scenario, rates, served, server, options, &index, quantizer)
}

/// Solves one server from precomputed residual utilities. Exposed for
/// checking the solver against brute force on arbitrary utilities.
pub fn solve_with_utilities(
    library: &ModelLibrary,
    utilities: &[u64],
    capacity: u64,
    options: &SpecOptions,
) -> Result<ServerSolution> {
    let index = SharedIndex::new(library, options.combination_cap)?;
    let quantizer = Quantizer::new(options.epsilon)?;
    best_row(library, utilities, capacity, options, &index, quantizer)
}

fn solve_server_with(
    scenario: &Scenario,
    rates: &RateTable,
    served: &ServedMask,
    server: usize,
    options: &SpecOptions,
    index: &SharedIndex,
    quantizer: Quantizer,
) -> Result<ServerSolution> {
    let utilities = residual_utilities(scenario, rates, served, server);
    best_row(&scenario.library, &utilities, scenario.capacity(server), options, index, quantizer)
}

fn best_row(
    library: &ModelLibrary,
    utilities: &[u64],
    capacity: u64,
    options: &SpecOptions,
    index: &SharedIndex,
    quantizer: Quantizer,
) -> Result<ServerSolution> {
    let candidates: Vec<usize> = (0..utilities.len()).filter(|&i| utilities[i] > 0).collect();
    let empty = ServerSolution {
        models: Vec::new(),
        utility: 0,
        combination: Vec::new(),
    };
    let Some(u_min) = candidates.iter().map(|&i| utilities[i]).min() else {
        return Ok(empty);
    };

    let masks = match options.combinations {
        CombinationStrategy::Powerset => index.powerset(capacity),
        CombinationStrategy::ModelUnions => index.model_unions(capacity, &candidates),
    };

    // (utility, shared bytes, blocks, models)
    let mut best: Option<(u64, u64, Vec<usize>, Vec<usize>)> = None;
    let mut values = Vec::new();
    for mask in masks {
        let combo = index.combination(library, mask, candidates.iter().copied());
        values.clear();
        values.extend(combo.eligible.iter().map(|&i| quantizer.quantize(utilities[i], u_min)));
        let table = DpTable::build(
            &values,
            &combo.specific_bytes,
            capacity - combo.shared_bytes,
            options.dp_cell_cap,
        )?;
        let chosen: Vec<usize> = table.backtrack().into_iter().map(|e| combo.eligible[e]).collect();
        let utility: u64 = chosen.iter().map(|&i| utilities[i]).sum();
        let better = match &best {
            None => true,
            Some((bu, bd, bn, _)) => {
                utility > *bu || (utility == *bu && (combo.shared_bytes, &combo.blocks) < (*bd, bn))
            }
        };
        if better {
            best = Some((utility, combo.shared_bytes, combo.blocks, chosen));
        }
    }
    Ok(best.map_or(empty, |(utility, _, combination, models)| ServerSolution {
        models,
        utility,
        combination,
    }))
}

/// Placement from the successive solver with each server's contribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecSolution {
    pub placement: Placement,
    /// Demand units newly served by each server, in solve order. Their sum
    /// equals the hit units of `placement`.
    pub contributions: Vec<u64>,
}

/// Decides servers in index order, each with [`solve_server`].
pub fn solve_spec(scenario: &Scenario, rates: &RateTable, options: &SpecOptions) -> Result<SpecSolution> {
    let index = SharedIndex::new(&scenario.library, options.combination_cap)?;
    let quantizer = Quantizer::new(options.epsilon)?;
    let mut placement = Placement::empty(scenario.n_servers(), scenario.n_models());
    let mut served = ServedMask::none(scenario.n_users(), scenario.n_models());
    let mut contributions = Vec::with_capacity(scenario.n_servers());
    for m in 0..scenario.n_servers() {
        let row = solve_server_with(scenario, rates, &served, m, options, &index, quantizer)?;
        for &i in &row.models {
            placement.set(m, i, true);
        }
        served = update_served(rates, &served, m, &row.models);
        contributions.push(row.utility);
    }
    Ok(SpecSolution {
        placement,
        contributions,
    })
}
