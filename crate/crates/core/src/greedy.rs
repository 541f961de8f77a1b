//! Global greedy placement: repeatedly cache the (server, model) pair with
//! the largest marginal hit gain that still fits.
//!
//! The same loop with additive storage accounting is the no-sharing
//! baseline.

use serde::{Deserialize, Serialize};

use crate::library::{BlockUnion, Placement};
use crate::radio::RateTable;
use crate::scenario::Scenario;

/// How storage is charged when a model joins a server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Blocks already on the server are free.
    SharedBlocks,
    /// Every model pays its full download size.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyOptions {
    /// Rank candidates by gain per incremental byte instead of absolute gain.
    pub density: bool,
}

/// Placement under construction.
#[derive(Debug, Clone)]
pub struct GreedyState {
    pub placement: Placement,
    unions: Vec<BlockUnion>,
    additive: Vec<u64>,
    /// `k * I + i` is set once some placed copy delivers model `i` to `k`.
    hit: Vec<bool>,
    pub steps: usize,
}

impl GreedyState {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            placement: Placement::empty(scenario.n_servers(), scenario.n_models()),
            unions: vec![BlockUnion::new(&scenario.library); scenario.n_servers()],
            additive: vec![0; scenario.n_servers()],
            hit: vec![false; scenario.n_users() * scenario.n_models()],
            steps: 0,
        }
    }

    /// Bytes on `server` under block-union accounting.
    pub fn used_bytes(&self, server: usize) -> u64 {
        self.unions[server].bytes()
    }

    /// Bytes on `server` under additive accounting.
    pub fn additive_bytes(&self, server: usize) -> u64 {
        self.additive[server]
    }

    fn incremental_bytes(&self, scenario: &Scenario, accounting: Accounting, server: usize, model: usize) -> u64 {
        match accounting {
            Accounting::SharedBlocks => self.unions[server].extra_bytes(&scenario.library, model),
            Accounting::Additive => scenario.library.model(model).download_size,
        }
    }

    fn used(&self, accounting: Accounting, server: usize) -> u64 {
        match accounting {
            Accounting::SharedBlocks => self.unions[server].bytes(),
            Accounting::Additive => self.additive[server],
        }
    }

    /// Adds `x_{server, model}` and marks the requests it newly hits.
    pub fn accept(&mut self, scenario: &Scenario, rates: &RateTable, server: usize, model: usize) {
        debug_assert!(!self.placement.get(server, model));
        self.placement.set(server, model, true);
        self.unions[server].insert(&scenario.library, model);
        self.additive[server] += scenario.library.model(model).download_size;
        let n_models = scenario.n_models();
        for k in 0..scenario.n_users() {
            if rates.reach(server, k, model) {
                self.hit[k * n_models + model] = true;
            }
        }
        self.steps += 1;
    }
}

/// Gain in demand units of adding `x_{server, model}` to `state`, and the
/// bytes it would add under block-union accounting.
pub fn marginal_gain(scenario: &Scenario, rates: &RateTable, state: &GreedyState, server: usize, model: usize) -> (u64, u64) {
    (
        gain_units(scenario, rates, state, server, model),
        state.incremental_bytes(scenario, Accounting::SharedBlocks, server, model),
    )
}

fn gain_units(scenario: &Scenario, rates: &RateTable, state: &GreedyState, server: usize, model: usize) -> u64 {
    let n_models = scenario.n_models();
    (0..scenario.n_users())
        .filter(|&k| !state.hit[k * n_models + model] && rates.reach(server, k, model))
        .map(|k| scenario.demand.p(k, model))
        .sum()
}

/// One accepted move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyStep {
    pub server: usize,
    pub model: usize,
    pub gain: u64,
    pub bytes: u64,
}

/// Greedy with block-sharing storage accounting.
pub fn solve_gen(scenario: &Scenario, rates: &RateTable, options: &GreedyOptions) -> Placement {
    run_greedy(scenario, rates, Accounting::SharedBlocks, options).0
}

/// Baseline that ignores sharing: each model is charged its full size.
pub fn solve_independent(scenario: &Scenario, rates: &RateTable) -> Placement {
    run_greedy(scenario, rates, Accounting::Additive, &GreedyOptions::default()).0
}

/// Runs the greedy loop, returning the placement and the accepted moves.
///
/// Ties on the ranking key go to fewer incremental bytes, then the lower
/// server id, then the lower model id. Moves with zero gain are never taken.
pub fn run_greedy(
    scenario: &Scenario,
    rates: &RateTable,
    accounting: Accounting,
    options: &GreedyOptions,
) -> (Placement, Vec<GreedyStep>) {
    let mut state = GreedyState::new(scenario);
    let mut trace = Vec::new();
    loop {
        let mut best: Option<GreedyStep> = None;
        for m in 0..scenario.n_servers() {
            let room = scenario.capacity(m).saturating_sub(state.used(accounting, m));
            for i in 0..scenario.n_models() {
                if state.placement.get(m, i) {
                    continue;
                }
                let bytes = state.incremental_bytes(scenario, accounting, m, i);
                if bytes > room {
                    continue;
                }
                let gain = gain_units(scenario, rates, &state, m, i);
                if gain == 0 {
                    continue;
                }
                let cand = GreedyStep {
                    server: m,
                    model: i,
                    gain,
                    bytes,
                };
                if best.is_none_or(|b| ranks_above(&cand, &b, options.density)) {
                    best = Some(cand);
                }
            }
        }
        let Some(step) = best else { break };
        state.accept(scenario, rates, step.server, step.model);
        trace.push(step);
    }
    (state.placement, trace)
}

/// Candidates are scanned in (server, model) order, so only strictly better
/// keys replace the incumbent on the id tie-breaks.
fn ranks_above(a: &GreedyStep, b: &GreedyStep, density: bool) -> bool {
    use std::cmp::Ordering::*;
    let primary = if density {
        // gain/bytes compared by cross-multiplication; zero bytes is infinite density
        match (a.bytes, b.bytes) {
            (0, 0) => a.gain.cmp(&b.gain),
            (0, _) => Greater,
            (_, 0) => Less,
            _ => (a.gain as u128 * b.bytes as u128).cmp(&(b.gain as u128 * a.bytes as u128)),
        }
    } else {
        a.gain.cmp(&b.gain)
    };
    match primary {
        Greater => true,
        Less => false,
        Equal => a.bytes < b.bytes,
    }
}
