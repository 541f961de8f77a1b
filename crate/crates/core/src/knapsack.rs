//! 0/1 knapsack by minimum weight per achievable value, with optional value
//! rounding.
//!
//! Row `e` of the table maps an integer value `w` to the least total size of
//! a subset of the first `e` items reaching exactly `w`. Rows are stored
//! sparsely: unreachable values, values whose least size already exceeds the
//! budget, and entries dominated by a higher value of no greater size are
//! omitted. None of those can lie on the optimal backtracking path, so the
//! answer and the chosen subset are those of the dense table.

use crate::error::{Error, Result};

/// Default cap on stored table cells.
pub const DEFAULT_DP_CELL_CAP: u64 = 10_000_000;

/// Utility quantization for the knapsack value axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantizer {
    /// One demand unit per step.
    Exact,
    /// Values are floored to multiples of `epsilon * u_min`; `epsilon` is
    /// held in millionths so that rounding is exact integer arithmetic.
    Rounded { epsilon_micros: u64 },
}

impl Quantizer {
    /// `epsilon == 0` selects exact mode. `epsilon` is rounded to six decimals.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::validation("epsilon", format!("must lie in [0, 1], got {epsilon}")));
        }
        let micros = (epsilon * 1e6).round() as u64;
        Ok(if micros == 0 {
            Quantizer::Exact
        } else {
            Quantizer::Rounded { epsilon_micros: micros }
        })
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Quantizer::Exact => 0.0,
            Quantizer::Rounded { epsilon_micros } => *epsilon_micros as f64 / 1e6,
        }
    }

    /// Quantized value of `utility` given the smallest positive utility
    /// `u_min` on the server. Never zero for `utility >= u_min > 0`.
    pub fn quantize(&self, utility: u64, u_min: u64) -> u64 {
        match *self {
            Quantizer::Exact => utility,
            Quantizer::Rounded { epsilon_micros } => {
                let num = utility as u128 * 1_000_000;
                let den = epsilon_micros as u128 * u_min.max(1) as u128;
                (num / den) as u64
            }
        }
    }
}

/// Sparse minimum-size table; see the module docs.
#[derive(Debug, Clone)]
pub struct DpTable {
    /// Row `e`: `(value, least size)` sorted by value.
    rows: Vec<Vec<(u64, u64)>>,
    values: Vec<u64>,
    sizes: Vec<u64>,
    budget: u64,
}

impl DpTable {
    /// Fills the table for items `(values[e], sizes[e])` under `budget`,
    /// failing once more than `cell_cap` cells would be stored.
    pub fn build(values: &[u64], sizes: &[u64], budget: u64, cell_cap: u64) -> Result<Self> {
        assert_eq!(values.len(), sizes.len());
        let mut rows = Vec::with_capacity(values.len() + 1);
        rows.push(vec![(0u64, 0u64)]);
        let mut cells = 1u64;
        let mut merged: Vec<(u64, u64)> = Vec::new();
        for (&v, &s) in values.iter().zip(sizes) {
            let prev: &Vec<(u64, u64)> = rows.last().expect("row 0 exists");
            merged.clear();
            let (mut a, mut b) = (0, 0);
            // Merge "skip item" entries with "take item" entries by value.
            loop {
                let take = prev.get(b).and_then(|&(w, t)| {
                    let t = t.checked_add(s)?;
                    (t <= budget).then_some((w + v, t))
                });
                let skip = prev.get(a).copied();
                let next = match (skip, take) {
                    (None, None) => break,
                    (Some(x), None) => {
                        a += 1;
                        x
                    }
                    (None, Some(y)) => {
                        b += 1;
                        y
                    }
                    (Some(x), Some(y)) => {
                        if x.0 < y.0 {
                            a += 1;
                            x
                        } else if y.0 < x.0 {
                            b += 1;
                            y
                        } else {
                            a += 1;
                            b += 1;
                            (x.0, x.1.min(y.1))
                        }
                    }
                };
                if take.is_none() && b < prev.len() {
                    // Remaining take entries are over budget or overflow.
                    b = prev.len();
                }
                merged.push(next);
            }
            // Keep the Pareto frontier: sizes strictly increase with value.
            let mut row: Vec<(u64, u64)> = Vec::with_capacity(merged.len());
            let mut best_above = u64::MAX;
            for &(w, t) in merged.iter().rev() {
                if t < best_above {
                    row.push((w, t));
                    best_above = t;
                }
            }
            row.reverse();
            cells += row.len() as u64;
            if cells > cell_cap {
                return Err(Error::DpCapacity { cells, cap: cell_cap });
            }
            rows.push(row);
        }
        Ok(Self {
            rows,
            values: values.to_vec(),
            sizes: sizes.to_vec(),
            budget,
        })
    }

    pub fn n_items(&self) -> usize {
        self.values.len()
    }

    /// Least size reaching value `w` with the first `e` items; `None` stands
    /// for an omitted (unreachable, over-budget or dominated) cell.
    pub fn get(&self, e: usize, w: u64) -> Option<u64> {
        let row = &self.rows[e];
        row.binary_search_by_key(&w, |&(v, _)| v).ok().map(|p| row[p].1)
    }

    /// Stored cells over all rows.
    pub fn cells(&self) -> u64 {
        self.rows.iter().map(|r| r.len() as u64).sum()
    }

    /// Largest value whose least size fits the budget.
    pub fn best_value(&self) -> u64 {
        self.rows
            .last()
            .and_then(|r| r.iter().rev().find(|&&(_, t)| t <= self.budget))
            .map_or(0, |&(w, _)| w)
    }

    /// Items realizing the best value, ascending. Where skipping item `e`
    /// reaches the same size, the item is skipped.
    pub fn backtrack(&self) -> Vec<usize> {
        let mut w = self.best_value();
        let mut chosen = Vec::new();
        for e in (1..=self.n_items()).rev() {
            let here = self.get(e, w).expect("backtracking follows stored cells");
            if self.get(e - 1, w) == Some(here) {
                continue;
            }
            chosen.push(e - 1);
            w -= self.values[e - 1];
            debug_assert_eq!(self.get(e - 1, w).map(|t| t + self.sizes[e - 1]), Some(here));
        }
        chosen.reverse();
        chosen
    }
}

/// Maximizes total value under `budget`; returns the value and the chosen
/// item indices.
pub fn dp_select(values: &[u64], sizes: &[u64], budget: u64) -> (u64, Vec<usize>) {
    dp_select_capped(values, sizes, budget, u64::MAX).expect("uncapped table")
}

pub fn dp_select_capped(values: &[u64], sizes: &[u64], budget: u64, cell_cap: u64) -> Result<(u64, Vec<usize>)> {
    let table = DpTable::build(values, sizes, budget, cell_cap)?;
    Ok((table.best_value(), table.backtrack()))
}
