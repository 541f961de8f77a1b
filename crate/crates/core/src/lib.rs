//! Placement of parameter-sharing AI models on wireless edge servers.
//!
//! Models are sets of parameter blocks, and a server stores a block shared by
//! several cached models only once. Given users, servers, link rates and
//! per-request latency budgets, the solvers here choose which models each
//! server caches to maximize the expected cache hit ratio:
//!
//! * [`successive::solve_spec`] decides servers one by one, each exactly (or
//!   with value rounding) by enumerating shared-block combinations and
//!   solving a knapsack over the remaining specific bytes.
//! * [`greedy::solve_gen`] repeatedly adds the placement with the largest
//!   marginal hit gain.
//! * [`greedy::solve_independent`] is the same greedy charging every model
//!   its full size.
//! * [`oracle::exhaustive_search`] finds the optimum on small instances.

// `!(x > 0.0)` is used on purpose in validation: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fading;
pub mod generate;
pub mod greedy;
pub mod knapsack;
pub mod library;
pub mod mobility;
pub mod objective;
pub mod oracle;
pub mod radio;
pub mod scenario;
pub mod successive;

pub use error::{Error, Result};
pub use greedy::{solve_gen, solve_independent, GreedyOptions};
pub use knapsack::{dp_select, DpTable, Quantizer};
pub use library::{ModelLibrary, Placement, GB, MB};
pub use objective::{hit_ratio, hit_units, DemandMatrix, ServedMask, PROB_SCALE};
pub use oracle::{exhaustive_search, OracleBudget};
pub use radio::{build_rate_table, RadioParams, RateTable};
pub use scenario::{Point, RadioConfig, Scenario, Server};
pub use successive::{solve_spec, SpecOptions};
