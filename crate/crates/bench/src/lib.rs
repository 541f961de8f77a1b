//! Instance builders shared by the criterion benches.

use sharecache::generate::{
    carrier_library, rng_from_seed, sample_demand, sample_scenario, sample_topology, DemandParams, ScenarioParams,
    TopologyParams,
};
use sharecache::{RadioConfig, Scenario, MB};

/// A sampled scenario with a library of `n_models` models and 150 MB per server.
pub fn sampled(n_servers: usize, n_users: usize, n_models: usize, seed: u64) -> Scenario {
    let mut p = ScenarioParams::default();
    p.topology.n_servers = n_servers;
    p.topology.n_users = n_users;
    p.topology.capacity_bytes = 150 * MB;
    p.library.n_models = n_models;
    sample_scenario(&p, seed).expect("valid parameters")
}

/// Carrier library with `n_shared` 1 MB shared blocks and 50 MB specific
/// blocks; each server fits every shared block plus four specific ones.
pub fn carrier(n_servers: usize, n_models: usize, n_shared: usize, seed: u64) -> Scenario {
    let library = carrier_library(n_models, n_shared, MB, 50 * MB).expect("enough models");
    let topo = TopologyParams {
        area_side_m: 600.0,
        n_servers,
        n_users: 10,
        capacity_bytes: n_shared as u64 * MB + 200 * MB,
    };
    let mut rng = rng_from_seed(seed);
    let (servers, users) = sample_topology(&topo, &mut rng);
    let demand = sample_demand(&DemandParams::default(), 10, n_models, &mut rng).expect("valid demand");
    Scenario::new(library, servers, users, RadioConfig::default(), demand).expect("consistent scenario")
}
