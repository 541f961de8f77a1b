#![allow(clippy::needless_range_loop)]

//! Helpers shared by the integration tests. Nothing here calls into the
//! solvers; the reference computations are written out from the model
//! definitions so they can check the library.

#![allow(dead_code)]

use rand::Rng;
use sharecache::generate::{rng_from_seed, sample_scenario, ScenarioParams};
use sharecache::{ModelLibrary, Placement, Scenario, MB};

/// A scenario sampled with the given sizes; everything else default.
pub fn scenario(seed: u64, servers: usize, users: usize, models: usize, capacity: u64, area: f64) -> Scenario {
    let mut p = ScenarioParams::default();
    p.topology.n_servers = servers;
    p.topology.n_users = users;
    p.topology.capacity_bytes = capacity;
    p.topology.area_side_m = area;
    p.library.n_models = models;
    p.library.n_roots = 2;
    sample_scenario(&p, seed).expect("valid parameters")
}

/// The small special-case instances used for the optimality checks.
pub fn small_instance(seed: u64) -> Scenario {
    scenario(seed, 2, 6, 8, 75 * MB, 400.0)
}

/// Random library: `n_shared` blocks handed to random subsets of models and
/// one specific block per model. Shared candidates that end up in a single
/// model are simply specific blocks of it.
pub fn random_library(seed: u64, n_models: usize, n_shared: usize, max_size: u64) -> ModelLibrary {
    let mut rng = rng_from_seed(seed);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_models];
    let mut blocks = Vec::new();
    for b in 0..n_shared {
        blocks.push((b, rng.random_range(1..=max_size)));
        let first = rng.random_range(0..n_models);
        members[first].push(b);
        for (i, m) in members.iter_mut().enumerate() {
            if i != first && rng.random_bool(0.4) {
                m.push(b);
            }
        }
    }
    let models: Vec<(usize, Vec<usize>)> = members
        .into_iter()
        .enumerate()
        .map(|(i, mut bs)| {
            let id = blocks.len();
            blocks.push((id, rng.random_range(1..=max_size)));
            bs.push(id);
            (i, bs)
        })
        .collect();
    ModelLibrary::new(&blocks, &models).expect("well-formed library")
}

/// Bytes of the union of the blocks of `models`, from the raw block lists.
pub fn union_bytes(library: &ModelLibrary, models: &[usize]) -> u64 {
    let mut seen = std::collections::BTreeSet::new();
    for &i in models {
        seen.extend(library.model(i).block_ids.iter().copied());
    }
    seen.into_iter().map(|b| library.blocks()[b].size_bytes).sum()
}

/// Linear radio quantities straight from the defaults: (n0 W/Hz, power W).
pub fn noise_and_power(scenario: &Scenario) -> (f64, f64) {
    let r = &scenario.radio;
    (
        10f64.powf((r.noise_dbm_per_hz - 30.0) / 10.0),
        10f64.powf((r.power_dbm - 30.0) / 10.0),
    )
}

/// Reference reachability `[m][k][i]`, computed without the library's
/// radio module.
pub fn reference_reach(scenario: &Scenario) -> Vec<Vec<Vec<bool>>> {
    let r = &scenario.radio;
    let (n0, power) = noise_and_power(scenario);
    let (ms, ks, is) = (scenario.n_servers(), scenario.n_users(), scenario.n_models());
    let dist = |m: usize, k: usize| {
        let (s, u) = (scenario.servers[m].position, scenario.users[k]);
        ((s.x - u.x).powi(2) + (s.y - u.y).powi(2)).sqrt()
    };
    let covered = |m: usize, k: usize| dist(m, k) <= r.coverage_radius_m;
    let load: Vec<usize> = (0..ms).map(|m| (0..ks).filter(|&k| covered(m, k)).count()).collect();
    let rate = |m: usize, k: usize| {
        let b = r.bandwidth_hz / (r.active_prob * load[m] as f64);
        let p = power / (r.active_prob * load[m] as f64);
        let d = dist(m, k).max(r.min_distance_m);
        b * (1.0 + p * r.gamma0 * d.powf(-r.alpha0) / (n0 * b)).log2()
    };
    (0..ms)
        .map(|m| {
            (0..ks)
                .map(|k| {
                    (0..is)
                        .map(|i| {
                            let bits = scenario.library.model(i).download_size as f64 * 8.0;
                            let t = if covered(m, k) {
                                bits / rate(m, k)
                            } else {
                                (0..ms)
                                    .filter(|&m2| covered(m2, k))
                                    .map(|m2| bits / r.inter_server_rate_bps + bits / rate(m2, k))
                                    .fold(f64::INFINITY, f64::min)
                            } + scenario.demand.infer_latency(k, i);
                            t <= scenario.demand.budget(k, i)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Hit units by direct summation over requests.
pub fn reference_hit_units(scenario: &Scenario, reach: &[Vec<Vec<bool>>], placement: &Placement) -> u64 {
    let mut total = 0;
    for k in 0..scenario.n_users() {
        for i in 0..scenario.n_models() {
            if (0..scenario.n_servers()).any(|m| placement.get(m, i) && reach[m][k][i]) {
                total += scenario.demand.p(k, i);
            }
        }
    }
    total
}

/// Placement from a bitmask over `m * I + i`.
pub fn placement_from_bits(servers: usize, models: usize, bits: u64) -> Placement {
    let mut p = Placement::empty(servers, models);
    for m in 0..servers {
        for i in 0..models {
            if bits >> (m * models + i) & 1 == 1 {
                p.set(m, i, true);
            }
        }
    }
    p
}

/// Whether every server fits under block-union accounting.
pub fn fits(scenario: &Scenario, placement: &Placement) -> bool {
    (0..scenario.n_servers()).all(|m| union_bytes(&scenario.library, &placement.row(m)) <= scenario.capacity(m))
}

/// Optimum by plain enumeration of all `2^(M I)` matrices; ties go to the
/// lexicographically smallest matrix in row-major order.
pub fn brute_force_optimum(scenario: &Scenario) -> (u64, Placement) {
    let (ms, is) = (scenario.n_servers(), scenario.n_models());
    let n = ms * is;
    assert!(n <= 20, "too large for plain enumeration");
    let reach = reference_reach(scenario);
    let mut best: Option<(u64, Placement)> = None;
    for bits in 0..1u64 << n {
        let p = placement_from_bits(ms, is, bits);
        if !fits(scenario, &p) {
            continue;
        }
        let v = reference_hit_units(scenario, &reach, &p);
        let better = match &best {
            None => true,
            Some((bv, bp)) => v > *bv || (v == *bv && p.bits() < bp.bits()),
        };
        if better {
            best = Some((v, p));
        }
    }
    best.expect("empty placement fits")
}
