//! Expected link rates, end-to-end delivery latency and the reachability
//! indicator.
//!
//! Each server splits its bandwidth and transmit power evenly over the users
//! inside its coverage disk, scaled by the user activity probability. A user
//! can download from any covering server directly; a server that does not
//! cover the user first ships the model over the backhaul to the covering
//! server with the fastest radio link.

use crate::error::{Error, Result};
use crate::library::ModelLibrary;
use crate::objective::DemandMatrix;
use crate::scenario::{Point, Scenario, Server};

/// Radio constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub gamma0: f64,
    pub alpha0: f64,
    /// Noise power spectral density, W/Hz.
    pub n0: f64,
    /// Hz.
    pub total_bandwidth: f64,
    /// W.
    pub total_power: f64,
    pub active_prob: f64,
    /// Backhaul rate between any two servers, bit/s.
    pub inter_server_rate: f64,
    pub coverage_radius: f64,
    /// Distances below this are clamped to it.
    pub min_distance: f64,
}

impl RadioParams {
    pub fn covers(&self, server: &Point, user: &Point) -> bool {
        server.distance(user) <= self.coverage_radius
    }

    /// Rate of a link at distance `distance` shared by `n_assoc` users,
    /// with the mean received power scaled by `fading_gain`.
    pub fn rate_at(&self, distance: f64, n_assoc: usize, fading_gain: f64) -> f64 {
        let share = self.active_prob * n_assoc.max(1) as f64;
        let bandwidth = self.total_bandwidth / share;
        let power = self.total_power / share;
        let d = distance.max(self.min_distance);
        let snr = fading_gain * power * self.gamma0 * d.powf(-self.alpha0) / (self.n0 * bandwidth);
        bandwidth * (1.0 + snr).log2()
    }
}

/// Expected downlink rate (bit/s) from `server` to a covered `user` when the
/// server has `n_assoc_users` users in coverage.
pub fn expected_rate(params: &RadioParams, server: &Point, user: &Point, n_assoc_users: usize) -> Result<f64> {
    instantaneous_rate(params, server, user, n_assoc_users, 1.0)
}

/// Like [`expected_rate`] with the received power multiplied by a fading
/// power gain (unit-mean exponential under Rayleigh fading).
pub fn instantaneous_rate(
    params: &RadioParams,
    server: &Point,
    user: &Point,
    n_assoc_users: usize,
    fading_gain: f64,
) -> Result<f64> {
    let distance = server.distance(user);
    if distance > params.coverage_radius {
        return Err(Error::OutOfCoverage {
            distance,
            radius: params.coverage_radius,
        });
    }
    if n_assoc_users == 0 {
        return Err(Error::validation("n_assoc_users", "must be at least 1"));
    }
    Ok(params.rate_at(distance, n_assoc_users, fading_gain.max(0.0)))
}

/// Precomputed rates, latencies and reachability for one scenario snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    n_servers: usize,
    n_users: usize,
    n_models: usize,
    /// Per user: covering servers, ascending.
    assoc: Vec<Vec<usize>>,
    /// Per server: number of covered users.
    load: Vec<usize>,
    /// `m * K + k`; NaN when `m` does not cover `k`.
    rate: Vec<f64>,
    /// `(m * K + k) * I + i`, seconds.
    latency: Vec<f64>,
    reach: Vec<bool>,
}

/// Builds the table for a scenario using expected rates.
pub fn build_rate_table(scenario: &Scenario) -> RateTable {
    RateTable::build(
        &scenario.radio_params(),
        &scenario.servers,
        &scenario.users,
        &scenario.library,
        &scenario.demand,
        |_, _| 1.0,
    )
}

impl RateTable {
    /// `gain(m, k)` scales the received power of every covered link.
    pub fn build(
        params: &RadioParams,
        servers: &[Server],
        users: &[Point],
        library: &ModelLibrary,
        demand: &DemandMatrix,
        mut gain: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let (n_servers, n_users, n_models) = (servers.len(), users.len(), library.n_models());
        let mut assoc = vec![Vec::new(); n_users];
        let mut load = vec![0usize; n_servers];
        for (m, s) in servers.iter().enumerate() {
            for (k, u) in users.iter().enumerate() {
                if params.covers(&s.position, u) {
                    assoc[k].push(m);
                    load[m] += 1;
                }
            }
        }

        let mut rate = vec![f64::NAN; n_servers * n_users];
        for (k, servers_of_k) in assoc.iter().enumerate() {
            for &m in servers_of_k {
                let d = servers[m].position.distance(&users[k]);
                rate[m * n_users + k] = params.rate_at(d, load[m], gain(m, k));
            }
        }

        // Relay legs only depend on the fastest covering server.
        let best_rate: Vec<Option<f64>> = assoc
            .iter()
            .enumerate()
            .map(|(k, ms)| {
                ms.iter()
                    .map(|&m| rate[m * n_users + k])
                    .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
            })
            .collect();

        let mut latency = vec![f64::INFINITY; n_servers * n_users * n_models];
        let mut reach = vec![false; latency.len()];
        for m in 0..n_servers {
            for k in 0..n_users {
                let Some(best) = best_rate[k] else { continue };
                let direct = rate[m * n_users + k];
                for i in 0..n_models {
                    let bits = library.model(i).download_size as f64 * 8.0;
                    let t = if direct.is_nan() {
                        bits / params.inter_server_rate + bits / best
                    } else {
                        bits / direct
                    } + demand.infer_latency(k, i);
                    let idx = (m * n_users + k) * n_models + i;
                    latency[idx] = t;
                    reach[idx] = t <= demand.budget(k, i);
                }
            }
        }

        Self {
            n_servers,
            n_users,
            n_models,
            assoc,
            load,
            rate,
            latency,
            reach,
        }
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    /// Servers covering `user`.
    pub fn assoc(&self, user: usize) -> &[usize] {
        &self.assoc[user]
    }

    /// Users covered by `server`.
    pub fn load(&self, server: usize) -> usize {
        self.load[server]
    }

    /// Radio rate (bit/s), `None` when `server` does not cover `user`.
    pub fn rate(&self, server: usize, user: usize) -> Option<f64> {
        let r = self.rate[server * self.n_users + user];
        (!r.is_nan()).then_some(r)
    }

    /// End-to-end latency in seconds; infinite for uncovered users.
    pub fn latency(&self, server: usize, user: usize, model: usize) -> f64 {
        self.latency[(server * self.n_users + user) * self.n_models + model]
    }

    /// Whether `server` can deliver `model` to `user` within its budget.
    #[inline]
    pub fn reach(&self, server: usize, user: usize, model: usize) -> bool {
        self.reach[(server * self.n_users + user) * self.n_models + model]
    }
}

/// Latency of `server` delivering `model` to `user`, recomputed from the
/// rates in `rates`.
pub fn e2e_latency(scenario: &Scenario, rates: &RateTable, server: usize, user: usize, model: usize) -> f64 {
    let assoc = rates.assoc(user);
    if assoc.is_empty() {
        return f64::INFINITY;
    }
    let bits = scenario.library.model(model).download_size as f64 * 8.0;
    let infer = scenario.demand.infer_latency(user, model);
    match rates.rate(server, user) {
        Some(r) => bits / r + infer,
        None => {
            let c = scenario.radio_params().inter_server_rate;
            assoc
                .iter()
                .map(|&m2| bits / c + bits / rates.rate(m2, user).expect("associated"))
                .fold(f64::INFINITY, f64::min)
                + infer
        }
    }
}
