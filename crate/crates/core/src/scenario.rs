//! Network scenario: servers, users, radio constants, the model library and
//! the demand matrix, plus its on-disk JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::ModelLibrary;
use crate::objective::DemandMatrix;
use crate::radio::RadioParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Server {
    pub position: Point,
    pub capacity_bytes: u64,
}

/// Radio constants as written in scenario and config files. Powers are in
/// dBm; everything else is SI. Converted once into [`RadioParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub gamma0: f64,
    pub alpha0: f64,
    pub noise_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub power_dbm: f64,
    pub active_prob: f64,
    pub inter_server_rate_bps: f64,
    pub coverage_radius_m: f64,
    pub min_distance_m: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            alpha0: 4.0,
            noise_dbm_per_hz: -174.0,
            bandwidth_hz: 400e6,
            power_dbm: 43.0,
            active_prob: 0.5,
            inter_server_rate_bps: 10e9,
            coverage_radius_m: 275.0,
            min_distance_m: 1.0,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl RadioConfig {
    pub fn to_params(&self) -> Result<RadioParams> {
        let positive = [
            ("radio.gamma0", self.gamma0),
            ("radio.alpha0", self.alpha0),
            ("radio.bandwidth_hz", self.bandwidth_hz),
            ("radio.inter_server_rate_bps", self.inter_server_rate_bps),
            ("radio.coverage_radius_m", self.coverage_radius_m),
            ("radio.min_distance_m", self.min_distance_m),
        ];
        for (path, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(path, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.active_prob > 0.0 && self.active_prob <= 1.0) {
            return Err(Error::validation("radio.active_prob", "must lie in (0, 1]"));
        }
        if !self.power_dbm.is_finite() || !self.noise_dbm_per_hz.is_finite() {
            return Err(Error::validation("radio", "powers must be finite dBm values"));
        }
        Ok(RadioParams {
            gamma0: self.gamma0,
            alpha0: self.alpha0,
            n0: dbm_to_watts(self.noise_dbm_per_hz),
            total_bandwidth: self.bandwidth_hz,
            total_power: dbm_to_watts(self.power_dbm),
            active_prob: self.active_prob,
            inter_server_rate: self.inter_server_rate_bps,
            coverage_radius: self.coverage_radius_m,
            min_distance: self.min_distance_m,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub library: ModelLibrary,
    pub servers: Vec<Server>,
    pub users: Vec<Point>,
    pub radio: RadioConfig,
    pub demand: DemandMatrix,
}

impl Scenario {
    pub fn new(
        library: ModelLibrary,
        servers: Vec<Server>,
        users: Vec<Point>,
        radio: RadioConfig,
        demand: DemandMatrix,
    ) -> Result<Self> {
        let s = Self {
            library,
            servers,
            users,
            radio,
            demand,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.to_params()?;
        self.demand
            .validate(self.users.len(), self.library.n_models())?;
        Ok(())
    }

    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_models(&self) -> usize {
        self.library.n_models()
    }

    pub fn radio_params(&self) -> RadioParams {
        self.radio
            .to_params()
            .expect("radio section validated at construction")
    }

    pub fn capacity(&self, server: usize) -> u64 {
        self.servers[server].capacity_bytes
    }

    pub fn with_capacity(mut self, capacity_bytes: u64) -> Self {
        for s in &mut self.servers {
            s.capacity_bytes = capacity_bytes;
        }
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
