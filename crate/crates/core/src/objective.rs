//! Cache hit ratio, storage feasibility and the served-request bookkeeping
//! used by the successive solver.
//!
//! Request probabilities live on a fixed grid of 10^-6 ("demand units"), so
//! every hit count and residual utility below is an exact integer.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::library::Placement;
use crate::radio::RateTable;
use crate::scenario::Scenario;

/// Demand units per unit of probability.
pub const PROB_SCALE: u64 = 1_000_000;

/// Parses a decimal probability string with at most six fractional digits
/// into demand units.
pub fn parse_prob(text: &str) -> Result<u64> {
    let bad = |why: &str| Error::validation(format!("probability {text:?}"), why.to_string());
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad("empty"));
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("expected a plain non-negative decimal"));
    }
    if frac.len() > 6 {
        return Err(bad("more than 6 fractional digits"));
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad("integer part overflows"))? };
    let mut units = 0u64;
    for (pos, b) in frac.bytes().enumerate() {
        units += u64::from(b - b'0') * 10u64.pow(5 - pos as u32);
    }
    int.checked_mul(PROB_SCALE)
        .and_then(|v| v.checked_add(units))
        .ok_or_else(|| bad("overflows"))
}

pub fn format_prob(units: u64) -> String {
    let (int, frac) = (units / PROB_SCALE, units % PROB_SCALE);
    if frac == 0 {
        return int.to_string();
    }
    let digits = format!("{frac:06}");
    format!("{int}.{}", digits.trim_end_matches('0'))
}

/// Per-request demand: probability, latency budget and on-device inference
/// latency, each a dense users x models matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    n_models: usize,
    p: Vec<u64>,
    budget: Vec<f64>,
    infer: Vec<f64>,
}

impl DemandMatrix {
    /// `p` in demand units, `budget` and `infer` in seconds, all row-major.
    pub fn new(n_users: usize, n_models: usize, p: Vec<u64>, budget: Vec<f64>, infer: Vec<f64>) -> Result<Self> {
        let d = Self {
            n_models,
            p,
            budget,
            infer,
        };
        d.validate(n_users, n_models)?;
        Ok(d)
    }

    /// Every request carries the same budget and zero inference latency.
    pub fn with_uniform_budget(n_users: usize, n_models: usize, p: Vec<u64>, budget_s: f64) -> Result<Self> {
        let n = n_users * n_models;
        Self::new(n_users, n_models, p, vec![budget_s; n], vec![0.0; n])
    }

    pub fn validate(&self, n_users: usize, n_models: usize) -> Result<()> {
        let n = n_users * n_models;
        if self.n_models != n_models || self.p.len() != n || self.budget.len() != n || self.infer.len() != n {
            return Err(Error::validation(
                "demand",
                format!("expected {n_users} x {n_models} matrices"),
            ));
        }
        if self.total() == 0 {
            return Err(Error::validation("demand.p", "total demand must be positive"));
        }
        if let Some(idx) = self.budget.iter().position(|&b| !(b > 0.0)) {
            return Err(Error::validation(
                format!("demand.budget_s[{}][{}]", idx / n_models.max(1), idx % n_models.max(1)),
                "budget must be positive",
            ));
        }
        if let Some(idx) = self.infer.iter().position(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::validation(
                format!("demand.infer_s[{}][{}]", idx / n_models.max(1), idx % n_models.max(1)),
                "inference latency must be finite and non-negative",
            ));
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.p.len().checked_div(self.n_models).unwrap_or(0)
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    /// Demand units of `user` requesting `model`.
    #[inline]
    pub fn p(&self, user: usize, model: usize) -> u64 {
        self.p[user * self.n_models + model]
    }

    #[inline]
    pub fn budget(&self, user: usize, model: usize) -> f64 {
        self.budget[user * self.n_models + model]
    }

    #[inline]
    pub fn infer_latency(&self, user: usize, model: usize) -> f64 {
        self.infer[user * self.n_models + model]
    }

    /// Total demand units over all requests.
    pub fn total(&self) -> u64 {
        self.p.iter().sum()
    }

    pub fn set_budgets(&mut self, budget_s: f64) {
        self.budget.iter_mut().for_each(|b| *b = budget_s);
    }

    pub fn budgets_mut(&mut self) -> &mut [f64] {
        &mut self.budget
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.p.chunks(self.n_models.max(1))
    }
}

#[derive(Serialize, Deserialize)]
struct DemandFile {
    p: Vec<Vec<String>>,
    budget_s: Vec<Vec<Seconds>>,
    infer_s: Vec<Vec<f64>>,
}

/// Seconds that may be infinite; written as the string `"inf"` in JSON.
#[derive(Clone, Copy)]
struct Seconds(f64);

impl Serialize for Seconds {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Seconds(v)),
            Raw::Text(t) if t == "inf" => Ok(Seconds(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected seconds or \"inf\", got {t:?}"))),
        }
    }
}

impl Serialize for DemandMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let w = self.n_models.max(1);
        DemandFile {
            p: self.p.chunks(w).map(|r| r.iter().map(|&u| format_prob(u)).collect()).collect(),
            budget_s: self.budget.chunks(w).map(|r| r.iter().map(|&b| Seconds(b)).collect()).collect(),
            infer_s: self.infer.chunks(w).map(<[f64]>::to_vec).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DemandMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = DemandFile::deserialize(d)?;
        let n_models = f.p.first().map_or(0, Vec::len);
        if f.p.iter().any(|r| r.len() != n_models)
            || f.budget_s.iter().any(|r| r.len() != n_models)
            || f.infer_s.iter().any(|r| r.len() != n_models)
            || f.budget_s.len() != f.p.len()
            || f.infer_s.len() != f.p.len()
        {
            return Err(D::Error::custom("demand matrices must be rectangular and of equal shape"));
        }
        let p = f
            .p
            .iter()
            .flatten()
            .map(|t| parse_prob(t))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Ok(DemandMatrix {
            n_models,
            p,
            budget: f.budget_s.into_iter().flatten().map(|s| s.0).collect(),
            infer: f.infer_s.into_iter().flatten().collect(),
        })
    }
}

/// Requests already satisfied by servers decided earlier in the successive
/// solver. A cleared bit means the request still counts towards a server's
/// residual utility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedMask {
    n_models: usize,
    served: Vec<bool>,
}

impl ServedMask {
    pub fn none(n_users: usize, n_models: usize) -> Self {
        Self {
            n_models,
            served: vec![false; n_users * n_models],
        }
    }

    pub fn all(n_users: usize, n_models: usize) -> Self {
        Self {
            n_models,
            served: vec![true; n_users * n_models],
        }
    }

    #[inline]
    pub fn is_served(&self, user: usize, model: usize) -> bool {
        self.served[user * self.n_models + model]
    }

    pub fn set(&mut self, user: usize, model: usize) {
        self.served[user * self.n_models + model] = true;
    }
}

/// Storage occupied on `server`, shared blocks counted once.
pub fn storage_used(scenario: &Scenario, placement: &Placement, server: usize) -> u64 {
    placement.storage_used(&scenario.library, server)
}

/// Whether every server respects its capacity under block-union accounting.
pub fn is_feasible(scenario: &Scenario, placement: &Placement) -> bool {
    (0..scenario.n_servers()).all(|m| storage_used(scenario, placement, m) <= scenario.capacity(m))
}

/// Demand units of requests that some server holding the model can deliver
/// within budget.
pub fn hit_units(scenario: &Scenario, rates: &RateTable, placement: &Placement) -> u64 {
    let demand = &scenario.demand;
    let mut hits = 0;
    for k in 0..scenario.n_users() {
        for i in 0..scenario.n_models() {
            let p = demand.p(k, i);
            if p > 0 && (0..scenario.n_servers()).any(|m| placement.get(m, i) && rates.reach(m, k, i)) {
                hits += p;
            }
        }
    }
    hits
}

/// Expected cache hit ratio of `placement`.
pub fn hit_ratio(scenario: &Scenario, rates: &RateTable, placement: &Placement) -> f64 {
    hit_units(scenario, rates, placement) as f64 / scenario.demand.total() as f64
}

/// Residual utility of caching each model on `server`: demand units of
/// requests the server can serve in time and no earlier server already serves.
pub fn residual_utilities(scenario: &Scenario, rates: &RateTable, served: &ServedMask, server: usize) -> Vec<u64> {
    let demand = &scenario.demand;
    (0..scenario.n_models())
        .map(|i| {
            (0..scenario.n_users())
                .filter(|&k| rates.reach(server, k, i) && !served.is_served(k, i))
                .map(|k| demand.p(k, i))
                .sum()
        })
        .collect()
}

/// Marks requests that `server`, now holding `placed`, can deliver in time.
pub fn update_served(rates: &RateTable, served: &ServedMask, server: usize, placed: &[usize]) -> ServedMask {
    let mut next = served.clone();
    for &i in placed {
        for k in 0..rates.n_users() {
            if rates.reach(server, k, i) {
                next.set(k, i);
            }
        }
    }
    next
}
