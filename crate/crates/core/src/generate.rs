//! Reproducible scenario sampling: topology, Zipf demand and synthetic
//! parameter-sharing libraries.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::{ModelLibrary, MB};
use crate::objective::{DemandMatrix, PROB_SCALE};
use crate::scenario::{Point, RadioConfig, Scenario, Server};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable sub-seed for a cell identified by `parts`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyParams {
    pub area_side_m: f64,
    pub n_servers: usize,
    pub n_users: usize,
    /// Same capacity on every server.
    pub capacity_bytes: u64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            area_side_m: 1000.0,
            n_servers: 10,
            n_users: 10,
            capacity_bytes: 1_000 * MB,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
            return Err(Error::validation("topology.area_side_m", "must be positive"));
        }
        if self.n_servers == 0 {
            return Err(Error::validation("topology.n_servers", "must be positive"));
        }
        if self.n_users == 0 {
            return Err(Error::validation("topology.n_users", "must be positive"));
        }
        Ok(())
    }
}

fn uniform_point(side: f64, rng: &mut impl Rng) -> Point {
    Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side))
}

pub fn sample_servers(params: &TopologyParams, rng: &mut impl Rng) -> Vec<Server> {
    (0..params.n_servers)
        .map(|_| Server {
            position: uniform_point(params.area_side_m, rng),
            capacity_bytes: params.capacity_bytes,
        })
        .collect()
}

pub fn sample_users(params: &TopologyParams, rng: &mut impl Rng) -> Vec<Point> {
    (0..params.n_users).map(|_| uniform_point(params.area_side_m, rng)).collect()
}

/// Server and user positions, i.i.d. uniform on the square.
pub fn sample_topology(params: &TopologyParams, rng: &mut impl Rng) -> (Vec<Server>, Vec<Point>) {
    let servers = sample_servers(params, rng);
    (servers, sample_users(params, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Popularity {
    /// Each user ranks the models by its own random permutation.
    #[default]
    PerUser,
    /// One random ranking shared by all users.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandParams {
    pub zipf_s: f64,
    pub budget_min_s: f64,
    pub budget_max_s: f64,
    /// Fraction of each sampled budget reserved for on-device inference.
    pub infer_fraction: f64,
    pub popularity: Popularity,
}

impl Default for DemandParams {
    fn default() -> Self {
        Self {
            zipf_s: 0.8,
            budget_min_s: 0.5,
            budget_max_s: 1.0,
            infer_fraction: 0.0,
            popularity: Popularity::PerUser,
        }
    }
}

impl DemandParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zipf_s >= 0.0 && self.zipf_s.is_finite()) {
            return Err(Error::validation("demand.zipf_s", "must be non-negative"));
        }
        if !(self.budget_min_s > 0.0 && self.budget_min_s <= self.budget_max_s) {
            return Err(Error::validation("demand.budget_min_s", "need 0 < min <= max"));
        }
        if !(0.0..1.0).contains(&self.infer_fraction) {
            return Err(Error::validation("demand.infer_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Zipf weights `rank^-s` for ranks `1..=n`, normalized to sum to one.
pub fn zipf_pmf(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Rounds `weights` (summing to one) to demand units summing to exactly
/// [`PROB_SCALE`]: floors first, then one unit each to the largest
/// remainders, earlier entries first on ties.
pub fn quantize_pmf(weights: &[f64]) -> Vec<u64> {
    let scaled: Vec<f64> = weights.iter().map(|w| w * PROB_SCALE as f64).collect();
    let mut units: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = units.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = PROB_SCALE.saturating_sub(assigned) as usize;
    for &i in order.iter().cycle().take(missing) {
        units[i] += 1;
    }
    units
}

/// Demand for `n_users` users over `n_models` models.
pub fn sample_demand(params: &DemandParams, n_users: usize, n_models: usize, rng: &mut impl Rng) -> Result<DemandMatrix> {
    params.validate()?;
    let by_rank = quantize_pmf(&zipf_pmf(n_models, params.zipf_s));
    let mut global: Vec<usize> = (0..n_models).collect();
    global.shuffle(rng);
    let mut p = vec![0u64; n_users * n_models];
    let mut budget = vec![0.0; n_users * n_models];
    let mut infer = vec![0.0; n_users * n_models];
    for k in 0..n_users {
        let ranking = match params.popularity {
            Popularity::Global => global.clone(),
            Popularity::PerUser => {
                let mut r: Vec<usize> = (0..n_models).collect();
                r.shuffle(rng);
                r
            }
        };
        for (rank, &i) in ranking.iter().enumerate() {
            p[k * n_models + i] = by_rank[rank];
        }
        for i in 0..n_models {
            let total = rng.random_range(params.budget_min_s..=params.budget_max_s);
            budget[k * n_models + i] = total;
            infer[k * n_models + i] = total * params.infer_fraction;
        }
    }
    DemandMatrix::new(n_users, n_models, p, budget, infer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryMode {
    /// All shared blocks come from a fixed set of pre-trained ancestors.
    #[default]
    Special,
    /// Models derive from earlier models of the library, so the number of
    /// shared blocks grows with the library.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryParams {
    pub n_models: usize,
    pub mode: LibraryMode,
    /// Pre-trained ancestors (special mode).
    pub n_roots: usize,
    /// Freezable bottom blocks per architecture.
    pub chain_len: usize,
    /// Fraction of an architecture's bytes in its freezable chain. A model
    /// freezing the whole chain has exactly this fraction shared.
    pub shared_fraction: f64,
    pub model_size_min_bytes: u64,
    pub model_size_max_bytes: u64,
    /// Derivation generations (general mode).
    pub depth: usize,
}

impl Default for LibraryParams {
    fn default() -> Self {
        Self {
            n_models: 30,
            mode: LibraryMode::Special,
            n_roots: 3,
            chain_len: 3,
            shared_fraction: 0.7,
            model_size_min_bytes: 40 * MB,
            model_size_max_bytes: 100 * MB,
            depth: 2,
        }
    }
}

impl LibraryParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::validation("library.n_models", "must be positive"));
        }
        if self.n_roots == 0 {
            return Err(Error::validation("library.n_roots", "must be positive"));
        }
        if self.chain_len == 0 {
            return Err(Error::validation("library.chain_len", "must be positive"));
        }
        if self.depth == 0 {
            return Err(Error::validation("library.depth", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.shared_fraction) {
            return Err(Error::validation("library.shared_fraction", "must lie in [0, 1)"));
        }
        if self.model_size_min_bytes == 0 || self.model_size_min_bytes > self.model_size_max_bytes {
            return Err(Error::validation(
                "library.model_size_min_bytes",
                "need 0 < min <= max",
            ));
        }
        Ok(())
    }
}

/// An architecture: freezable chain block sizes and the remaining head size.
struct Architecture {
    chain: Vec<u64>,
    head: u64,
}

fn sample_architecture(params: &LibraryParams, rng: &mut impl Rng) -> Architecture {
    let total = rng.random_range(params.model_size_min_bytes..=params.model_size_max_bytes);
    let per_block = ((total as f64 * params.shared_fraction) / params.chain_len as f64).floor() as u64;
    if per_block == 0 {
        return Architecture {
            chain: Vec::new(),
            head: total,
        };
    }
    let chain = vec![per_block; params.chain_len];
    Architecture {
        head: total - per_block * params.chain_len as u64,
        chain,
    }
}

struct Builder {
    sizes: Vec<u64>,
    models: Vec<Vec<usize>>,
}

impl Builder {
    fn block(&mut self, size: u64) -> usize {
        self.sizes.push(size);
        self.sizes.len() - 1
    }

    fn finish(self) -> Result<ModelLibrary> {
        let mut used = vec![false; self.sizes.len()];
        for m in &self.models {
            for &b in m {
                used[b] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.sizes.len()];
        let mut blocks = Vec::new();
        for (old, &size) in self.sizes.iter().enumerate() {
            if used[old] {
                remap[old] = blocks.len();
                blocks.push((blocks.len(), size));
            }
        }
        let models: Vec<(usize, Vec<usize>)> = self
            .models
            .into_iter()
            .enumerate()
            .map(|(i, bs)| (i, bs.into_iter().map(|b| remap[b]).collect()))
            .collect();
        ModelLibrary::new(&blocks, &models)
    }
}

/// Samples a library; see [`LibraryMode`].
///
/// Every model of an architecture has that architecture's size. A model
/// freezes a prefix of `1..=chain_len` chain blocks of its ancestor and owns
/// the rest of its bytes.
pub fn synth_library(params: &LibraryParams, rng: &mut impl Rng) -> Result<ModelLibrary> {
    params.validate()?;
    let mut b = Builder {
        sizes: Vec::new(),
        models: Vec::new(),
    };
    match params.mode {
        LibraryMode::Special => {
            let roots: Vec<(Architecture, Vec<usize>)> = (0..params.n_roots)
                .map(|_| {
                    let arch = sample_architecture(params, rng);
                    let ids = arch.chain.iter().map(|&s| b.block(s)).collect();
                    (arch, ids)
                })
                .collect();
            for _ in 0..params.n_models {
                let (arch, chain_ids) = &roots[rng.random_range(0..roots.len())];
                let frozen = if chain_ids.is_empty() { 0 } else { rng.random_range(1..=chain_ids.len()) };
                let mut blocks: Vec<usize> = chain_ids[..frozen].to_vec();
                let own: u64 = arch.head + arch.chain[frozen..].iter().sum::<u64>();
                if own == 0 {
                    log::warn!("model {} has no specific bytes", b.models.len());
                } else {
                    blocks.push(b.block(own));
                }
                b.models.push(blocks);
            }
        }
        LibraryMode::General => {
            // Layer sizes: split n_models over `depth` layers, earlier layers first.
            let depth = params.depth.min(params.n_models);
            let layer_sizes: Vec<usize> = (0..depth)
                .map(|l| params.n_models / depth + usize::from(l < params.n_models % depth))
                .collect();
            // Per model: its own chain (block ids) and head size.
            let mut chains: Vec<(Vec<usize>, Vec<u64>)> = Vec::new();
            let mut prev_layer: Vec<usize> = Vec::new();
            for (layer, &count) in layer_sizes.iter().enumerate() {
                let mut this_layer = Vec::with_capacity(count);
                for _ in 0..count {
                    let model_id = b.models.len();
                    let (chain, chain_sizes, head) = if layer == 0 {
                        let arch = sample_architecture(params, rng);
                        let ids: Vec<usize> = arch.chain.iter().map(|&s| b.block(s)).collect();
                        (ids, arch.chain, arch.head)
                    } else {
                        let parent = prev_layer[rng.random_range(0..prev_layer.len())];
                        let (pchain, psizes): &(Vec<usize>, Vec<u64>) = &chains[parent];
                        let frozen = if pchain.is_empty() { 0 } else { rng.random_range(1..=pchain.len()) };
                        let mut ids = pchain[..frozen].to_vec();
                        ids.extend(psizes[frozen..].iter().map(|&s| b.block(s)));
                        let head = b.sizes[*b.models[parent].last().expect("non-empty")];
                        (ids, psizes.clone(), head)
                    };
                    let mut blocks = chain.clone();
                    blocks.push(b.block(head.max(1)));
                    b.models.push(blocks);
                    chains.push((chain, chain_sizes));
                    this_layer.push(model_id);
                }
                prev_layer = this_layer;
            }
        }
    }
    b.finish()
}

/// Library for runtime scaling measurements: `n_shared` shared blocks of
/// `shared_bytes`, each carried by exactly two models, and every model with
/// one specific block of `specific_bytes`. Models beyond the `2 n_shared`
/// carriers share nothing, so every combination of shared blocks leaves
/// nearly the whole library eligible.
pub fn carrier_library(n_models: usize, n_shared: usize, shared_bytes: u64, specific_bytes: u64) -> Result<ModelLibrary> {
    if n_models < 2 * n_shared {
        return Err(Error::validation("n_models", "need two carrier models per shared block"));
    }
    let mut blocks: Vec<(usize, u64)> = (0..n_shared).map(|b| (b, shared_bytes)).collect();
    let models: Vec<(usize, Vec<usize>)> = (0..n_models)
        .map(|i| {
            let own = blocks.len();
            blocks.push((own, specific_bytes));
            let ids = if i < 2 * n_shared { vec![i / 2, own] } else { vec![own] };
            (i, ids)
        })
        .collect();
    ModelLibrary::new(&blocks, &models)
}

/// Everything needed to sample one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub topology: TopologyParams,
    pub library: LibraryParams,
    pub demand: DemandParams,
    pub radio: RadioConfig,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.library.validate()?;
        self.demand.validate()?;
        self.radio.to_params()?;
        Ok(())
    }
}

/// Samples a scenario from one seed. Library, servers, users and demand
/// each draw from their own stream, so growing the user count keeps the
/// library, the servers and the first users (with their demand) unchanged.
pub fn sample_scenario(params: &ScenarioParams, seed: u64) -> Result<Scenario> {
    params.validate()?;
    let stream = |part: u64| rng_from_seed(derive_seed(seed, &[part]));
    let library = synth_library(&params.library, &mut stream(0))?;
    let servers = sample_servers(&params.topology, &mut stream(1));
    let users = sample_users(&params.topology, &mut stream(2));
    let demand = sample_demand(&params.demand, users.len(), library.n_models(), &mut stream(3))?;
    Scenario::new(library, servers, users, params.radio, demand)
}
