//! Parameter-sharing model library and the placement matrix.
//!
//! A model is a set of parameter blocks. A block contained in two or more
//! models is *shared*; a server that caches several models holding the same
//! block stores that block once, so the storage a set of models occupies is
//! the size of the union of their blocks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decimal gigabyte.
pub const GB: u64 = 1_000_000_000;
/// Decimal megabyte.
pub const MB: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub id: usize,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub id: usize,
    /// Sorted, deduplicated block ids.
    pub block_ids: Vec<usize>,
    /// Sum of the sizes of `block_ids`.
    pub download_size: u64,
}

/// Serialized form of a library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub blocks: Vec<ParameterBlock>,
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: usize,
    pub block_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LibraryManifest", into = "LibraryManifest")]
pub struct ModelLibrary {
    blocks: Vec<ParameterBlock>,
    models: Vec<Model>,
    block_to_models: Vec<Vec<usize>>,
    shared_blocks: Vec<usize>,
    /// block id -> position in `shared_blocks`
    shared_slot: Vec<Option<usize>>,
    /// per model: positions (in `shared_blocks`) of its shared blocks
    model_shared: Vec<Vec<usize>>,
}

fn check_dense(kind: &str, ids: impl Iterator<Item = usize>, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for id in ids {
        if id >= n {
            return Err(Error::validation(
                format!("{kind}[{id}]"),
                format!("id out of range, ids must be dense in 0..{n}"),
            ));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::validation(format!("{kind}[{id}]"), "duplicate id"));
        }
    }
    Ok(())
}

impl ModelLibrary {
    /// Builds a library from `(block id, size)` pairs and `(model id, block ids)`
    /// pairs. Ids of both kinds must be dense, starting at zero, in any order.
    pub fn new(blocks: &[(usize, u64)], models: &[(usize, Vec<usize>)]) -> Result<Self> {
        check_dense("block", blocks.iter().map(|b| b.0), blocks.len())?;
        check_dense("model", models.iter().map(|m| m.0), models.len())?;

        let mut block_list = vec![ParameterBlock { id: 0, size_bytes: 0 }; blocks.len()];
        for &(id, size_bytes) in blocks {
            if size_bytes == 0 {
                return Err(Error::validation(format!("block[{id}]"), "size must be positive"));
            }
            block_list[id] = ParameterBlock { id, size_bytes };
        }

        let mut model_list: Vec<Option<Model>> = vec![None; models.len()];
        for (id, ids) in models {
            let set: BTreeSet<usize> = ids.iter().copied().collect();
            if set.is_empty() {
                return Err(Error::validation(format!("model[{id}]"), "model has no blocks"));
            }
            if let Some(&bad) = set.iter().find(|&&b| b >= block_list.len()) {
                return Err(Error::validation(
                    format!("model[{id}]"),
                    format!("references unknown block {bad}"),
                ));
            }
            let block_ids: Vec<usize> = set.into_iter().collect();
            let download_size = block_ids.iter().map(|&b| block_list[b].size_bytes).sum();
            model_list[*id] = Some(Model {
                id: *id,
                block_ids,
                download_size,
            });
        }
        let model_list: Vec<Model> = model_list.into_iter().flatten().collect();

        let mut block_to_models = vec![Vec::new(); block_list.len()];
        for m in &model_list {
            for &b in &m.block_ids {
                block_to_models[b].push(m.id);
            }
        }
        if let Some(orphan) = block_to_models.iter().position(Vec::is_empty) {
            return Err(Error::validation(
                format!("block[{orphan}]"),
                "block is not part of any model",
            ));
        }

        let shared_blocks: Vec<usize> = (0..block_list.len())
            .filter(|&b| block_to_models[b].len() >= 2)
            .collect();
        let mut shared_slot = vec![None; block_list.len()];
        for (slot, &b) in shared_blocks.iter().enumerate() {
            shared_slot[b] = Some(slot);
        }
        let model_shared = model_list
            .iter()
            .map(|m| m.block_ids.iter().filter_map(|&b| shared_slot[b]).collect())
            .collect();

        Ok(Self {
            blocks: block_list,
            models: model_list,
            block_to_models,
            shared_blocks,
            shared_slot,
            model_shared,
        })
    }

    pub fn from_manifest(manifest: &LibraryManifest) -> Result<Self> {
        let blocks: Vec<(usize, u64)> = manifest.blocks.iter().map(|b| (b.id, b.size_bytes)).collect();
        let models: Vec<(usize, Vec<usize>)> = manifest
            .models
            .iter()
            .map(|m| (m.id, m.block_ids.clone()))
            .collect();
        Self::new(&blocks, &models)
    }

    pub fn to_manifest(&self) -> LibraryManifest {
        LibraryManifest {
            blocks: self.blocks.clone(),
            models: self
                .models
                .iter()
                .map(|m| ModelEntry {
                    id: m.id,
                    block_ids: m.block_ids.clone(),
                })
                .collect(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn model(&self, id: usize) -> &Model {
        &self.models[id]
    }

    pub fn block_size(&self, id: usize) -> u64 {
        self.blocks[id].size_bytes
    }

    /// Models containing block `id`.
    pub fn models_with_block(&self, id: usize) -> &[usize] {
        &self.block_to_models[id]
    }

    /// Ids of blocks held by at least two models, ascending.
    pub fn shared_blocks(&self) -> &[usize] {
        &self.shared_blocks
    }

    pub fn is_shared(&self, block: usize) -> bool {
        self.shared_slot[block].is_some()
    }

    /// Positions in [`shared_blocks`](Self::shared_blocks) of the shared
    /// blocks of model `id`.
    pub fn shared_slots_of(&self, id: usize) -> &[usize] {
        &self.model_shared[id]
    }

    /// Bytes of model `id` that live in shared blocks.
    pub fn shared_bytes_of(&self, id: usize) -> u64 {
        self.model_shared[id]
            .iter()
            .map(|&s| self.blocks[self.shared_blocks[s]].size_bytes)
            .sum()
    }

    /// Bytes of model `id` that live in blocks no other model holds.
    pub fn specific_bytes_of(&self, id: usize) -> u64 {
        self.models[id].download_size - self.shared_bytes_of(id)
    }

    pub fn total_download_size(&self) -> u64 {
        self.models.iter().map(|m| m.download_size).sum()
    }

    pub fn total_block_bytes(&self) -> u64 {
        self.blocks.iter().map(|b| b.size_bytes).sum()
    }

    /// Storage needed to hold every model in `models`, each block counted once.
    pub fn union_size(&self, models: &[usize]) -> Result<u64> {
        let mut union = BlockUnion::new(self);
        for &i in models {
            if i >= self.models.len() {
                return Err(Error::validation(format!("model[{i}]"), "unknown model id"));
            }
            union.insert(self, i);
        }
        Ok(union.bytes())
    }

    /// Sum of full download sizes, i.e. storage with no deduplication.
    pub fn additive_size(&self, models: &[usize]) -> u64 {
        models.iter().map(|&i| self.models[i].download_size).sum()
    }
}

impl TryFrom<LibraryManifest> for ModelLibrary {
    type Error = Error;

    fn try_from(value: LibraryManifest) -> Result<Self> {
        Self::from_manifest(&value)
    }
}

impl From<ModelLibrary> for LibraryManifest {
    fn from(value: ModelLibrary) -> Self {
        value.to_manifest()
    }
}

/// Running union of the blocks of a growing set of models.
#[derive(Debug, Clone)]
pub struct BlockUnion {
    present: Vec<bool>,
    bytes: u64,
}

impl BlockUnion {
    pub fn new(library: &ModelLibrary) -> Self {
        Self {
            present: vec![false; library.n_blocks()],
            bytes: 0,
        }
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn contains_block(&self, block: usize) -> bool {
        self.present[block]
    }

    /// Bytes that adding `model` would add.
    pub fn extra_bytes(&self, library: &ModelLibrary, model: usize) -> u64 {
        library.models[model]
            .block_ids
            .iter()
            .filter(|&&b| !self.present[b])
            .map(|&b| library.blocks[b].size_bytes)
            .sum()
    }

    /// Adds `model`, returning the bytes it added.
    pub fn insert(&mut self, library: &ModelLibrary, model: usize) -> u64 {
        let mut added = 0;
        for &b in &library.models[model].block_ids {
            if !std::mem::replace(&mut self.present[b], true) {
                added += library.blocks[b].size_bytes;
            }
        }
        self.bytes += added;
        added
    }
}

/// Binary server x model placement matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    n_servers: usize,
    n_models: usize,
    x: Vec<bool>,
}

impl Placement {
    pub fn empty(n_servers: usize, n_models: usize) -> Self {
        Self {
            n_servers,
            n_models,
            x: vec![false; n_servers * n_models],
        }
    }

    pub fn full(n_servers: usize, n_models: usize) -> Self {
        Self {
            n_servers,
            n_models,
            x: vec![true; n_servers * n_models],
        }
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn get(&self, server: usize, model: usize) -> bool {
        self.x[server * self.n_models + model]
    }

    pub fn set(&mut self, server: usize, model: usize, value: bool) {
        self.x[server * self.n_models + model] = value;
    }

    /// Models cached on `server`, ascending.
    pub fn row(&self, server: usize) -> Vec<usize> {
        (0..self.n_models).filter(|&i| self.get(server, i)).collect()
    }

    pub fn row_bits(&self, server: usize) -> &[bool] {
        &self.x[server * self.n_models..(server + 1) * self.n_models]
    }

    /// Number of `x_{m,i} = 1` entries.
    pub fn count(&self) -> usize {
        self.x.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Flat row-major view of the matrix.
    pub fn bits(&self) -> &[bool] {
        &self.x
    }

    /// Element-wise OR.
    pub fn union(&self, other: &Placement) -> Placement {
        assert_eq!((self.n_servers, self.n_models), (other.n_servers, other.n_models));
        Placement {
            n_servers: self.n_servers,
            n_models: self.n_models,
            x: self.x.iter().zip(&other.x).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Block-level image `y_{m,j}`: a block is on a server iff some cached
    /// model there contains it.
    pub fn block_matrix(&self, library: &ModelLibrary) -> Vec<Vec<bool>> {
        (0..self.n_servers)
            .map(|m| {
                (0..library.n_blocks())
                    .map(|j| library.models_with_block(j).iter().any(|&i| self.get(m, i)))
                    .collect()
            })
            .collect()
    }

    /// Storage occupied on `server`, shared blocks counted once.
    pub fn storage_used(&self, library: &ModelLibrary, server: usize) -> u64 {
        let mut union = BlockUnion::new(library);
        for i in self.row(server) {
            union.insert(library, i);
        }
        union.bytes()
    }

    /// Storage on `server` if every model is charged its full size.
    pub fn additive_storage_used(&self, library: &ModelLibrary, server: usize) -> u64 {
        library.additive_size(&self.row(server))
    }

    pub fn to_file(&self) -> PlacementFile {
        PlacementFile {
            n_models: self.n_models,
            servers: (0..self.n_servers).map(|m| self.row(m)).collect(),
        }
    }

    pub fn from_file(file: &PlacementFile) -> Result<Self> {
        let mut p = Placement::empty(file.servers.len(), file.n_models);
        for (m, row) in file.servers.iter().enumerate() {
            for &i in row {
                if i >= file.n_models {
                    return Err(Error::validation(
                        format!("servers[{m}]"),
                        format!("model {i} out of range"),
                    ));
                }
                p.set(m, i, true);
            }
        }
        Ok(p)
    }
}

/// On-disk placement: cached model ids per server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementFile {
    pub n_models: usize,
    pub servers: Vec<Vec<usize>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_models() -> ModelLibrary {
        ModelLibrary::new(
            &[(0, 400 * MB), (1, 200 * MB), (2, 300 * MB)],
            &[(0, vec![0, 1]), (1, vec![0, 2])],
        )
        .unwrap()
    }

    #[test]
    fn shared_block_detection() {
        let lib = two_models();
        assert_eq!(lib.shared_blocks(), &[0]);
        assert_eq!(lib.model(0).download_size, 600 * MB);
        assert_eq!(lib.model(1).download_size, 700 * MB);
        assert_eq!(lib.models_with_block(0), &[0, 1]);
        assert_eq!(lib.specific_bytes_of(1), 300 * MB);
    }

    #[test]
    fn single_model_has_no_shared_blocks() {
        let lib = ModelLibrary::new(&[(0, 10)], &[(0, vec![0])]).unwrap();
        assert!(lib.shared_blocks().is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        let err = ModelLibrary::new(&[(0, 10)], &[(0, vec![0, 7])]).unwrap_err();
        assert!(err.to_string().contains("model[0]"), "{err}");
        let err = ModelLibrary::new(&[(0, 10), (0, 5)], &[(0, vec![0])]).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err = ModelLibrary::new(&[(0, 10)], &[(0, vec![0]), (1, vec![])]).unwrap_err();
        assert!(err.to_string().contains("model[1]"), "{err}");
        assert!(ModelLibrary::new(&[(0, 10), (2, 1)], &[(0, vec![0])]).is_err());
        assert!(ModelLibrary::new(&[(0, 0)], &[(0, vec![0])]).is_err());
    }

    #[test]
    fn union_sizes() {
        let lib = two_models();
        assert_eq!(lib.union_size(&[0, 1]).unwrap(), 900 * MB);
        assert_eq!(lib.union_size(&[]).unwrap(), 0);
        assert_eq!(lib.union_size(&[0]).unwrap(), 600 * MB);
        assert!(lib.union_size(&[5]).is_err());
    }

    #[test]
    fn identical_block_sets_are_distinct_models() {
        let lib = ModelLibrary::new(&[(0, 10)], &[(0, vec![0]), (1, vec![0])]).unwrap();
        assert_eq!(lib.union_size(&[0, 1]).unwrap(), 10);
        assert_eq!(lib.specific_bytes_of(0), 0);
    }

    #[test]
    fn block_matrix_follows_models() {
        let lib = two_models();
        let mut p = Placement::empty(2, 2);
        p.set(1, 1, true);
        let y = p.block_matrix(&lib);
        assert_eq!(y[0], vec![false, false, false]);
        assert_eq!(y[1], vec![true, false, true]);
        assert_eq!(p.storage_used(&lib, 1), 700 * MB);
    }

    #[test]
    fn manifest_json_round_trip() {
        let lib = two_models();
        let text = serde_json::to_string(&lib).unwrap();
        let back: ModelLibrary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, lib);
        let bad = r#"{"blocks":[{"id":0,"size_bytes":5}],"models":[{"id":0,"block_ids":[3]}]}"#;
        assert!(serde_json::from_str::<ModelLibrary>(bad).is_err());
    }
}
