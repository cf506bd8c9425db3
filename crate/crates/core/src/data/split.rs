use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_triples, write_named_triples, Dictionary, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("valid", self.valid), ("test", self.test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(
                    format!("ratios.{name}"),
                    format!("{v} is outside [0, 1]"),
                ));
            }
        }
        let sum = self.train + self.valid + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation("ratios", format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// One client's shard of the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub local_entities: BTreeSet<EntityId>,
    pub local_relations: BTreeSet<RelationId>,
}

impl ClientDataset {
    pub fn new(client_id: usize, train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>) -> Self {
        let mut local_entities = BTreeSet::new();
        let mut local_relations = BTreeSet::new();
        for t in train.iter().chain(&valid).chain(&test) {
            local_entities.insert(t.head);
            local_entities.insert(t.tail);
            local_relations.insert(t.relation);
        }
        Self {
            client_id,
            train,
            valid,
            test,
            local_entities,
            local_relations,
        }
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles the graph once, deals triples round-robin to `num_clients`
/// clients and partitions each shard by `ratios`. Valid and test sizes are
/// floored; train takes the remainder.
pub fn federated_split(
    kg: &KnowledgeGraph,
    num_clients: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    ratios.validate()?;
    if num_clients == 0 {
        return Err(Error::validation("num_clients", "must be at least 1"));
    }
    if num_clients > kg.triples.len() {
        return Err(Error::Config(format!(
            "{num_clients} clients requested but the graph has only {} triples",
            kg.triples.len()
        )));
    }

    let mut shuffled = kg.triples.clone();
    shuffled.shuffle(&mut rng::substream(seed, "split"));

    let mut shards: Vec<Vec<Triple>> = vec![Vec::new(); num_clients];
    for (i, t) in shuffled.into_iter().enumerate() {
        shards[i % num_clients].push(t);
    }

    Ok(shards
        .into_iter()
        .enumerate()
        .map(|(client_id, mut shard)| {
            let n = shard.len();
            let n_valid = floor_count(n, ratios.valid);
            let n_test = floor_count(n, ratios.test);
            let n_train = n - n_valid - n_test;
            let test = shard.split_off(n_train + n_valid);
            let valid = shard.split_off(n_train);
            ClientDataset::new(client_id, shard, valid, test)
        })
        .collect())
}

fn floor_count(n: usize, fraction: f64) -> usize {
    // 1e-9 absorbs representation error such as 100 * 0.1.
    ((n as f64 * fraction) + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub entity_counts: Vec<usize>,
    pub relation_counts: Vec<usize>,
    pub triple_counts: Vec<usize>,
    pub entity_mean: f64,
    pub entity_std: f64,
    pub relation_mean: f64,
    pub relation_std: f64,
}

/// Per-client entity and relation counts with population standard deviation.
pub fn split_stats(clients: &[ClientDataset]) -> Result<SplitStats> {
    if clients.is_empty() {
        return Err(Error::validation("clients", "at least one client is required"));
    }
    let entity_counts: Vec<usize> = clients.iter().map(|c| c.local_entities.len()).collect();
    let relation_counts: Vec<usize> = clients.iter().map(|c| c.local_relations.len()).collect();
    let (entity_mean, entity_std) = mean_std(&entity_counts);
    let (relation_mean, relation_std) = mean_std(&relation_counts);
    Ok(SplitStats {
        triple_counts: clients.iter().map(ClientDataset::len).collect(),
        entity_counts,
        relation_counts,
        entity_mean,
        entity_std,
        relation_mean,
        relation_std,
    })
}

fn mean_std(values: &[usize]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// SHA-256 over dictionaries and every client partition, in id form.
pub fn split_fingerprint(entities: &Dictionary, relations: &Dictionary, clients: &[ClientDataset]) -> String {
    let mut h = Sha256::new();
    for name in entities.names().iter().chain(relations.names()) {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
    }
    for c in clients {
        h.update((c.client_id as u64).to_le_bytes());
        for part in [&c.train, &c.valid, &c.test] {
            h.update((part.len() as u64).to_le_bytes());
            for t in part.iter() {
                h.update(t.head.to_le_bytes());
                h.update(t.relation.to_le_bytes());
                h.update(t.tail.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub const ENTITY_DICT_FILE: &str = "entities.dict";
pub const RELATION_DICT_FILE: &str = "relations.dict";
pub const STATS_FILE: &str = "stats.json";

pub fn client_dir_name(client_id: usize) -> String {
    format!("client_{client_id}")
}

/// Writes `client_<i>/{train,valid,test}.txt`, both dictionaries and
/// `stats.json` under `dir`.
pub fn write_split(dir: &Path, kg: &KnowledgeGraph, clients: &[ClientDataset]) -> Result<SplitStats> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    kg.entities.write(&dir.join(ENTITY_DICT_FILE))?;
    kg.relations.write(&dir.join(RELATION_DICT_FILE))?;
    for c in clients {
        let cdir = dir.join(client_dir_name(c.client_id));
        fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        for (name, part) in [("train.txt", &c.train), ("valid.txt", &c.valid), ("test.txt", &c.test)] {
            write_named_triples(&cdir.join(name), part, &kg.entities, &kg.relations)?;
        }
    }
    let stats = split_stats(clients)?;
    let path = dir.join(STATS_FILE);
    let body = serde_json::to_string_pretty(&stats)?;
    fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(stats)
}

/// A split read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub entities: Dictionary,
    pub relations: Dictionary,
    pub clients: Vec<ClientDataset>,
}

impl LoadedSplit {
    pub fn fingerprint(&self) -> String {
        split_fingerprint(&self.entities, &self.relations, &self.clients)
    }
}

pub fn read_split(dir: &Path) -> Result<LoadedSplit> {
    let ent_path = dir.join(ENTITY_DICT_FILE);
    let rel_path = dir.join(RELATION_DICT_FILE);
    let entities = Dictionary::load(&ent_path)?;
    let relations = Dictionary::load(&rel_path)?;
    let mut clients = Vec::new();
    loop {
        let cdir = dir.join(client_dir_name(clients.len()));
        if !cdir.is_dir() {
            break;
        }
        let part = |name: &str| -> Result<Vec<Triple>> {
            let (kg, _) = load_triples(&cdir.join(name), Some(&ent_path), Some(&rel_path))?;
            Ok(kg.triples)
        };
        clients.push(ClientDataset::new(
            clients.len(),
            part("train.txt")?,
            part("valid.txt")?,
            part("test.txt")?,
        ));
    }
    if clients.is_empty() {
        return Err(Error::Config(format!("no client directories under {}", dir.display())));
    }
    Ok(LoadedSplit {
        entities,
        relations,
        clients,
    })
}
