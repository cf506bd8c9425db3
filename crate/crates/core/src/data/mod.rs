//! Triples, dictionaries, and federated client splits.

mod split;
pub mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use split::{
    client_dir_name, federated_split, read_split, split_fingerprint, split_stats, write_split, ClientDataset,
    LoadedSplit, SplitRatios, SplitStats,
};

pub type EntityId = u32;
pub type RelationId = u32;

/// A directed fact `(head, relation, tail)` over dense integer ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Bijection between names and dense ids `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut dict = Self::new();
        for name in names {
            let name = name.into();
            if dict.ids.contains_key(&name) {
                return Err(Error::Config(format!("duplicate dictionary name `{name}`")));
            }
            dict.insert(name);
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Returns the id of `name`, assigning the next free id on first sight.
    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(id) = self.ids.get(name) {
            return *id;
        }
        self.insert(name.to_owned())
    }

    fn insert(&mut self, name: String) -> u32 {
        let id = self.names.len() as u32;
        self.ids.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    /// Reads a `name<TAB>id` file. Ids must be exactly `0..n` in some order.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: idx + 1,
                message,
            };
            let (name, id) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `name<TAB>id`".into()))?;
            let id: u32 = id
                .parse()
                .map_err(|_| parse_err(format!("bad id `{id}`")))?;
            pairs.push((id, name.to_owned()));
        }
        pairs.sort();
        for (expected, (id, _)) in pairs.iter().enumerate() {
            if *id as usize != expected {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: 0,
                    message: format!("ids are not dense: missing or repeated id near {expected}"),
                });
            }
        }
        Self::from_names(pairs.into_iter().map(|(_, n)| n))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, name) in self.names.iter().enumerate() {
            out.push_str(name);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// A directed multi-relational graph with its name dictionaries.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    pub triples: Vec<Triple>,
    pub entities: Dictionary,
    pub relations: Dictionary,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Builds a graph from id triples with synthetic names `e{id}` / `r{id}`.
    pub fn from_ids(triples: Vec<Triple>, num_entities: usize, num_relations: usize) -> Self {
        let entities = Dictionary::from_names((0..num_entities).map(|i| format!("e{i}")))
            .expect("generated names are unique");
        let relations = Dictionary::from_names((0..num_relations).map(|i| format!("r{i}")))
            .expect("generated names are unique");
        let mut seen = HashSet::with_capacity(triples.len());
        let triples = triples.into_iter().filter(|t| seen.insert(*t)).collect();
        Self {
            triples,
            entities,
            relations,
        }
    }

    /// A seeded uniform sample of `n` triples; dictionaries are kept whole.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.triples.len() {
            return Err(Error::Config(format!(
                "cannot sample {n} triples from a graph of {}",
                self.triples.len()
            )));
        }
        let mut picked = rand::seq::index::sample(&mut rng::substream(seed, "subsample"), self.triples.len(), n).into_vec();
        picked.sort_unstable();
        Ok(Self {
            triples: picked.into_iter().map(|i| self.triples[i]).collect(),
            entities: self.entities.clone(),
            relations: self.relations.clone(),
        })
    }

    pub fn write_triples(&self, path: &Path) -> Result<()> {
        write_named_triples(path, &self.triples, &self.entities, &self.relations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadStats {
    pub lines: usize,
    pub duplicates: usize,
}

/// Loads a tab-separated `head relation tail` file.
///
/// Without dictionaries, ids are assigned in order of first appearance.
/// With dictionaries, every name must already be present.
pub fn load_triples(
    path: &Path,
    entity_dict: Option<&Path>,
    relation_dict: Option<&Path>,
) -> Result<(KnowledgeGraph, LoadStats)> {
    let fixed_entities = entity_dict.map(Dictionary::load).transpose()?;
    let fixed_relations = relation_dict.map(Dictionary::load).transpose()?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut kg = KnowledgeGraph {
        triples: Vec::new(),
        entities: fixed_entities.clone().unwrap_or_default(),
        relations: fixed_relations.clone().unwrap_or_default(),
    };
    let mut seen = HashSet::new();
    let mut stats = LoadStats::default();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let lookup = |dict: &mut Dictionary, fixed: bool, name: &str, kind| {
            if fixed {
                dict.id(name).ok_or_else(|| Error::UnknownName {
                    path: path.to_owned(),
                    line: idx + 1,
                    kind,
                    name: name.to_owned(),
                })
            } else {
                Ok(dict.get_or_insert(name))
            }
        };
        let head = lookup(&mut kg.entities, fixed_entities.is_some(), fields[0], "entity")?;
        let relation = lookup(&mut kg.relations, fixed_relations.is_some(), fields[1], "relation")?;
        let tail = lookup(&mut kg.entities, fixed_entities.is_some(), fields[2], "entity")?;
        let triple = Triple::new(head, relation, tail);
        if seen.insert(triple) {
            kg.triples.push(triple);
        } else {
            stats.duplicates += 1;
        }
    }
    if stats.duplicates > 0 {
        log::warn!("{}: collapsed {} duplicate triples", path.display(), stats.duplicates);
    }
    Ok((kg, stats))
}

pub(crate) fn write_named_triples(
    path: &Path,
    triples: &[Triple],
    entities: &Dictionary,
    relations: &Dictionary,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for t in triples {
        fn name<'d>(d: &'d Dictionary, id: u32, kind: &'static str) -> Result<&'d str> {
            d.name(id).ok_or(Error::IndexOutOfRange {
                kind,
                index: id as usize,
                len: d.len(),
            })
        }
        writeln!(
            out,
            "{}\t{}\t{}",
            name(entities, t.head, "entity")?,
            name(relations, t.relation, "relation")?,
            name(entities, t.tail, "entity")?
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
