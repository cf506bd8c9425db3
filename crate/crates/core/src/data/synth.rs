//! Seeded synthetic knowledge graphs with latent translational structure.
//!
//! Every entity has a hidden point in a small Euclidean space and every
//! relation a hidden offset. A triple's tail is drawn near `head + offset`,
//! weighted by a Zipf popularity, and a small share of tails is uniform
//! noise. Relations connect distinct entity types when there are several.

use std::collections::{HashMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Triple};
use crate::error::{Error, Result};
use crate::rng;

/// Tails kept per `(head, relation)` before sampling.
const CANDIDATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    /// Zipf exponent of relation frequencies.
    pub relation_skew: f64,
    /// Zipf exponent of head popularity.
    pub head_skew: f64,
    /// Zipf exponent of tail popularity.
    pub tail_skew: f64,
    /// Entity types; with ≥2 types relations connect distinct types.
    pub num_types: usize,
    pub latent_dim: usize,
    /// Width of the Gaussian kernel that places tails around `head + offset`.
    pub spread: f64,
    /// Probability of a uniformly random tail of the right type.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::ddb_like()
    }
}

impl SynthConfig {
    /// Sparse biomedical-style graph: few skewed relations, two entity types.
    pub fn ddb_like() -> Self {
        Self {
            num_entities: 1600,
            num_relations: 14,
            num_triples: 30_000,
            relation_skew: 1.0,
            head_skew: 0.5,
            tail_skew: 0.5,
            num_types: 2,
            latent_dim: 4,
            spread: 0.3,
            noise: 0.05,
        }
    }

    /// Dense encyclopedic-style graph: every entity has many triples, so
    /// random client splits overlap heavily in entities.
    pub fn fb_like() -> Self {
        Self {
            num_entities: 1200,
            num_relations: 40,
            num_triples: 24_000,
            relation_skew: 0.5,
            head_skew: 0.2,
            tail_skew: 0.5,
            num_types: 1,
            latent_dim: 4,
            spread: 0.3,
            noise: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_entities < 2 || self.num_relations == 0 {
            return Err(Error::Config("synthetic graph needs ≥2 entities and ≥1 relation".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise must be in [0, 1]".into()));
        }
        for (name, s) in [
            ("relation_skew", self.relation_skew),
            ("head_skew", self.head_skew),
            ("tail_skew", self.tail_skew),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::Config("spread must be positive".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if self.num_entities < 2 * self.num_types.max(1) {
            return Err(Error::Config("every entity type needs at least two entities".into()));
        }
        Ok(())
    }
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|i| 1.0 / ((i + 1) as f64).powf(s))).expect("positive weights")
}

fn gaussian(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample(StandardNormal)).collect()
}

struct Relation {
    head_type: usize,
    tail_type: usize,
    offset: Vec<f64>,
}

/// The most likely tails of `(h, r)` with their sampling distribution.
fn tail_candidates(
    h: u32,
    rel: &Relation,
    members: &[u32],
    points: &[Vec<f64>],
    cfg: &SynthConfig,
) -> (Vec<u32>, WeightedIndex<f64>) {
    let target: Vec<f64> = points[h as usize].iter().zip(&rel.offset).map(|(x, d)| x + d).collect();
    let scale = 2.0 * cfg.spread * cfg.spread;
    let mut logits: Vec<(f64, u32)> = members
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != h)
        .map(|(rank, &t)| {
            let d2: f64 = points[t as usize].iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / scale - cfg.tail_skew * ((rank + 1) as f64).ln(), t)
        })
        .collect();
    let keep = CANDIDATES.min(logits.len());
    logits.select_nth_unstable_by(keep - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    logits.truncate(keep);
    logits.sort_unstable_by_key(|(_, t)| *t);
    let top = logits.iter().map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let weights = logits.iter().map(|(l, _)| (l - top).exp());
    let index = WeightedIndex::new(weights).expect("the best candidate has weight 1");
    (logits.into_iter().map(|(_, t)| t).collect(), index)
}

/// Generates exactly `cfg.num_triples` distinct triples without self-loops.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<KnowledgeGraph> {
    cfg.validate()?;
    let mut rng = rng::substream(seed, "synth");
    let ne = cfg.num_entities;
    let num_types = cfg.num_types.max(1);
    // Members of each type, in popularity order.
    let mut order: Vec<u32> = (0..ne as u32).collect();
    order.shuffle(&mut rng);
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); num_types];
    for (i, e) in order.into_iter().enumerate() {
        members[i % num_types].push(e);
    }
    let points: Vec<Vec<f64>> = (0..ne).map(|_| gaussian(&mut rng, cfg.latent_dim)).collect();
    let heads: Vec<WeightedIndex<f64>> = members.iter().map(|m| zipf(m.len(), cfg.head_skew)).collect();
    let relations: Vec<Relation> = (0..cfg.num_relations)
        .map(|_| {
            let head_type = rng.gen_range(0..num_types);
            let tail_type = if num_types == 1 {
                head_type
            } else {
                (head_type + rng.gen_range(1..num_types)) % num_types
            };
            Relation {
                head_type,
                tail_type,
                offset: gaussian(&mut rng, cfg.latent_dim),
            }
        })
        .collect();
    let relation_freq = zipf(cfg.num_relations, cfg.relation_skew);

    let mut cache: HashMap<(u32, usize), (Vec<u32>, WeightedIndex<f64>)> = HashMap::new();
    let mut seen = HashSet::with_capacity(cfg.num_triples);
    let mut triples = Vec::with_capacity(cfg.num_triples);
    let mut attempts = 0usize;
    while triples.len() < cfg.num_triples {
        attempts += 1;
        if attempts > cfg.num_triples * 50 {
            return Err(Error::Config(format!(
                "only {} distinct triples after {attempts} draws",
                triples.len()
            )));
        }
        let r = relation_freq.sample(&mut rng);
        let rel = &relations[r];
        let h = members[rel.head_type][heads[rel.head_type].sample(&mut rng)];
        let tails = &members[rel.tail_type];
        let t = if rng.gen_bool(cfg.noise) {
            tails[rng.gen_range(0..tails.len())]
        } else {
            let (ids, index) = cache
                .entry((h, r))
                .or_insert_with(|| tail_candidates(h, rel, tails, &points, cfg));
            ids[index.sample(&mut rng)]
        };
        if t == h {
            continue;
        }
        let triple = Triple::new(h, r as u32, t);
        if seen.insert(triple) {
            triples.push(triple);
        }
    }
    Ok(KnowledgeGraph::from_ids(triples, ne, cfg.num_relations))
}
