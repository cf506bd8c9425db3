//! Link-prediction metrics and communication accounting.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, EntityId, RelationId, Triple};
use crate::error::{Error, Result};
use crate::federation::RoundLog;
use crate::model::{score_tails, EmbeddingTable, Norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSet {
    /// The client's own entities.
    #[default]
    Local,
    /// Every entity of the global dictionary.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub filtered: bool,
    pub candidates: CandidateSet,
    pub norm: Norm,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            filtered: true,
            candidates: CandidateSet::Local,
            norm: Norm::L2,
        }
    }
}

/// Known true tails per `(head, relation)`.
#[derive(Debug, Clone, Default)]
pub struct TailFilter {
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl TailFilter {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut tails: HashMap<_, Vec<_>> = HashMap::new();
        for t in triples {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
        }
        for v in tails.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Self { tails }
    }

    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.tails
            .get(&(head, relation))
            .is_some_and(|v| v.binary_search(&tail).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankResult {
    pub query: Triple,
    pub rank: usize,
    pub filtered: bool,
}

/// Ranks `truth` among `candidates` as the tail of `(head, relation, ?)`.
///
/// `rank = 1 + #strictly better + floor(#equal others / 2)`. With a filter,
/// candidates other than `truth` that form known true triples are skipped.
pub fn rank_tail(
    table: &EmbeddingTable,
    head: EntityId,
    relation: RelationId,
    truth: EntityId,
    candidates: &[EntityId],
    filter: Option<&TailFilter>,
    norm: Norm,
) -> Result<RankResult> {
    let query = Triple::new(head, relation, truth);
    table.check_triple(&query)?;
    let mut scores = Vec::with_capacity(candidates.len());
    rank_with_buffer(table, query, candidates, filter, norm, &mut scores)
}

fn rank_with_buffer(
    table: &EmbeddingTable,
    query: Triple,
    candidates: &[EntityId],
    filter: Option<&TailFilter>,
    norm: Norm,
    scores: &mut Vec<f64>,
) -> Result<RankResult> {
    let truth_pos = candidates
        .iter()
        .position(|&c| c == query.tail)
        .ok_or_else(|| Error::validation("truth", format!("tail {} is not a candidate", query.tail)))?;
    score_tails(table, query.head, query.relation, candidates, norm, scores);
    let truth_score = scores[truth_pos];
    let (mut better, mut equal) = (0usize, 0usize);
    for (i, (&c, &s)) in candidates.iter().zip(scores.iter()).enumerate() {
        if i == truth_pos {
            continue;
        }
        if let Some(f) = filter {
            if f.contains(query.head, query.relation, c) {
                continue;
            }
        }
        if s > truth_score {
            better += 1;
        } else if s == truth_score {
            equal += 1;
        }
    }
    Ok(RankResult {
        query,
        rank: 1 + better + equal / 2,
        filtered: filter.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client_id: usize,
    pub queries: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl ClientMetrics {
    pub fn from_ranks(client_id: usize, ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::UndefinedMetric(format!("client {client_id} has no queries")));
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(Self {
            client_id,
            queries: ranks.len(),
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub per_client: Vec<ClientMetrics>,
}

impl MetricsReport {
    /// Unweighted mean over clients.
    pub fn from_clients(per_client: Vec<ClientMetrics>) -> Result<Self> {
        if per_client.is_empty() {
            return Err(Error::UndefinedMetric("no clients".into()));
        }
        let n = per_client.len() as f64;
        let mean = |f: fn(&ClientMetrics) -> f64| per_client.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mrr: mean(|c| c.mrr),
            hits1: mean(|c| c.hits1),
            hits3: mean(|c| c.hits3),
            hits10: mean(|c| c.hits10),
            per_client,
        })
    }
}

/// Tail-prediction ranks of every query in one client's split.
pub fn client_ranks(
    client: &ClientDataset,
    table: &EmbeddingTable,
    split: Split,
    opts: &EvalOptions,
) -> Result<Vec<usize>> {
    let queries = match split {
        Split::Valid => &client.valid,
        Split::Test => &client.test,
    };
    let candidates: Vec<EntityId> = match opts.candidates {
        CandidateSet::Local => client.local_entities.iter().copied().collect(),
        CandidateSet::Global => (0..table.num_entities() as EntityId).collect(),
    };
    let filter = opts.filtered.then(|| TailFilter::new(client.all_triples()));
    let mut scores = Vec::with_capacity(candidates.len());
    queries
        .iter()
        .map(|q| {
            table.check_triple(q)?;
            rank_with_buffer(table, *q, &candidates, filter.as_ref(), opts.norm, &mut scores).map(|r| r.rank)
        })
        .collect()
}

pub fn evaluate(
    clients: &[ClientDataset],
    tables: &[EmbeddingTable],
    split: Split,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if clients.len() != tables.len() {
        return Err(Error::Shape(format!(
            "{} clients but {} tables",
            clients.len(),
            tables.len()
        )));
    }
    let per_client = clients
        .par_iter()
        .zip(tables.par_iter())
        .map(|(c, t)| ClientMetrics::from_ranks(c.client_id, &client_ranks(c, t, split, opts)?))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_clients(per_client)
}

/// First round whose validation MRR reaches `target`.
pub fn rounds_to_target(series: &[(usize, f64)], target: f64) -> Option<usize> {
    series.iter().find(|(_, mrr)| *mrr >= target).map(|(round, _)| *round)
}

/// Validation MRR series `(round, mrr)` recorded in the logs.
pub fn mrr_series(logs: &[RoundLog]) -> Vec<(usize, f64)> {
    logs.iter().filter_map(|l| l.valid_mrr.map(|m| (l.round, m))).collect()
}

/// Uploaded embedding elements summed over the first `rounds` rounds.
pub fn communication_cost(logs: &[RoundLog], rounds: usize) -> Result<u64> {
    if logs.len() < rounds {
        return Err(Error::validation(
            "rounds",
            format!("{rounds} rounds requested but only {} logged", logs.len()),
        ));
    }
    Ok(logs[..rounds].iter().map(RoundLog::payload_elements).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEntry {
    pub label: String,
    pub rounds_to_target: Option<usize>,
    /// Mean uploaded elements per round over the whole run.
    pub payload_per_round: f64,
    pub cost: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub target_mrr: f64,
    pub entries: Vec<CommEntry>,
}

impl CommReport {
    pub fn build<'a>(target_mrr: f64, runs: impl IntoIterator<Item = (&'a str, &'a [RoundLog])>) -> Result<Self> {
        let entries = runs
            .into_iter()
            .map(|(label, logs)| {
                let rounds = rounds_to_target(&mrr_series(logs), target_mrr);
                let cost = rounds.map(|r| communication_cost(logs, r)).transpose()?;
                let payload_per_round = if logs.is_empty() {
                    0.0
                } else {
                    logs.iter().map(RoundLog::payload_elements).sum::<u64>() as f64 / logs.len() as f64
                };
                Ok(CommEntry {
                    label: label.to_owned(),
                    rounds_to_target: rounds,
                    payload_per_round,
                    cost,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { target_mrr, entries })
    }

    pub fn entry(&self, label: &str) -> Option<&CommEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// `1 - cost(reduced) / cost(baseline)` when both reached the target.
    pub fn reduction(&self, reduced: &str, baseline: &str) -> Option<f64> {
        let r = self.entry(reduced)?.cost?;
        let b = self.entry(baseline)?.cost?;
        (b > 0).then(|| 1.0 - r as f64 / b as f64)
    }
}
