//! Knowledge-graph reconstruction attack and its leakage metrics.
//!
//! A malicious server holds element-embedding pairs (EEP) leaked by one
//! traitor client and tries to label another client's anonymous entity
//! embeddings (LEE) and relation embeddings (LRE) by cosine similarity.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, EntityId, RelationId, Triple};
use crate::error::{Error, Result};
use crate::federation::Mode;
use crate::model::{EmbeddingTable, Matrix, ModelKind};
use crate::rng;

/// Labeled vectors leaked by the traitor, sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ElementPairs {
    pub entities: Vec<(EntityId, Vec<f64>)>,
    pub relations: Vec<(RelationId, Vec<f64>)>,
}

/// One target triple with positional indices into the adversary's views.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonTriple {
    pub head: usize,
    /// Row of `lre`; only known when relation embeddings are shared.
    pub relation: Option<usize>,
    pub tail: usize,
}

#[derive(Debug, Clone)]
pub struct AdversaryKnowledge {
    pub model_kind: ModelKind,
    pub eep: ElementPairs,
    /// Target entity embeddings; row order carries no id information.
    pub lee: Matrix,
    /// Target relation embeddings (FedR only).
    pub lre: Option<Matrix>,
    pub skeleton: Vec<SkeletonTriple>,
}

/// Held-out truth used only to score the attack.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Entity id at each `lee` row.
    pub entities: Vec<EntityId>,
    /// The triple behind each skeleton entry.
    pub triples: Vec<Triple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub target: usize,
    pub err: f64,
    pub trr: f64,
    #[serde(skip)]
    pub entity_correct: Vec<bool>,
    #[serde(skip)]
    pub triple_correct: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReconstructionReport {
    fn hidden(target: usize, note: &str) -> Self {
        Self {
            target,
            err: 0.0,
            trr: 0.0,
            entity_correct: Vec::new(),
            triple_correct: Vec::new(),
            note: Some(note.to_string()),
        }
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

/// Cosine similarity; a zero vector on either side scores -1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    match (unit(a), unit(b)) {
        (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| x * y).sum(),
        _ => -1.0,
    }
}

/// For every query, the id of the most cosine-similar labeled vector.
/// Ties go to the lowest id.
pub fn match_by_cosine(queries: &[Vec<f64>], labeled: &[(u32, Vec<f64>)]) -> Result<Vec<u32>> {
    if labeled.is_empty() {
        return Err(Error::InsufficientKnowledge("no labeled vectors to match against".into()));
    }
    let mut sorted: Vec<(u32, Option<Vec<f64>>)> = labeled.iter().map(|(id, v)| (*id, unit(v))).collect();
    sorted.sort_by_key(|(id, _)| *id);
    Ok(queries
        .par_iter()
        .map(|q| {
            let q = unit(q);
            let mut best = (sorted[0].0, f64::NEG_INFINITY);
            for (id, v) in &sorted {
                let sim = match (&q, v) {
                    (Some(q), Some(v)) => q.iter().zip(v).map(|(x, y)| x * y).sum(),
                    _ => -1.0,
                };
                if sim > best.1 {
                    best = (*id, sim);
                }
            }
            best.0
        })
        .collect())
}

/// Predicted entity id for every row of `lee`.
pub fn reconstruct_entities(lee: &Matrix, eep: &ElementPairs) -> Result<Vec<EntityId>> {
    if eep.entities.is_empty() {
        return Err(Error::InsufficientKnowledge("EEP holds no entity pairs".into()));
    }
    let rows: Vec<Vec<f64>> = (0..lee.rows()).map(|i| lee.row(i).to_vec()).collect();
    match_by_cosine(&rows, &eep.entities)
}

/// Fraction of positions whose prediction equals the truth.
pub fn entity_reconstruction_rate(predicted: &[EntityId], truth: &[EntityId]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} entities", predicted.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("target has no entities".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Relation vector maximizing the score of `(h, ·, t)`, in the model's
/// relation layout. RotatE returns phases.
pub fn infer_relation_embedding(h: &[f64], t: &[f64], kind: ModelKind) -> Vec<f64> {
    match kind {
        ModelKind::TransE => t.iter().zip(h).map(|(t, h)| t - h).collect(),
        ModelKind::DistMult => h.iter().zip(t).map(|(h, t)| h * t).collect(),
        ModelKind::RotatE => h
            .chunks_exact(2)
            .zip(t.chunks_exact(2))
            .map(|(h, t)| {
                if h[0] == 0.0 && h[1] == 0.0 {
                    return 0.0;
                }
                // arg(t / h) = arg(t * conj(h))
                let re = t[0] * h[0] + t[1] * h[1];
                let im = t[1] * h[0] - t[0] * h[1];
                im.atan2(re)
            })
            .collect(),
        ModelKind::ComplEx => h
            .chunks_exact(2)
            .zip(t.chunks_exact(2))
            .flat_map(|(h, t)| {
                // Re(h r conj(t)) is maximal along conj(h) t.
                [h[0] * t[0] + h[1] * t[1], h[0] * t[1] - h[1] * t[0]]
            })
            .collect(),
    }
}

/// Representation used for cosine matching of relation vectors.
/// RotatE phases are compared as points on the unit circle.
fn relation_features(v: &[f64], kind: ModelKind) -> Vec<f64> {
    match kind {
        ModelKind::RotatE => v.iter().flat_map(|p| [p.cos(), p.sin()]).collect(),
        _ => v.to_vec(),
    }
}

/// Predicted relation id for every skeleton triple.
///
/// With `lre` present the relation rows are matched directly; otherwise a
/// relation vector is inferred from each head/tail pair.
pub fn reconstruct_relations(knowledge: &AdversaryKnowledge, skeleton: &[SkeletonTriple]) -> Result<Vec<RelationId>> {
    let kind = knowledge.model_kind;
    if knowledge.eep.relations.is_empty() {
        return Err(Error::InsufficientKnowledge("EEP holds no relation pairs".into()));
    }
    let labeled: Vec<(u32, Vec<f64>)> = knowledge
        .eep
        .relations
        .iter()
        .map(|(id, v)| (*id, relation_features(v, kind)))
        .collect();
    match &knowledge.lre {
        Some(lre) => {
            let rows: Vec<Vec<f64>> = (0..lre.rows()).map(|i| relation_features(lre.row(i), kind)).collect();
            let by_row = match_by_cosine(&rows, &labeled)?;
            skeleton
                .iter()
                .map(|s| {
                    let row = s
                        .relation
                        .ok_or_else(|| Error::InsufficientKnowledge("skeleton lacks relation positions".into()))?;
                    by_row.get(row).copied().ok_or(Error::IndexOutOfRange {
                        kind: "relation position",
                        index: row,
                        len: by_row.len(),
                    })
                })
                .collect()
        }
        None => {
            let lee = &knowledge.lee;
            let inferred = skeleton
                .iter()
                .map(|s| {
                    for p in [s.head, s.tail] {
                        if p >= lee.rows() {
                            return Err(Error::IndexOutOfRange {
                                kind: "entity position",
                                index: p,
                                len: lee.rows(),
                            });
                        }
                    }
                    let r = infer_relation_embedding(lee.row(s.head), lee.row(s.tail), kind);
                    Ok(relation_features(&r, kind))
                })
                .collect::<Result<Vec<_>>>()?;
            match_by_cosine(&inferred, &labeled)
        }
    }
}

/// Scores predicted maps against the truth. Missing relation predictions
/// count as wrong.
pub fn reconstruct_triples(
    target: usize,
    entity_map: &[EntityId],
    relations: &[RelationId],
    skeleton: &[SkeletonTriple],
    truth: &GroundTruth,
) -> Result<ReconstructionReport> {
    if skeleton.len() != truth.triples.len() {
        return Err(Error::Shape(format!(
            "{} skeleton triples for {} ground-truth triples",
            skeleton.len(),
            truth.triples.len()
        )));
    }
    let err = entity_reconstruction_rate(entity_map, &truth.entities)?;
    let entity_correct: Vec<bool> = entity_map.iter().zip(&truth.entities).map(|(p, t)| p == t).collect();
    let triple_correct: Vec<bool> = skeleton
        .iter()
        .zip(&truth.triples)
        .enumerate()
        .map(|(i, (s, t))| {
            entity_map.get(s.head) == Some(&t.head)
                && entity_map.get(s.tail) == Some(&t.tail)
                && relations.get(i) == Some(&t.relation)
        })
        .collect();
    let trr = if triple_correct.is_empty() {
        0.0
    } else {
        triple_correct.iter().filter(|c| **c).count() as f64 / triple_correct.len() as f64
    };
    Ok(ReconstructionReport {
        target,
        err,
        trr,
        entity_correct,
        triple_correct,
        note: None,
    })
}

/// Fraction of triples whose head and tail were both correctly mapped.
pub fn endpoint_bound(report: &ReconstructionReport, skeleton: &[SkeletonTriple]) -> f64 {
    if skeleton.is_empty() {
        return 0.0;
    }
    let ok = |p: usize| report.entity_correct.get(p).copied().unwrap_or(false);
    skeleton.iter().filter(|s| ok(s.head) && ok(s.tail)).count() as f64 / skeleton.len() as f64
}

/// Keeps a prefix of one seeded permutation, so a larger ratio always
/// leaks a superset of a smaller one.
fn subsample<T: Clone>(items: &[(u32, T)], ratio: f64, seed: u64, label: &str) -> Vec<(u32, T)> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng::substream(seed, label));
    let keep = ((ratio * items.len() as f64 - 1e-9).ceil() as usize).clamp(usize::from(!items.is_empty()), items.len());
    let mut out: Vec<(u32, T)> = order[..keep].iter().map(|&i| items[i].clone()).collect();
    out.sort_by_key(|(id, _)| *id);
    out
}

/// Element-embedding pairs from the traitor's trained table, subsampled.
pub fn leak_pairs(traitor: &ClientDataset, table: &EmbeddingTable, ratio: f64, seed: u64) -> Result<ElementPairs> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::validation("attack.leakage_ratio", "must be in (0, 1]"));
    }
    let entities: Vec<(u32, Vec<f64>)> = traitor
        .local_entities
        .iter()
        .map(|&e| (e, table.entities.row(e as usize).to_vec()))
        .collect();
    let relations: Vec<(u32, Vec<f64>)> = traitor
        .local_relations
        .iter()
        .map(|&r| (r, table.relations.row(r as usize).to_vec()))
        .collect();
    Ok(ElementPairs {
        entities: subsample(&entities, ratio, seed, "attack/eep/entities"),
        relations: subsample(&relations, ratio, seed, "attack/eep/relations"),
    })
}

/// What the server observes about `target`, plus the truth to score it.
pub fn target_view(
    mode: Mode,
    target: &ClientDataset,
    table: &EmbeddingTable,
    eep: ElementPairs,
) -> (AdversaryKnowledge, GroundTruth) {
    let entity_ids: Vec<u32> = target.local_entities.iter().copied().collect();
    let relation_ids: Vec<u32> = target.local_relations.iter().copied().collect();
    let lee = Matrix::from_fn(entity_ids.len(), table.entity_width(), |i, j| {
        table.entities.row(entity_ids[i] as usize)[j]
    });
    let lre = (mode == Mode::FedR).then(|| {
        Matrix::from_fn(relation_ids.len(), table.relation_width(), |i, j| {
            table.relations.row(relation_ids[i] as usize)[j]
        })
    });
    let triples: Vec<Triple> = target.all_triples().copied().collect();
    let pos = |ids: &[u32], id: u32| ids.binary_search(&id).expect("triple element is local");
    let skeleton = triples
        .iter()
        .map(|t| SkeletonTriple {
            head: pos(&entity_ids, t.head),
            relation: lre.as_ref().map(|_| pos(&relation_ids, t.relation)),
            tail: pos(&entity_ids, t.tail),
        })
        .collect();
    (
        AdversaryKnowledge {
            model_kind: table.kind,
            eep,
            lee,
            lre,
            skeleton,
        },
        GroundTruth {
            entities: entity_ids,
            triples,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackSetting {
    pub mode: Mode,
    /// Secure aggregation hides every per-client upload from the server.
    pub secagg: bool,
    pub traitor: usize,
    pub seed: u64,
}

/// Attacks every non-traitor client with EEP leaked at `ratio`.
pub fn leakage_experiment(
    setting: AttackSetting,
    ratio: f64,
    clients: &[ClientDataset],
    tables: &[EmbeddingTable],
) -> Result<Vec<ReconstructionReport>> {
    if setting.mode == Mode::Local {
        return Err(Error::InsufficientKnowledge(
            "Local training shares nothing; the server holds no target embeddings".into(),
        ));
    }
    if clients.len() != tables.len() {
        return Err(Error::Shape(format!("{} clients but {} tables", clients.len(), tables.len())));
    }
    let traitor = clients.get(setting.traitor).ok_or(Error::IndexOutOfRange {
        kind: "traitor",
        index: setting.traitor,
        len: clients.len(),
    })?;
    let targets = (0..clients.len()).filter(|&c| c != setting.traitor);
    if setting.secagg {
        return Ok(targets
            .map(|c| ReconstructionReport::hidden(c, "secure aggregation hides per-client embeddings"))
            .collect());
    }
    let eep = leak_pairs(traitor, &tables[setting.traitor], ratio, setting.seed)?;
    targets
        .map(|c| {
            let (knowledge, truth) = target_view(setting.mode, &clients[c], &tables[c], eep.clone());
            let entities = reconstruct_entities(&knowledge.lee, &knowledge.eep)?;
            let relations = reconstruct_relations(&knowledge, &knowledge.skeleton)?;
            reconstruct_triples(c, &entities, &relations, &knowledge.skeleton, &truth)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn self_match_recovers_everything() {
        let eep = ElementPairs {
            entities: vec![(3, vec![1.0, 0.0]), (5, vec![0.0, 1.0]), (9, vec![1.0, 1.0])],
            relations: vec![],
        };
        let lee = m(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(reconstruct_entities(&lee, &eep).unwrap(), vec![5, 9, 3]);
    }

    #[test]
    fn orthogonal_targets_are_missed() {
        let eep = ElementPairs {
            entities: vec![(0, vec![1.0, 0.0, 0.0])],
            relations: vec![],
        };
        let lee = m(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let pred = reconstruct_entities(&lee, &eep).unwrap();
        assert_eq!(entity_reconstruction_rate(&pred, &[1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn ties_and_zero_vectors() {
        let labeled = vec![(7, vec![1.0, 0.0]), (2, vec![2.0, 0.0]), (4, vec![0.0, 0.0])];
        assert_eq!(match_by_cosine(&[vec![3.0, 0.0]], &labeled).unwrap(), vec![2]);
        assert_eq!(match_by_cosine(&[vec![0.0, 0.0]], &labeled).unwrap(), vec![2]);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), -1.0);
        let zeros = vec![(6, vec![0.0]), (1, vec![0.0])];
        assert_eq!(match_by_cosine(&[vec![1.0]], &zeros).unwrap(), vec![1]);
    }

    #[test]
    fn empty_eep_is_insufficient() {
        let lee = m(&[vec![1.0]]);
        assert!(matches!(
            reconstruct_entities(&lee, &ElementPairs::default()),
            Err(Error::InsufficientKnowledge(_))
        ));
    }

    #[test]
    fn inferred_relations() {
        assert_eq!(infer_relation_embedding(&[1.0, 0.0], &[1.0, 1.0], ModelKind::TransE), vec![0.0, 1.0]);
        assert_eq!(infer_relation_embedding(&[2.0, 0.0], &[0.0, 3.0], ModelKind::DistMult), vec![0.0, 0.0]);
        let theta = infer_relation_embedding(&[1.0, 0.0], &[0.0, 1.0], ModelKind::RotatE);
        assert!((theta[0] - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(infer_relation_embedding(&[0.0, 0.0], &[0.0, 1.0], ModelKind::RotatE), vec![0.0]);
    }

    #[test]
    fn complex_inference_maximizes_score() {
        use crate::model::{distance, Norm};
        let h = [0.3, -0.7, 1.1, 0.2];
        let t = [-0.5, 0.4, 0.9, -1.3];
        let r = infer_relation_embedding(&h, &t, ModelKind::ComplEx);
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let best = -distance(ModelKind::ComplEx, Norm::L2, &h, &r, &t) / norm;
        // Any other direction with the same norm scores no higher.
        for k in 1..200 {
            let a = k as f64 * 0.1;
            let cand: Vec<f64> = (0..4).map(|i| ((i as f64 + 1.0) * a).sin()).collect();
            let n = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = -distance(ModelKind::ComplEx, Norm::L2, &h, &cand, &t) / n;
            assert!(s <= best + 1e-12);
        }
    }

    #[test]
    fn fedr_branch_matches_lre() {
        let eep = ElementPairs {
            entities: vec![(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0])],
            relations: vec![(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0])],
        };
        let knowledge = AdversaryKnowledge {
            model_kind: ModelKind::TransE,
            eep: eep.clone(),
            lee: m(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            lre: Some(m(&[vec![0.0, 1.0], vec![1.0, 0.0]])),
            skeleton: vec![],
        };
        let skeleton = vec![
            SkeletonTriple { head: 0, relation: Some(0), tail: 1 },
            SkeletonTriple { head: 1, relation: Some(1), tail: 0 },
        ];
        let rel = reconstruct_relations(&knowledge, &skeleton).unwrap();
        assert_eq!(rel, vec![1, 0]);
        let truth = GroundTruth {
            entities: vec![0, 1],
            triples: vec![Triple::new(0, 1, 1), Triple::new(1, 0, 0)],
        };
        let ents = reconstruct_entities(&knowledge.lee, &eep).unwrap();
        let report = reconstruct_triples(1, &ents, &rel, &skeleton, &truth).unwrap();
        assert_eq!((report.err, report.trr), (1.0, 1.0));
        let empty = reconstruct_triples(1, &ents, &[], &skeleton, &truth).unwrap();
        assert_eq!(empty.trr, 0.0);
    }

    #[test]
    fn empty_relation_eep_aborts() {
        let knowledge = AdversaryKnowledge {
            model_kind: ModelKind::TransE,
            eep: ElementPairs::default(),
            lee: m(&[vec![1.0]]),
            lre: None,
            skeleton: vec![],
        };
        assert!(matches!(
            reconstruct_relations(&knowledge, &[]),
            Err(Error::InsufficientKnowledge(_))
        ));
    }

    #[test]
    fn nested_subsamples() {
        let items: Vec<(u32, ())> = (0..50).map(|i| (i, ())).collect();
        let a = subsample(&items, 0.3, 4, "x");
        let b = subsample(&items, 0.5, 4, "x");
        let c = subsample(&items, 1.0, 4, "x");
        assert_eq!((a.len(), b.len(), c.len()), (15, 25, 50));
        assert!(a.iter().all(|x| b.contains(x)));
    }

    #[test]
    fn local_mode_refused() {
        let setting = AttackSetting {
            mode: Mode::Local,
            secagg: false,
            traitor: 0,
            seed: 0,
        };
        assert!(matches!(
            leakage_experiment(setting, 1.0, &[], &[]),
            Err(Error::InsufficientKnowledge(_))
        ));
    }
}
