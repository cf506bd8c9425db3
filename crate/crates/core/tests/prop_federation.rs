use std::collections::BTreeSet;

use fedkg::data::{federated_split, ClientDataset, KnowledgeGraph, SplitRatios, Triple};
use fedkg::federation::{
    aggregate, run_training, ClientState, Element, FederationConfig, MaskVector, Mode, BYTES_PER_SCALAR,
};
use fedkg::model::{init_entity_matrix, init_relation_matrix, EmbeddingTable, Matrix, ModelKind, TrainConfig};
use fedkg::rng;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn updates(seed: u64, clients: usize, rows: usize, cols: usize, p: f64) -> (Matrix, Vec<(Matrix, MaskVector)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let previous = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
    let ups = (0..clients)
        .map(|_| {
            let mask = MaskVector { bits: (0..rows).map(|_| rng.gen_bool(p)).collect() };
            let m = Matrix::from_fn(rows, cols, |i, _| if mask.bits[i] { rng.gen_range(-1e3..1e3) } else { 0.0 });
            (m, mask)
        })
        .collect();
    (previous, ups)
}

fn small_graph(seed: u64, n: usize) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    while set.len() < n {
        set.insert(Triple::new(rng.gen_range(0..30), rng.gen_range(0..5), rng.gen_range(0..30)));
    }
    KnowledgeGraph::from_ids(set.into_iter().collect(), 30, 5)
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        dim: 4,
        num_negatives: 4,
        batch_size: 32,
        local_epochs: 1,
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_ignores_client_order(seed in any::<u64>(), clients in 1usize..7, rows in 1usize..10, cols in 1usize..5) {
        let (prev, ups) = updates(seed, clients, rows, cols, 0.5);
        let expected = aggregate(&prev, &ups).unwrap();
        let mut shuffled = ups.clone();
        shuffled.reverse();
        shuffled.rotate_left(seed as usize % clients);
        let got = aggregate(&prev, &shuffled).unwrap();
        prop_assert_eq!(got.as_slice(), expected.as_slice());
    }

    #[test]
    fn full_ownership_is_the_plain_mean(seed in any::<u64>(), clients in 1usize..7, rows in 1usize..10, cols in 1usize..5) {
        let (prev, ups) = updates(seed, clients, rows, cols, 1.0);
        let got = aggregate(&prev, &ups).unwrap();
        for i in 0..rows {
            for j in 0..cols {
                let mean = ups.iter().map(|(m, _)| m.row(i)[j]).sum::<f64>() / clients as f64;
                prop_assert!((got.row(i)[j] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            }
        }
    }

    #[test]
    fn upload_bytes_follow_local_vocabulary_sizes(seed in any::<u64>(), clients in 2usize..5) {
        let kg = small_graph(seed, 120);
        let split = federated_split(&kg, clients, SplitRatios::default(), seed).unwrap();
        let bytes = |mode| {
            let fed = FederationConfig { mode, rounds: 1, eval_every: 100, seed, ..FederationConfig::default() };
            let out = run_training(&split, 30, 5, ModelKind::TransE, &tiny_cfg(), &fed).unwrap();
            out.logs[0].upload_bytes.iter().sum::<u64>() as f64
        };
        let rel: usize = split.iter().map(|c| c.local_relations.len()).sum();
        let ent: usize = split.iter().map(|c| c.local_entities.len()).sum();
        let expected = rel as f64 / ent as f64;
        let got = bytes(Mode::FedR) / bytes(Mode::FedE);
        prop_assert!((got / expected - 1.0).abs() <= 0.01, "{} vs {}", got, expected);
        let per_client = 4 * BYTES_PER_SCALAR;
        prop_assert_eq!(bytes(Mode::FedR) as u64, rel as u64 * per_client);
    }
}

#[test]
fn sentinels_outside_the_local_vocabulary_never_reach_the_aggregate() {
    let kg = small_graph(4, 150);
    let split = federated_split(&kg, 3, SplitRatios::default(), 4).unwrap();
    let cfg = tiny_cfg();
    let global_ids: Vec<u32> = (0..30).collect();
    let prev = Matrix::zeros(30, cfg.dim);
    let upload = |c: &ClientDataset, poison: bool| {
        let mut r = ChaCha8Rng::seed_from_u64(c.client_id as u64);
        let mut entities = init_entity_matrix(ModelKind::TransE, 30, cfg.dim, &mut r).unwrap();
        if poison {
            for id in 0..30u32 {
                if !c.local_entities.contains(&id) {
                    entities.row_mut(id as usize).fill(1e300);
                }
            }
        }
        let relations = Matrix::zeros(5, cfg.dim);
        let table = EmbeddingTable::new(ModelKind::TransE, entities, relations).unwrap();
        ClientState::new(c, table, &cfg).unwrap().masked_upload(&global_ids, Element::Entity)
    };
    let clean: Vec<_> = split.iter().map(|c| upload(c, false)).collect();
    let poisoned: Vec<_> = split.iter().map(|c| upload(c, true)).collect();
    let a = aggregate(&prev, &clean).unwrap();
    let b = aggregate(&prev, &poisoned).unwrap();
    assert_eq!(a, b);
    assert!(b.as_slice().iter().all(|v| v.abs() < 10.0));
}

#[test]
fn zero_rounds_return_the_initialization() {
    let kg = small_graph(8, 150);
    let split = federated_split(&kg, 3, SplitRatios::default(), 8).unwrap();
    let cfg = tiny_cfg();
    let seed = 21;
    let relations =
        init_relation_matrix(ModelKind::TransE, 5, cfg.dim, &mut rng::substream(seed, "init/relations")).unwrap();
    for mode in [Mode::Local, Mode::FedR, Mode::FedE] {
        let fed = FederationConfig { mode, rounds: 0, seed, ..FederationConfig::default() };
        let out = run_training(&split, 30, 5, ModelKind::TransE, &cfg, &fed).unwrap();
        assert!(out.logs.is_empty());
        for (c, table) in split.iter().zip(&out.tables) {
            assert_eq!(table.relations, relations, "{mode}");
            if mode == Mode::FedE {
                let global = out.global.as_ref().unwrap();
                for (slot, id) in global.ids.iter().enumerate() {
                    if c.local_entities.contains(id) {
                        assert_eq!(table.entities.row(*id as usize), global.embeddings.row(slot));
                    }
                }
            } else {
                let label = format!("init/entities/client{}", c.client_id);
                let expected =
                    init_entity_matrix(ModelKind::TransE, 30, cfg.dim, &mut rng::substream(seed, &label)).unwrap();
                assert_eq!(table.entities, expected, "{mode}");
            }
        }
    }
}
