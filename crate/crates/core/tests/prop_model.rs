use fedkg::data::Triple;
use fedkg::model::{
    adversarial_weights, distance, init_embeddings, loss_self_adversarial, train_epochs, AdamState, BatchContext,
    Matrix, ModelKind, NegativeSampler, Norm, TrainConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, len)
}

fn norm() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L1), Just(Norm::L2)]
}

fn padded(v: &[f64], extra: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(v.len() + extra, 0.0);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn zero_padding_leaves_distance_unchanged(
        (h, r, t) in (1usize..12).prop_flat_map(|d| (vector(d), vector(d), vector(d))),
        extra in 1usize..6,
        norm in norm(),
    ) {
        for kind in [ModelKind::TransE, ModelKind::DistMult] {
            let base = distance(kind, norm, &h, &r, &t);
            let wide = distance(kind, norm, &padded(&h, extra), &padded(&r, extra), &padded(&t, extra));
            prop_assert_eq!(base, wide);
        }
    }

    #[test]
    fn rotation_distance_is_symmetric_under_inverse_phase(
        (h, theta, t) in (1usize..10).prop_flat_map(|d| (vector(2 * d), vector(d), vector(2 * d))),
        norm in norm(),
    ) {
        let forward = distance(ModelKind::RotatE, norm, &h, &theta, &t);
        let inverse: Vec<f64> = theta.iter().map(|x| -x).collect();
        let backward = distance(ModelKind::RotatE, norm, &t, &inverse, &h);
        prop_assert!((forward - backward).abs() <= 1e-10, "{} vs {}", forward, backward);
    }

    #[test]
    fn adversarial_weights_sum_to_one(
        seed in any::<u64>(),
        temperature in 0.0f64..5.0,
        picks in proptest::collection::vec((0u32..8, 0u32..3, 0u32..8), 1..40),
        kind_idx in 0usize..4,
    ) {
        let kind = ModelKind::ALL[kind_idx];
        let table = init_embeddings(kind, 8, 3, 6, seed).unwrap();
        let negatives: Vec<Triple> = picks.into_iter().map(|(h, r, t)| Triple::new(h, r, t)).collect();
        let cfg = TrainConfig { temperature, ..TrainConfig::default() };
        let w = adversarial_weights(&table, &negatives, &cfg).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|p| *p >= 0.0));
    }
}

fn toy() -> Vec<Triple> {
    vec![
        Triple::new(0, 0, 1),
        Triple::new(1, 0, 2),
        Triple::new(2, 1, 3),
        Triple::new(3, 1, 4),
        Triple::new(4, 0, 0),
    ]
}

fn full_loss(table: &fedkg::model::EmbeddingTable, cfg: &TrainConfig) -> f64 {
    let train = toy();
    let mut total = 0.0;
    for pos in &train {
        let negatives: Vec<Triple> = (0..5)
            .map(|e| Triple::new(pos.head, pos.relation, e))
            .chain((0..5).map(|e| Triple::new(e, pos.relation, pos.tail)))
            .filter(|t| !train.contains(t))
            .collect();
        total += loss_self_adversarial(table, pos, &negatives, cfg).unwrap();
    }
    total / train.len() as f64
}

#[test]
fn hundred_adam_steps_reduce_the_loss() {
    let train = toy();
    for kind in ModelKind::ALL {
        let cfg = TrainConfig {
            dim: 8,
            num_negatives: 8,
            batch_size: train.len(),
            ..TrainConfig::default()
        };
        let mut table = init_embeddings(kind, 5, 2, cfg.dim, 3).unwrap();
        let before = full_loss(&table, &cfg);
        let sampler = NegativeSampler::new(0..5, train.iter().copied(), cfg.corruption).unwrap();
        let mut adam = AdamState::new(&table);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        train_epochs(&mut table, &mut adam, &train, &sampler, &cfg, 100, &mut rng, BatchContext::default()).unwrap();
        let after = full_loss(&table, &cfg);
        assert!(after < before, "{kind}: loss {before} -> {after}");
    }
}

#[test]
fn mismatched_widths_are_rejected() {
    let e = Matrix::zeros(3, 4);
    let r = Matrix::zeros(2, 4);
    assert!(fedkg::model::EmbeddingTable::new(ModelKind::RotatE, e.clone(), r.clone()).is_err());
    assert!(fedkg::model::EmbeddingTable::new(ModelKind::TransE, e, r).is_ok());
}
