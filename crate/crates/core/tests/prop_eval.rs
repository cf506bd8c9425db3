use fedkg::data::{ClientDataset, Triple};
use fedkg::eval::{client_ranks, rank_tail, rounds_to_target, CandidateSet, ClientMetrics, EvalOptions, Split, TailFilter};
use fedkg::model::{init_embeddings, ModelKind, Norm};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn client(seed: u64) -> ClientDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples: Vec<Triple> = (0..60)
        .map(|_| Triple::new(rng.gen_range(0..12), rng.gen_range(0..3), rng.gen_range(0..12)))
        .collect();
    triples.sort();
    triples.dedup();
    triples.shuffle(&mut rng);
    let test = triples.split_off(triples.len() - 10);
    ClientDataset::new(0, triples, Vec::new(), test)
}

fn kind() -> impl Strategy<Value = ModelKind> {
    (0usize..4).prop_map(|i| ModelKind::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mrr_lies_in_unit_interval_and_filtering_only_helps(seed in any::<u64>(), kind in kind(), global in any::<bool>()) {
        let c = client(seed);
        let table = init_embeddings(kind, 12, 3, 4, seed).unwrap();
        let candidates = if global { CandidateSet::Global } else { CandidateSet::Local };
        let raw_opts = EvalOptions { filtered: false, candidates, norm: Norm::L2 };
        let filt_opts = EvalOptions { filtered: true, ..raw_opts };
        let raw = client_ranks(&c, &table, Split::Test, &raw_opts).unwrap();
        let filt = client_ranks(&c, &table, Split::Test, &filt_opts).unwrap();
        for (r, f) in raw.iter().zip(&filt) {
            prop_assert!(f <= r);
        }
        let raw_mrr = ClientMetrics::from_ranks(0, &raw).unwrap().mrr;
        let filt_mrr = ClientMetrics::from_ranks(0, &filt).unwrap().mrr;
        prop_assert!(raw_mrr > 0.0 && raw_mrr <= 1.0);
        prop_assert!(filt_mrr > 0.0 && filt_mrr <= 1.0);
        prop_assert!(filt_mrr >= raw_mrr);
    }

    #[test]
    fn rank_ignores_candidate_order(seed in any::<u64>(), kind in kind(), filtered in any::<bool>()) {
        let c = client(seed);
        let table = init_embeddings(kind, 12, 3, 4, seed ^ 7).unwrap();
        let filter = TailFilter::new(c.all_triples());
        let mut candidates: Vec<u32> = (0..12).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for q in &c.test {
            let a = rank_tail(&table, q.head, q.relation, q.tail, &candidates, filtered.then_some(&filter), Norm::L1).unwrap();
            candidates.shuffle(&mut rng);
            let b = rank_tail(&table, q.head, q.relation, q.tail, &candidates, filtered.then_some(&filter), Norm::L1).unwrap();
            prop_assert_eq!(a.rank, b.rank);
        }
    }

    #[test]
    fn rounds_to_target_is_monotone(series in proptest::collection::vec(0.0f64..1.0, 0..30), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let series: Vec<(usize, f64)> = series.into_iter().enumerate().map(|(i, m)| (i + 1, m)).collect();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let as_rounds = |x: Option<usize>| x.unwrap_or(usize::MAX);
        prop_assert!(as_rounds(rounds_to_target(&series, lo)) <= as_rounds(rounds_to_target(&series, hi)));
    }
}
