use asg_core::asg::train_asg_detailed;
use asg_core::kmeans::{exact_kmeans_small, kmeans, squared_distance};
use asg_core::{
    generate_synthetic, quantization_error, train_asg, AsgConfig, AsgModel, CodebookMode,
    EmbeddingMatrix, HiddenState, KmeansParams, PointSet, SyntheticSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(v: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..v * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    EmbeddingMatrix::new(v, d, data).unwrap()
}

fn mode_strategy() -> impl Strategy<Value = CodebookMode> {
    prop_oneof![Just(CodebookMode::Separate), Just(CodebookMode::Shared)]
}

fn full_dot(h: &[f32], row: &[f32]) -> f64 {
    h.iter().zip(row).map(|(&a, &b)| a as f64 * b as f64).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embeddings_round_trip_bytewise(
        rows in 1usize..12,
        cols in 1usize..9,
        seed in any::<u64>(),
    ) {
        let m = random_matrix(rows, cols, seed);
        let bytes = m.to_bytes();
        let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn model_invariants(
        v in 2usize..40,
        seg_dim in 1usize..4,
        m in 1usize..5,
        k in 1usize..6,
        mode in mode_strategy(),
        seed in any::<u64>(),
    ) {
        let d = seg_dim * m;
        prop_assume!(k <= v);
        let e = random_matrix(v, d, seed);
        let cfg = AsgConfig::new(v, d, k, m, mode).with_seed(seed);
        let trained = train_asg_detailed(&e, &cfg).unwrap();
        let model = &trained.model;

        // ConceptID layout.
        for t in 0..v {
            for (i, &id) in model.concept_ids(t).unwrap().iter().enumerate() {
                match mode {
                    CodebookMode::Separate => prop_assert_eq!(id as usize / k, i),
                    CodebookMode::Shared => prop_assert!((id as usize) < k),
                }
            }
        }

        // Segmented logit vs. full dot product with the reconstruction.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let h: Vec<f32> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let hidden = HiddenState::new(h.clone()).unwrap();
        let all = model.logits_all(&hidden).unwrap();
        for t in 0..v {
            let full = full_dot(&h, &model.reconstruct(t).unwrap());
            let seg = model.logit(&hidden, t).unwrap();
            prop_assert!((seg - full).abs() / full.abs().max(1.0) < 1e-5);
            prop_assert_eq!(all[t], seg);
        }

        // Squared reconstruction error equals the summed clustering objectives.
        let sse: f64 = e.iter_rows().zip(model.reconstruct_all().iter_rows())
            .map(|(a, b)| squared_distance(a, b)).sum();
        let obj: f64 = trained.runs.iter().map(|r| r.objective).sum();
        prop_assert!((sse - obj).abs() <= 1e-6 * sse.max(f64::MIN_POSITIVE));

        // Parameter law.
        let r = model.param_report();
        let expect = match mode {
            CodebookMode::Separate => k * d,
            CodebookMode::Shared => k * seg_dim,
        };
        prop_assert_eq!(r.asg_params, expect as u64);

        // File round trip.
        let bytes = model.to_bytes();
        prop_assert_eq!(AsgModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);

        // Determinism.
        prop_assert_eq!(&train_asg(&e, &cfg).unwrap(), model);
    }

    #[test]
    fn lloyd_never_beats_exact_optimum(
        data in prop::collection::vec(-4.0f32..4.0, 2..24),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let d = 2;
        let n = (data.len() / d).min(12);
        prop_assume!(n >= k);
        let p = PointSet::new(&data[..n * d], d).unwrap();
        let run = kmeans(&p, &KmeansParams::new(k, seed)).unwrap();
        let (_, exact) = exact_kmeans_small(&p, k).unwrap();
        prop_assert!(run.assignments.objective >= exact.objective * (1.0 - 1e-9));
    }
}

#[test]
fn reconstruct_all_mse_equals_objective_over_entries() {
    let e = random_matrix(100, 16, 31);
    let cfg = AsgConfig::new(100, 16, 6, 4, CodebookMode::Separate).with_seed(2);
    let trained = train_asg_detailed(&e, &cfg).unwrap();
    let stats = quantization_error(&e, &trained.model.reconstruct_all(), Some(4)).unwrap();
    let obj: f64 = trained.runs.iter().map(|r| r.objective).sum();
    assert!((stats.total_mse - obj / 1600.0).abs() <= 1e-6 * stats.total_mse);
    // Per-segment breakdown matches each segment's own objective.
    for (i, run) in trained.runs.iter().enumerate() {
        let seg = stats.per_segment_mse[i] * 1600.0;
        assert!((seg - run.objective).abs() <= 1e-6 * run.objective);
    }
}

#[test]
fn more_concept_vectors_never_hurt_on_average() {
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: 40,
        vocab_size: 400,
        dim: 16,
        spread: 0.3,
        seed: 99,
    })
    .unwrap();
    let e = &data.embeddings;
    let mean_mse = |k: usize| -> f64 {
        (0..10u64)
            .map(|seed| {
                let cfg = AsgConfig::new(400, 16, k, 4, CodebookMode::Separate).with_seed(seed);
                let model = train_asg(e, &cfg).unwrap();
                quantization_error(e, &model.reconstruct_all(), None)
                    .unwrap()
                    .total_mse
            })
            .sum::<f64>()
            / 10.0
    };
    for q in [8, 16, 32] {
        let (small, large) = (mean_mse(q), mean_mse(2 * q));
        assert!(large <= small, "k={q}: {small}, k={}: {large}", 2 * q);
    }
}

#[test]
fn blob_tokens_reconstruct_to_their_center() {
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: 8,
        vocab_size: 64,
        dim: 8,
        spread: 0.0,
        seed: 77,
    })
    .unwrap();
    let model = train_asg(
        &data.embeddings,
        &AsgConfig::new(64, 8, 8, 2, CodebookMode::Separate).with_seed(5),
    )
    .unwrap();
    for t in 0..64 {
        let c = data.labels[t];
        assert_eq!(
            model.reconstruct(t).unwrap(),
            &data.centers[c * 8..(c + 1) * 8]
        );
    }
}
