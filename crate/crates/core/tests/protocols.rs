mod common;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxref::fixture::{generate, FixtureConfig};
use voxref::metrics::CostModel;
use voxref::protocols::{
    default_grid, evaluate, histogram, reference_sweep, self_trials, sized_trials,
    threshold_sweep, ProtocolError,
};
use voxref::store::{EmbeddingStore, Label};

fn fixture(datasets: usize) -> EmbeddingStore {
    generate(&FixtureConfig {
        identities: 6,
        bona_fide_per_identity: 25,
        spoof_per_identity: 8,
        dim: 48,
        datasets,
        seed: 17,
        ..FixtureConfig::default()
    })
    .unwrap()
}

fn shuffled(store: &EmbeddingStore, seed: u64) -> EmbeddingStore {
    let mut records = store.records().to_vec();
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = EmbeddingStore::new(store.model_name());
    for r in records {
        out.push(r).unwrap();
    }
    out
}

#[test]
fn evaluation_ignores_record_order() {
    let store = fixture(3);
    let cost = CostModel::default();
    let a = evaluate(&store, &cost).unwrap();
    for seed in 0..5 {
        assert_eq!(evaluate(&shuffled(&store, seed), &cost).unwrap(), a);
    }
    assert_eq!(a.datasets.len(), 3);
    assert!(a.aggregate.auc_sigma.is_some());
}

#[test]
fn sweep_ignores_record_order() {
    let store = fixture(1);
    let a = reference_sweep(&store, &[1, 3], 3, 5).unwrap();
    let b = reference_sweep(&shuffled(&store, 1), &[1, 3], 3, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn self_trials_never_match_themselves() {
    let store = fixture(1);
    for t in self_trials(&store).unwrap() {
        assert_ne!(t.argmax_reference, t.utterance_id);
        let reference = store.get(&t.argmax_reference).unwrap();
        assert_eq!(reference.label, Label::BonaFide);
        assert_eq!(reference.identity_id, t.claimed_identity);
    }
}

#[test]
fn oversized_reference_size_matches_full_pools() {
    let store = fixture(1);
    let full = self_trials(&store).unwrap();
    for seed in [0, 9] {
        assert_eq!(sized_trials(&store, 10_000, seed, 0).unwrap(), full);
    }
}

#[test]
fn sized_trials_use_at_most_k_references() {
    let store = fixture(1);
    let k = 3;
    let trials = sized_trials(&store, k, 2, 1).unwrap();
    let mut used: std::collections::HashMap<&str, std::collections::HashSet<&str>> = Default::default();
    for t in &trials {
        if store.get(&t.utterance_id).unwrap().label == Label::Spoof {
            used.entry(t.claimed_identity.as_str()).or_default().insert(t.argmax_reference.as_str());
        }
    }
    for refs in used.values() {
        assert!(refs.len() <= k, "{refs:?}");
    }
}

#[test]
fn sweep_spread_and_shape() {
    let store = fixture(1);
    let r = reference_sweep(&store, &[1, 2, 25], 4, 0).unwrap();
    assert_eq!(r.points.len(), 3);
    for p in &r.points {
        assert_eq!(p.aucs.len(), 4);
        assert!(p.min_auc <= p.mean_auc && p.mean_auc <= p.max_auc);
    }
    // 25 exceeds every held-out pool (24), so every repetition is the full evaluation
    assert_eq!(r.points[2].std_auc, 0.0);
    let full = evaluate(&store, &CostModel::default()).unwrap();
    assert_eq!(r.points[2].mean_auc, full.datasets[0].auc);
}

#[test]
fn sweep_rejects_bad_arguments() {
    let store = fixture(1);
    assert!(matches!(reference_sweep(&store, &[], 2, 0), Err(ProtocolError::InvalidSizes(_))));
    assert!(matches!(reference_sweep(&store, &[0, 1], 2, 0), Err(ProtocolError::InvalidSizes(_))));
    assert!(matches!(reference_sweep(&store, &[3, 3], 2, 0), Err(ProtocolError::InvalidSizes(_))));
    assert!(matches!(reference_sweep(&store, &[1], 0, 0), Err(ProtocolError::NoRepetitions)));
}

#[test]
fn histogram_counts_every_trial() {
    let store = fixture(2);
    let trials = sized_trials(&store, 4, 0, 0).unwrap();
    for bins in [1, 7, 50] {
        let h = histogram(&trials, bins, Some(4)).unwrap();
        assert_eq!(h.real_counts.iter().sum::<u64>(), 6 * 25);
        assert_eq!(h.fake_counts.iter().sum::<u64>(), 6 * 8);
        let overlap = h.overlap.unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&overlap));
    }
}

#[test]
fn histogram_edges_and_end_bins() {
    let trials = common::trials_from(&[1.0, 0.0, -1.0], &[0.5]);
    let h = histogram(&trials, 4, None).unwrap();
    assert_eq!(h.bin_edges, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    assert_eq!(h.real_counts, vec![1, 0, 1, 1]);
    assert_eq!(h.fake_counts, vec![0, 0, 0, 1]);
    assert_eq!(h.overlap, Some(1.0 / 3.0));
}

#[test]
fn threshold_sweep_picks_lowest_best() {
    let trials = common::trials_from(&[0.9, 0.8], &[0.2, 0.1]);
    let grid = default_grid(false, 11);
    let s = threshold_sweep(&trials, &grid).unwrap();
    assert_eq!(s.best.accuracy, 1.0);
    assert_eq!(s.best.threshold, 0.3);
    assert!(!s.fixed_within_tolerance);
    assert_eq!(s.fixed.accuracy, 0.75);
    assert_eq!(s.points.first().unwrap().accuracy, 0.5);
    assert_eq!(default_grid(true, 5), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
}

#[test]
fn fixture_auc_rises_with_reference_size() {
    let store = generate(&FixtureConfig {
        identities: 8,
        bona_fide_per_identity: 80,
        spoof_per_identity: 30,
        dim: 64,
        seed: 2,
        ..FixtureConfig::default()
    })
    .unwrap();
    let sizes = [1, 2, 5, 20];
    let r = reference_sweep(&store, &sizes, 5, 0).unwrap();
    let means: Vec<f64> = r.points.iter().map(|p| p.mean_auc).collect();
    let xs: Vec<f64> = sizes.iter().map(|&k| k as f64).collect();
    assert!(common::spearman(&xs, &means) >= 0.9, "{means:?}");
    assert!(means[0] < means[3]);
}
