mod common;

use proptest::prelude::*;
use voxref::metrics::{self, accuracy_at, roc, summarize, ClassScores, CostModel};

fn score() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1.0f64..=1.0),
        (0i32..=8).prop_map(|i| i as f64 / 8.0),
    ]
}

fn two_class() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(score(), 1..60),
        prop::collection::vec(score(), 1..60),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn auc_matches_pairwise((real, fake) in two_class()) {
        let s = ClassScores::new(real.clone(), fake.clone()).unwrap();
        prop_assert_eq!(metrics::auc(&s), common::auc_pairwise(&real, &fake));
    }

    #[test]
    fn eer_and_tdcf_match_enumeration((real, fake) in two_class()) {
        let s = ClassScores::new(real.clone(), fake.clone()).unwrap();
        let e = metrics::eer(&s);
        prop_assert_eq!((e.eer, e.threshold), common::eer_exhaustive(&real, &fake));
        let cost = CostModel { c_miss: 2.0, c_fa: 3.0, p_target: 0.7, p_spoof: 0.3 };
        let t = metrics::min_tdcf(&s, &cost).unwrap();
        prop_assert_eq!(t.min_tdcf, common::min_tdcf_exhaustive(&real, &fake, &cost));
    }

    #[test]
    fn swapping_classes_complements_auc((real, fake) in two_class()) {
        let a = metrics::mann_whitney_u2(&ClassScores::new(real.clone(), fake.clone()).unwrap());
        let b = metrics::mann_whitney_u2(&ClassScores::new(fake.clone(), real.clone()).unwrap());
        prop_assert_eq!(a + b, 2 * real.len() as u64 * fake.len() as u64);
    }

    #[test]
    fn auc_invariant_under_monotone_transform((real, fake) in two_class()) {
        let f = |x: &f64| (3.0 * x).tanh() * 0.5 + 0.1;
        let before = metrics::auc(&ClassScores::new(real.clone(), fake.clone()).unwrap());
        let after = metrics::auc(&ClassScores::new(
            real.iter().map(f).collect(),
            fake.iter().map(f).collect(),
        ).unwrap());
        prop_assert_eq!(before, after);
    }

    #[test]
    fn metrics_ignore_input_order((real, fake) in two_class(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (mut r2, mut f2) = (real.clone(), fake.clone());
        r2.shuffle(&mut rng);
        f2.shuffle(&mut rng);
        let a = ClassScores::new(real, fake).unwrap();
        let b = ClassScores::new(r2, f2).unwrap();
        prop_assert_eq!(metrics::auc(&a), metrics::auc(&b));
        prop_assert_eq!(metrics::eer(&a), metrics::eer(&b));
        let c = CostModel::default();
        prop_assert_eq!(metrics::min_tdcf(&a, &c).unwrap(), metrics::min_tdcf(&b, &c).unwrap());
    }

    #[test]
    fn roc_endpoints_and_monotonicity((real, fake) in two_class()) {
        let curve = roc(&ClassScores::new(real, fake).unwrap());
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        prop_assert_eq!((first.far, first.frr), (1.0, 0.0));
        prop_assert_eq!((last.far, last.frr), (0.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[0].far >= w[1].far);
            prop_assert!(w[0].frr <= w[1].frr);
        }
    }

    #[test]
    fn min_tdcf_never_exceeds_trivial_policy((real, fake) in two_class()) {
        let t = metrics::min_tdcf(&ClassScores::new(real, fake).unwrap(), &CostModel::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.min_tdcf));
    }

    #[test]
    fn accuracy_matches_roc((real, fake) in two_class(), t in -1.0f64..=1.0) {
        let trials = common::trials_from(&real, &fake);
        let curve = roc(&ClassScores::new(real.clone(), fake.clone()).unwrap());
        let (far, frr) = curve.rates_at(t);
        let (fa, fr) = common::errors_at(&real, &fake, t);
        prop_assert_eq!(far, fa as f64 / fake.len() as f64);
        prop_assert_eq!(frr, fr as f64 / real.len() as f64);
        let acc = accuracy_at(&trials, t).unwrap();
        let expect = (real.len() + fake.len() - fa - fr) as f64 / (real.len() + fake.len()) as f64;
        prop_assert!((acc - expect).abs() < 1e-12);
    }
}

#[test]
fn summary_over_three_datasets() {
    let mut by = std::collections::BTreeMap::new();
    by.insert("a".to_string(), common::trials_from(&[0.9, 0.8], &[0.1]));
    by.insert("b".to_string(), common::trials_from(&[0.9, 0.2], &[0.5]));
    by.insert("c".to_string(), common::trials_from(&[0.3], &[0.5, 0.6]));
    let s = summarize(&by, &CostModel::default()).unwrap();
    assert_eq!(s.datasets.len(), 3);
    let aucs: Vec<f64> = s.datasets.iter().map(|d| d.auc).collect();
    assert_eq!(aucs, vec![1.0, 0.5, 0.0]);
    assert_eq!(s.aggregate.mean_auc, 0.5);
    let sigma = s.aggregate.auc_sigma.unwrap();
    assert!((sigma - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
}

#[test]
fn single_class_is_an_error() {
    assert!(ClassScores::new(vec![0.1], vec![]).is_err());
    assert!(ClassScores::new(vec![], vec![0.1]).is_err());
    assert!(ClassScores::new(vec![f64::NAN], vec![0.1]).is_err());
}
