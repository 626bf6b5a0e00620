use std::collections::BTreeSet;

use cacforge::dataset::{
    apply_augment, build_manifest, curriculum_order, sample_augment, Manifest, PatientRecord, Phase, SplitPlan,
    DEFAULT_SEEDS,
};
use cacforge::enhance::Mode;
use cacforge::ingest::BinaryLabel;
use cacforge::projector::DrrImage;
use cacforge::rng::CounterRng;
use proptest::prelude::*;

fn cohort(n: usize, positives: usize, seed: u64) -> Manifest {
    let rng = CounterRng::new(seed, 0);
    let records = (0..n)
        .map(|i| {
            let score = if i < positives {
                101.0 + rng.uniform(i as u64, 0.0, 2000.0)
            } else {
                rng.uniform(i as u64, 0.0, 100.0)
            };
            PatientRecord::new(
                format!("P{:05}", rng.below(1_000_000 + i as u64, 100_000) * 1000 + i as u64),
                score,
                Mode::Original,
            )
        })
        .collect();
    build_manifest(records, None).unwrap()
}

fn check_plan(m: &Manifest, plan: &SplitPlan) -> Result<(), TestCaseError> {
    let all: BTreeSet<&str> = m.ids().into_iter().collect();
    let (neg, pos) = m.class_counts();
    let k = plan.n_folds;
    for &seed in &plan.seeds {
        let mut seen_val = BTreeSet::new();
        for fold in 0..k {
            let a = plan.get(seed, fold).unwrap();
            let train: BTreeSet<&str> = a.train.iter().map(String::as_str).collect();
            let val: BTreeSet<&str> = a.val.iter().map(String::as_str).collect();
            prop_assert!(train.is_disjoint(&val));
            prop_assert_eq!(train.union(&val).copied().collect::<BTreeSet<_>>(), all.clone());
            for id in &val {
                prop_assert!(seen_val.insert(*id), "{} in two val folds", id);
            }
            let p = a.val.iter().filter(|id| m.get(id).unwrap().binary == BinaryLabel::Positive).count() as f64;
            prop_assert!((p - pos as f64 / k as f64).abs() <= 1.0);
            let q = a.val.len() as f64 - p;
            prop_assert!((q - neg as f64 / k as f64).abs() <= 1.0);
        }
        prop_assert_eq!(seen_val.len(), all.len());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_and_stratify(n in 10usize..300, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let positives = ((n as f64 * frac) as usize).clamp(5, n - 5);
        let m = cohort(n, positives, seed);
        let plan = SplitPlan::build(&m, 5, &DEFAULT_SEEDS).unwrap();
        check_plan(&m, &plan)?;
        let sizes: Vec<usize> = (0..5).map(|f| plan.get(0, f).unwrap().val.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn curriculum_is_a_phase_ordered_permutation(n in 0usize..60, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let m = cohort(n, n / 3, seed);
        let order = curriculum_order(&m, frac);
        let mut ids: Vec<&str> = order.iter().map(|e| e.patient_id.as_str()).collect();
        let phase1: Vec<_> = order.iter().filter(|e| e.phase == Phase::Extremes).collect();
        let phase2: Vec<_> = order.iter().filter(|e| e.phase == Phase::Borderline).collect();
        prop_assert_eq!(phase1.len() + phase2.len(), order.len());
        prop_assert!(phase1.iter().chain(&phase2).zip(&order).all(|(a, b)| *a == b));
        prop_assert!(order.windows(2).all(|w| w[0].difficulty >= w[1].difficulty));
        ids.sort();
        prop_assert_eq!(ids, m.ids());
    }

    #[test]
    fn augmentation_keeps_shape_and_range(seed in any::<u64>(), index in any::<u64>(), w in 4usize..40, h in 4usize..40) {
        let rng = CounterRng::new(seed, 5);
        let img = DrrImage::new((0..(w * h) as u64).map(|c| rng.unit(c) as f32).collect(), w, h);
        let p = sample_augment(seed, index);
        let out = apply_augment(&img, &p);
        prop_assert_eq!((out.width, out.height), (w, h));
        prop_assert!(out.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(apply_augment(&img, &sample_augment(seed, index)), out);
    }
}

#[test]
fn cohort_of_667_gives_133_or_134_per_val_fold() {
    let m = cohort(667, 200, 1);
    let plan = SplitPlan::build(&m, 5, &DEFAULT_SEEDS).unwrap();
    assert_eq!(plan.assignments.len(), 25);
    for a in plan.assignments.values() {
        assert!(a.val.len() == 133 || a.val.len() == 134, "{}", a.val.len());
        assert!(a.train.len() == 534 || a.train.len() == 533);
    }
}
