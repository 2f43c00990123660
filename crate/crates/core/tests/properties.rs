mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stmia_core::attacks::{self, FusionWeights, Standardizer};
use stmia_core::eval::metrics;
use stmia_core::mlp;
use stmia_core::signals::{self, SignalConfig, SignalFeature};
use stmia_core::simulator::{self, SimConfig};
use stmia_core::stats;
use stmia_core::store::{json, vleb, EmbeddingMatrix, GenerationBatch};

fn labeled_scores() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0i32..15, any::<bool>()), 2..50).prop_map(|mut v| {
        v[0].1 = true;
        v[1].1 = false;
        v.into_iter().map(|(s, m)| (f64::from(s), m)).collect()
    })
}

fn instance() -> impl Strategy<Value = common::Instance> {
    any::<u64>().prop_map(|seed| common::random_instance(&mut common::rng(seed)))
}

fn feature(id: usize, srf: f64, tgs: f64) -> SignalFeature {
    SignalFeature {
        sample_id: format!("r{id}"),
        label: None,
        srf_vector: vec![srf],
        srf_scalar: srf,
        instability_vector: vec![tgs],
        tgs_scalar: tgs,
    }
}

fn reference_set() -> impl Strategy<Value = Vec<SignalFeature>> {
    prop::collection::vec((-1.0f64..1.0, 0.0f64..0.5), 2..40)
        .prop_filter("non-degenerate", |v| {
            let s: Vec<f64> = v.iter().map(|p| p.0).collect();
            let t: Vec<f64> = v.iter().map(|p| p.1).collect();
            stats::population_std(&s) > 1e-6 && stats::population_std(&t) > 1e-6
        })
        .prop_map(|v| v.into_iter().enumerate().map(|(i, (s, t))| feature(i, s, t)).collect())
}

proptest! {
    #[test]
    fn auc_flips_under_negation(scores in labeled_scores()) {
        let neg: Vec<(f64, bool)> = scores.iter().map(|&(s, m)| (-s, m)).collect();
        let a = metrics::auc(&scores).unwrap();
        prop_assert!((a + metrics::auc(&neg).unwrap() - 1.0).abs() < 1e-12);
        let swapped: Vec<(f64, bool)> = scores.iter().map(|&(s, m)| (s, !m)).collect();
        prop_assert!((a + metrics::auc(&swapped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms(scores in labeled_scores()) {
        let a = metrics::auc(&scores).unwrap();
        for f in [|x: f64| 3.0 * x - 7.0, |x: f64| x * x * x, |x: f64| (x / 4.0).exp()] {
            let t: Vec<(f64, bool)> = scores.iter().map(|&(s, m)| (f(s), m)).collect();
            prop_assert_eq!(metrics::auc(&t).unwrap(), a);
        }
    }

    #[test]
    fn roc_is_monotone_and_integrates_to_auc(scores in labeled_scores()) {
        let roc = metrics::roc_curve(&scores).unwrap();
        prop_assert_eq!(roc[0], (0.0, 0.0));
        prop_assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        for w in roc.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        let gap = metrics::trapezoid_area(&roc) - metrics::auc(&scores).unwrap();
        prop_assert!(gap.abs() <= 1e-12);
    }

    #[test]
    fn tpr_is_monotone_in_target_fpr(scores in labeled_scores(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(metrics::tpr_at_fpr(&scores, lo).unwrap() <= metrics::tpr_at_fpr(&scores, hi).unwrap());
        prop_assert_eq!(metrics::tpr_at_fpr(&scores, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn balanced_accuracy_is_bounded(scores in labeled_scores(), t in -1.0f64..16.0) {
        let b = metrics::balanced_accuracy(&scores, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn zscores_of_calibration_set_are_standard(refs in reference_set()) {
        let st = attacks::calibrate(&refs).unwrap();
        let (a_srf, a_tgs): (Vec<f64>, Vec<f64>) =
            refs.iter().map(|r| attacks::reference_components(r, &st)).unzip();
        for xs in [a_srf, a_tgs] {
            let (m, s) = stats::mean_std(&xs);
            prop_assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9, "mean {m} std {s}");
        }
    }

    #[test]
    fn reference_ranking_matches_raw_signals(refs in reference_set(), evals in reference_set()) {
        // A_SRF is increasing in S_SRF and A_TGS is decreasing in S_TGS
        let st = attacks::calibrate(&refs).unwrap();
        for w in evals.windows(2) {
            let (x, y) = (attacks::reference_components(&w[0], &st), attacks::reference_components(&w[1], &st));
            prop_assert_eq!(x.0 < y.0, w[0].srf_scalar < w[1].srf_scalar);
            prop_assert_eq!(x.1 < y.1, w[0].tgs_scalar > w[1].tgs_scalar);
        }
    }

    #[test]
    fn one_hot_weights_reduce_to_a_single_component(refs in reference_set()) {
        let st = attacks::calibrate(&refs).unwrap();
        let only_srf = FusionWeights::new(1.0, 0.0).unwrap();
        let only_tgs = FusionWeights::new(0.0, 1.0).unwrap();
        for r in &refs {
            let (a_srf, a_tgs) = attacks::reference_components(r, &st);
            prop_assert_eq!(attacks::reference_attack(r, &st, &only_srf).unwrap().score, a_srf);
            prop_assert_eq!(attacks::reference_attack(r, &st, &only_tgs).unwrap().score, a_tgs);
            prop_assert_eq!(attacks::query_only_attack(r, &only_srf).unwrap().score, r.srf_scalar);
            prop_assert_eq!(attacks::query_only_attack(r, &only_tgs).unwrap().score, 1.0 - r.tgs_scalar);
        }
    }

    #[test]
    fn standardizer_centres_its_fit_set(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..30)) {
        let st = Standardizer::fit(&rows).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| st.apply(r).unwrap()).collect();
        for j in 0..3 {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            prop_assert!(stats::mean(&col).abs() < 1e-9);
        }
    }

    #[test]
    fn srf_is_nonincreasing_in_k(inst in instance()) {
        let rec = inst.record("x", None);
        let mut prev = f64::INFINITY;
        for k in 1..=inst.keyframes.len() + 1 {
            let (_, s) = signals::srf_signal(&rec.target, &rec.batch, &SignalConfig { k, ..Default::default() }).unwrap();
            prop_assert!(s <= prev + 1e-12 && (-1.0..=1.0).contains(&s));
            prev = s;
        }
    }

    #[test]
    fn tgs_ignores_generation_order(inst in instance(), rot in 1usize..4) {
        let rec = inst.record("x", None);
        let q = rec.batch.queries();
        let mut gens = rec.batch.generations.clone();
        gens.rotate_left(rot % q);
        let rotated = GenerationBatch::new("x", gens).unwrap();
        let (_, a) = signals::tgs_signal(&rec.batch, q).unwrap();
        let (_, b) = signals::tgs_signal(&rotated, q).unwrap();
        prop_assert!(a >= 0.0 && (a - b).abs() < 1e-12);
    }

    #[test]
    fn tgs_is_zero_for_repeated_generations(inst in instance()) {
        let g = common::matrix(&inst.generations[0]);
        let batch = GenerationBatch::new("x", vec![g; 3]).unwrap();
        prop_assert_eq!(signals::tgs_signal(&batch, 3).unwrap().1, 0.0);
    }

    #[test]
    fn signals_ignore_power_of_two_scaling(inst in instance()) {
        let rec = inst.record("x", None);
        let scale = |m: &EmbeddingMatrix| {
            EmbeddingMatrix::new(m.rows(), m.dim(), m.values().iter().map(|v| v * 4.0).collect()).unwrap()
        };
        let mut scaled = rec.clone();
        scaled.target.keyframes = scale(&rec.target.keyframes);
        scaled.batch.generations = rec.batch.generations.iter().map(scale).collect();
        let cfg = SignalConfig { k: inst.k, ..Default::default() };
        let q = rec.batch.queries();
        let srf = |r: &stmia_core::store::AuditRecord| signals::srf_signal(&r.target, &r.batch, &cfg).unwrap().1;
        let tgs = |r: &stmia_core::store::AuditRecord| signals::tgs_signal(&r.batch, q).unwrap().1;
        prop_assert!((srf(&rec) - srf(&scaled)).abs() < 1e-12);
        prop_assert!((tgs(&rec) - tgs(&scaled)).abs() < 1e-12);
    }

    #[test]
    fn holdout_partitions_each_class(labels in prop::collection::vec(any::<bool>(), 4..60), f in 0.05f64..0.95, seed in any::<u64>()) {
        prop_assume!(labels.iter().filter(|&&l| l).count() >= 2 && labels.iter().filter(|&&l| !l).count() >= 2);
        let (kept, held) = mlp::stratified_holdout(&labels, f, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut all: Vec<usize> = kept.iter().chain(&held).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in [true, false] {
            prop_assert!(held.iter().any(|&i| labels[i] == class));
            prop_assert!(kept.iter().any(|&i| labels[i] == class));
        }
    }

    #[test]
    fn bundles_round_trip_through_both_formats(seed in any::<u64>()) {
        let bundle = common::random_bundle(&mut common::rng(seed));
        let bytes = vleb::encode(&bundle).unwrap();
        let back = vleb::decode(&bytes).unwrap();
        prop_assert!(common::bundles_bit_equal(&bundle, &back));
        prop_assert_eq!(vleb::encode(&back).unwrap(), bytes);
        let text = json::to_json_string(&bundle).unwrap();
        let from_json = json::from_json_str(&text, Default::default()).unwrap();
        prop_assert!(common::bundles_bit_equal(&bundle, &from_json));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulator_is_deterministic(seed in any::<u64>(), members in 1usize..6, nonmembers in 1usize..6) {
        let cfg = SimConfig { n_members: members, n_nonmembers: nonmembers, seed, ..Default::default() };
        let a = simulator::generate(&cfg).unwrap();
        prop_assert!(common::bundles_bit_equal(&a, &simulator::generate(&cfg).unwrap()));
        prop_assert_eq!(a.members(), members);
        prop_assert_eq!(a.nonmembers(), nonmembers);
        a.validate().unwrap();
    }
}

proptest! {
    #[test]
    fn metrics_ignore_sample_order(scores in labeled_scores(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = scores.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(metrics::auc(&shuffled).unwrap(), metrics::auc(&scores).unwrap());
        prop_assert_eq!(metrics::roc_curve(&shuffled).unwrap(), metrics::roc_curve(&scores).unwrap());
        prop_assert_eq!(metrics::tpr_at_fpr(&shuffled, 0.01).unwrap(), metrics::tpr_at_fpr(&scores, 0.01).unwrap());
    }

    #[test]
    fn reference_ranking_survives_a_common_srf_shift(refs in reference_set(), evals in reference_set(), c in -0.5f64..0.5) {
        let shift = |xs: &[SignalFeature]| -> Vec<SignalFeature> {
            xs.iter().map(|r| feature(0, r.srf_scalar + c, r.tgs_scalar)).collect()
        };
        let w = FusionWeights::new(0.5, 0.5).unwrap();
        let (st, st_shift) = (attacks::calibrate(&refs).unwrap(), attacks::calibrate(&shift(&refs)).unwrap());
        let score = |x: &SignalFeature, st| attacks::reference_attack(x, st, &w).unwrap().score;
        let plain: Vec<f64> = evals.iter().map(|e| score(e, &st)).collect();
        let moved: Vec<f64> = shift(&evals).iter().map(|e| score(e, &st_shift)).collect();
        for i in 0..plain.len() {
            prop_assert!((plain[i] - moved[i]).abs() < 1e-9, "{} vs {}", plain[i], moved[i]);
        }
    }

    #[test]
    fn query_only_scores_do_not_depend_on_the_batch(evals in reference_set()) {
        let w = FusionWeights::new(0.7, 0.3).unwrap();
        let all: Vec<f64> = evals.iter().map(|e| attacks::query_only_attack(e, &w).unwrap().score).collect();
        for (i, e) in evals.iter().enumerate().step_by(3) {
            prop_assert_eq!(attacks::query_only_attack(e, &w).unwrap().score, all[i]);
        }
    }
}

#[test]
fn bundle_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(5);
    for i in 0..50 {
        let bundle = common::random_bundle(&mut rng);
        let bin = dir.path().join(format!("b{i}.vleb"));
        let txt = dir.path().join(format!("b{i}.json"));
        vleb::write_bundle(&bundle, &bin).unwrap();
        json::write_bundle_json(&bundle, &txt).unwrap();
        assert!(common::bundles_bit_equal(&bundle, &vleb::read_bundle(&bin).unwrap()));
        assert!(common::bundles_bit_equal(&bundle, &json::read_bundle_json(&txt).unwrap()));
    }
}
