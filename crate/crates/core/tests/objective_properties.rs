use antiqa_core::calibrate::FiveParamLogistic;
use antiqa_core::harness::select::best_of_k;
use antiqa_core::harness::{GroupRecord, Member};
use antiqa_core::metrics::srocc;
use antiqa_core::metrics::PairedScores;
use antiqa_core::train::{mse_loss, rank_loss, total_loss, LossConfig};
use proptest::prelude::*;

fn pairs(n: core::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-5.0f64..5.0, 0i32..6), n).prop_map(|v| v.into_iter().map(|(p, t)| (p, f64::from(t))).unzip())
}

fn curve() -> impl Strategy<Value = FiveParamLogistic> {
    (0.2f64..2.4, 2.6f64..4.8, 0.1f64..0.9, 0.3f64..5.0, 0.3f64..3.0, any::<bool>()).prop_map(|(a, d, c, b, e, flip)| {
        let (lower, upper) = if flip { (d, a) } else { (a, d) };
        FiveParamLogistic { lower, upper, inflection: c, slope: b, asymmetry: e }
    })
}

fn groups_from(scores: &[Vec<f64>]) -> Vec<GroupRecord> {
    scores
        .iter()
        .enumerate()
        .map(|(g, s)| GroupRecord {
            generator: format!("gen{}", g % 3),
            prompt: format!("p{g}"),
            members: s
                .iter()
                .enumerate()
                .map(|(i, &p)| Member { id: format!("{g}-{i}"), tq_mos: i as f64, oq_mos: 0.0, predicted: Some(p) })
                .collect(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rank_loss_translation_invariant((p, t) in pairs(2..10), shift in -100.0f64..100.0) {
        let moved: Vec<f64> = p.iter().map(|v| v + shift).collect();
        let a = rank_loss(&p, &t).unwrap().value;
        let b = rank_loss(&moved, &t).unwrap().value;
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn total_loss_decomposes((p, t) in pairs(2..10), alpha in 0.0f64..=1.0) {
        let cfg = LossConfig { alpha };
        let b = total_loss(&p, &t, &cfg).unwrap();
        prop_assert_eq!(b.mse, mse_loss(&p, &t).unwrap());
        prop_assert_eq!(b.rank, rank_loss(&p, &t).unwrap().value);
        prop_assert!((b.total - (alpha * b.mse + (1.0 - alpha) * b.rank)).abs() < 1e-12);
        prop_assert!(b.mse >= 0.0 && b.rank >= 0.0);
    }

    #[test]
    fn calibrated_output_stays_in_range(c in curve(), x in -1.0f64..2.0) {
        let y = c.eval(x);
        prop_assert!((0.0..=5.0).contains(&y));
    }

    #[test]
    fn calibration_preserves_rank_correlation(
        c in curve(),
        xs in prop::collection::btree_set(50u32..1000, 3..20),
        ys in prop::collection::vec(0.0f64..5.0, 20),
    ) {
        let x: Vec<f64> = xs.into_iter().map(|v| f64::from(v) / 1000.0).collect();
        let y = &ys[..x.len()];
        let mapped: Vec<f64> = x.iter().map(|&v| c.eval(v)).collect();
        // strictly monotone only while the curve output stays distinct
        let mut sorted = mapped.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        if let (Ok(raw), Ok(cal)) = (srocc(PairedScores::new(&x, y).unwrap()), srocc(PairedScores::new(&mapped, y).unwrap())) {
            let expect = if (c.upper - c.lower) * c.slope > 0.0 { raw } else { -raw };
            prop_assert!((cal - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn best_of_k_invariant_under_increasing_transform(
        scores in prop::collection::vec(prop::collection::vec(0u8..6, 1..6), 1..8),
        seed in any::<u64>(),
    ) {
        let raw: Vec<Vec<f64>> = scores.iter().map(|g| g.iter().map(|&v| f64::from(v) / 2.0).collect()).collect();
        let moved: Vec<Vec<f64>> = raw.iter().map(|g| g.iter().map(|v| 3.0 * v + 1.0).collect()).collect();
        let a = best_of_k(&groups_from(&raw), seed).unwrap();
        let b = best_of_k(&groups_from(&moved), seed).unwrap();
        prop_assert_eq!(&a.picks, &b.picks);
        for (g, &i) in raw.iter().zip(&a.picks) {
            prop_assert_eq!(g[i], g.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}

mod timing {
    use antiqa_core::harness::bench::TimingSummary;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn order_statistics(t in prop::collection::vec(1e-6f64..1.0, 1..200)) {
            let s = TimingSummary::from_times(&t).unwrap();
            prop_assert!(s.min_s <= s.median_s && s.min_s <= s.mean_s);
            prop_assert_eq!(s.fps, 1.0 / s.min_s);
            prop_assert_eq!(s.runs, t.len());
        }
    }
}

mod optimizer {
    use antiqa_core::net::ModelParams;
    use antiqa_core::tensor::Tensor;
    use antiqa_core::train::{adamw_step, AdamState, OptimConfig};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn zero_gradient_without_decay_is_identity(w in prop::collection::vec(-3.0f64..3.0, 6), steps in 1usize..20) {
            let mut p = ModelParams::new();
            p.insert("w", Tensor::new(vec![2, 3], w).unwrap()).unwrap();
            let before = p.clone();
            let mut st = AdamState::for_params(&p);
            let cfg = OptimConfig { weight_decay: 0.0, ..OptimConfig::default() };
            for _ in 0..steps {
                adamw_step(&mut p, &[vec![0.0; 6]], &mut st, &cfg, 1e-2).unwrap();
            }
            prop_assert_eq!(p, before);
        }
    }
}
