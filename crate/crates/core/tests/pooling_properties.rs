use antiqa_core::aggregate::{pool, PoolConfig, ScoredCrop, Strategy as Pooling};
use proptest::prelude::*;

const ALL: [Pooling; 6] = [
    Pooling::AreaMean,
    Pooling::AreaAlphaMean,
    Pooling::CoverageBlend,
    Pooling::Softmin,
    Pooling::BottomK,
    Pooling::PowerMean,
];

fn crops() -> impl Strategy<Value = Vec<ScoredCrop>> {
    prop::collection::vec((0.0f64..=5.0, 0.001f64..0.08), 1..12)
        .prop_map(|v| v.into_iter().map(|(s, a)| ScoredCrop::new(s, a)).collect())
}

fn score(c: &[ScoredCrop], cfg: &PoolConfig) -> f64 {
    pool(c, cfg).unwrap().score().unwrap()
}

fn min_max(c: &[ScoredCrop]) -> (f64, f64) {
    c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x.score), hi.max(x.score)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn outputs_within_strategy_bounds(c in crops(), alpha in 0.0f64..2.0) {
        let (lo, hi) = min_max(&c);
        for st in ALL {
            let cfg = PoolConfig { alpha, ..PoolConfig::with_strategy(st) };
            let s = score(&c, &cfg);
            let tol = 1e-9;
            match st {
                Pooling::CoverageBlend => prop_assert!(s >= lo.min(cfg.s0) - tol && s <= hi.max(cfg.s0) + tol),
                // scores below eps are lifted to eps before the power mean
                Pooling::PowerMean => prop_assert!(s >= lo.max(cfg.eps) - tol && s <= hi.max(cfg.eps) + tol),
                _ => prop_assert!(s >= lo - tol && s <= hi + tol, "{st:?} {s} not in [{lo}, {hi}]"),
            }
        }
    }

    #[test]
    fn permutation_invariant(c in crops().prop_shuffle(), seed in 0usize..1000) {
        let mut r = c.clone();
        r.rotate_left(seed % c.len());
        r.reverse();
        for st in ALL {
            let cfg = PoolConfig::with_strategy(st);
            prop_assert!((score(&c, &cfg) - score(&r, &cfg)).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_in_each_score(c in crops(), idx in 0usize..12, bump in 0.0f64..2.0) {
        let i = idx % c.len();
        let mut up = c.clone();
        up[i].score = (up[i].score + bump).min(5.0);
        for st in ALL {
            let cfg = PoolConfig::with_strategy(st);
            prop_assert!(score(&up, &cfg) >= score(&c, &cfg) - 1e-9, "{st:?}");
        }
    }

    #[test]
    fn softmin_limits(c in crops(), alpha in 0.0f64..2.0) {
        let mean = score(&c, &PoolConfig { alpha, ..PoolConfig::with_strategy(Pooling::AreaAlphaMean) });
        let wide = score(&c, &PoolConfig { alpha, tau: 1e6, ..PoolConfig::with_strategy(Pooling::Softmin) });
        prop_assert!((wide - mean).abs() < 1e-4);
        let (lo, _) = min_max(&c);
        let narrow = score(&c, &PoolConfig { alpha, tau: 1e-4, ..PoolConfig::with_strategy(Pooling::Softmin) });
        // −τ log w_min bounds the gap to the minimum
        prop_assert!(narrow >= lo - 1e-12 && narrow - lo < 1e-4 * 30.0);
    }
}

#[test]
fn coverage_blend_with_vanishing_area_returns_prior() {
    let c = [ScoredCrop::new(1.0, 1e-300)];
    let cfg = PoolConfig::with_strategy(Pooling::CoverageBlend);
    assert_eq!(score(&c, &cfg), cfg.s0);
}
