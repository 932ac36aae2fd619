//! How overall-quality and text-quality MOS relate at three levels.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metrics::{self, Correlation, MetricError, PairedScores, Summary};

use super::{GroupRecord, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Over every member of every group.
    pub pooled: Option<Correlation>,
    /// Over per-generator mean OQ and mean TQ; `None` with fewer than two generators.
    pub between_generator: Option<Correlation>,
    pub generators: usize,
    /// SROCC(OQ, TQ) inside each group.
    pub within_group: Option<Summary>,
    pub within_group_skipped: usize,
    pub notices: Vec<String>,
}

fn corr_or_none(x: &[f64], y: &[f64]) -> Result<Option<Correlation>, HarnessError> {
    match metrics::correlate(x, y) {
        Ok(c) => Ok(Some(c)),
        Err(MetricError::Undefined | MetricError::TooShort { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn oq_tq_decomposition(groups: &[GroupRecord]) -> Result<Decomposition, HarnessError> {
    if groups.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut notices = Vec::new();
    let all = groups.iter().flat_map(|g| &g.members);
    let oq: Vec<f64> = all.clone().map(|m| m.oq_mos).collect();
    let tq: Vec<f64> = all.map(|m| m.tq_mos).collect();
    let pooled = corr_or_none(&oq, &tq)?;
    if pooled.is_none() {
        notices.push("pooled correlation undefined".into());
    }

    let mut per_gen: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for g in groups {
        let e = per_gen.entry(g.generator.as_str()).or_insert((0.0, 0.0, 0));
        for m in &g.members {
            e.0 += m.oq_mos;
            e.1 += m.tq_mos;
            e.2 += 1;
        }
    }
    let generators = per_gen.len();
    let between_generator = if generators < 2 {
        notices.push("fewer than two generators: between-generator level omitted".into());
        None
    } else {
        let (go, gt): (Vec<f64>, Vec<f64>) =
            per_gen.values().filter(|v| v.2 > 0).map(|&(o, t, n)| (o / n as f64, t / n as f64)).unzip();
        corr_or_none(&go, &gt)?
    };

    let mut within = Vec::new();
    let mut skipped = 0;
    for g in groups {
        let o: Vec<f64> = g.members.iter().map(|m| m.oq_mos).collect();
        let t: Vec<f64> = g.members.iter().map(|m| m.tq_mos).collect();
        match PairedScores::new(&o, &t).and_then(metrics::srocc) {
            Ok(r) => within.push(r),
            Err(MetricError::Undefined | MetricError::TooShort { .. }) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Decomposition {
        pooled,
        between_generator,
        generators,
        within_group: Summary::of(&within),
        within_group_skipped: skipped,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Member;
    use crate::rng;
    use alloc::format;
    use rand::Rng as _;

    fn groups(n_gen: usize, per_gen: usize, mut f: impl FnMut(usize, usize, usize) -> (f64, f64)) -> Vec<GroupRecord> {
        let mut out = Vec::new();
        for g in 0..n_gen {
            for p in 0..per_gen {
                let members = (0..5)
                    .map(|k| {
                        let (oq, tq) = f(g, p, k);
                        Member { id: format!("{g}-{p}-{k}"), tq_mos: tq, oq_mos: oq, predicted: None }
                    })
                    .collect();
                out.push(GroupRecord { generator: format!("gen{g}"), prompt: format!("p{p}"), members });
            }
        }
        out
    }

    #[test]
    fn identical_targets_give_unit_correlations() {
        let mut r = rng::seeded(1);
        let gs = groups(4, 3, |_, _, _| {
            let v: f64 = r.random_range(0.0..5.0);
            (v, v)
        });
        let d = oq_tq_decomposition(&gs).unwrap();
        assert!((d.pooled.unwrap().srocc - 1.0).abs() < 1e-12);
        assert!((d.between_generator.unwrap().plcc - 1.0).abs() < 1e-12);
        assert!((d.within_group.unwrap().mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_targets_are_uncorrelated() {
        let mut r = rng::seeded(2);
        let gs = groups(10, 40, |_, _, _| (r.random_range(0.0..5.0), r.random_range(0.0..5.0)));
        let d = oq_tq_decomposition(&gs).unwrap();
        // 2000 points: the null standard deviation of r is about 0.022
        assert!(d.pooled.unwrap().plcc.abs() < 0.1);
    }

    #[test]
    fn generator_offsets_dominate_between_level() {
        let mut r = rng::seeded(3);
        let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0, 0.5];
        let gs = groups(6, 10, |g, _, _| {
            let base = 2.5 + offsets[g] * 0.8;
            let oq = base + r.random_range(-0.3..0.3);
            let tq = base + offsets[g] * 0.2 + r.random_range(-0.3..0.3);
            (oq, tq)
        });
        let d = oq_tq_decomposition(&gs).unwrap();
        assert!(d.between_generator.unwrap().plcc > d.within_group.unwrap().mean);
    }

    #[test]
    fn single_generator_omits_between_level() {
        let gs = groups(1, 2, |_, p, k| (k as f64, (k + p) as f64));
        let d = oq_tq_decomposition(&gs).unwrap();
        assert!(d.between_generator.is_none());
        assert_eq!(d.notices.len(), 1);
    }
}
