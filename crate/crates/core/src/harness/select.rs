//! Best-of-K selection and its Random and Oracle reference points.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng;

use super::{predictions, GroupRecord, HarnessError, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Index of the chosen member in each group.
    pub picks: Vec<usize>,
    pub tq: f64,
    pub oq: f64,
}

fn check_groups(groups: &[GroupRecord]) -> Result<(), HarnessError> {
    if groups.is_empty() {
        return Err(HarnessError::Empty);
    }
    if let Some((gi, g)) = groups.iter().enumerate().find(|(_, g)| g.members.is_empty()) {
        return Err(HarnessError::GroupTooSmall { group: gi, size: g.members.len(), min: 1 });
    }
    Ok(())
}

fn mean_of_picks(groups: &[GroupRecord], picks: &[usize], target: Target) -> f64 {
    groups.iter().zip(picks).map(|(g, &i)| g.members[i].mos(target)).sum::<f64>() / groups.len() as f64
}

/// Picks the highest-scored member of every group; exact ties are broken
/// uniformly at random by a generator seeded with `tiebreak_seed`.
pub fn best_of_k(groups: &[GroupRecord], tiebreak_seed: u64) -> Result<Selection, HarnessError> {
    check_groups(groups)?;
    let preds = predictions(groups)?;
    let mut rng = rng::derive(tiebreak_seed, 0x746965);
    let picks: Vec<usize> = preds
        .iter()
        .map(|p| {
            let best = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..p.len()).filter(|&i| p[i] == best).collect();
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.random_range(0..tied.len())]
            }
        })
        .collect();
    Ok(Selection { tq: mean_of_picks(groups, &picks, Target::Tq), oq: mean_of_picks(groups, &picks, Target::Oq), picks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub runs: usize,
    pub tq: f64,
    pub oq: f64,
    /// Standard error of the mean over runs.
    pub tq_std_err: f64,
    pub oq_std_err: f64,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, math::sqrt(var / n))
}

/// Mean MOS when one member per group is drawn uniformly, averaged over `runs`.
pub fn random_baseline(groups: &[GroupRecord], runs: usize, seed: u64) -> Result<Baseline, HarnessError> {
    check_groups(groups)?;
    if runs == 0 {
        return Err(HarnessError::Param("random baseline needs at least one run".into()));
    }
    let mut rng = rng::derive(seed, 0x72616e64);
    let mut tq = Vec::with_capacity(runs);
    let mut oq = Vec::with_capacity(runs);
    for _ in 0..runs {
        let picks: Vec<usize> = groups.iter().map(|g| rng.random_range(0..g.members.len())).collect();
        tq.push(mean_of_picks(groups, &picks, Target::Tq));
        oq.push(mean_of_picks(groups, &picks, Target::Oq));
    }
    let (tq, tq_std_err) = mean_and_se(&tq);
    let (oq, oq_std_err) = mean_and_se(&oq);
    Ok(Baseline { runs, tq, oq, tq_std_err, oq_std_err })
}

/// Exact expectation of the random baseline: the mean of group means.
pub fn random_expectation(groups: &[GroupRecord], target: Target) -> f64 {
    groups
        .iter()
        .map(|g| g.members.iter().map(|m| m.mos(target)).sum::<f64>() / g.members.len() as f64)
        .sum::<f64>()
        / groups.len() as f64
}

/// Mean of the per-group maximum of the given target.
pub fn oracle(groups: &[GroupRecord], target: Target) -> Result<f64, HarnessError> {
    check_groups(groups)?;
    Ok(groups
        .iter()
        .map(|g| g.members.iter().map(|m| m.mos(target)).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / groups.len() as f64)
}

/// `(selected − random) / (oracle − random)`; `None` when the denominator is zero.
pub fn gap_closed(selected: f64, random: f64, oracle: f64) -> Option<f64> {
    let den = oracle - random;
    if den == 0.0 {
        None
    } else {
        Some((selected - random) / den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Selection,
    pub random: Baseline,
    pub oracle_tq: f64,
    pub oracle_oq: f64,
    pub gap_closed_tq: Option<f64>,
    pub gap_closed_oq: Option<f64>,
}

/// Best-of-K with the Random and Oracle rows and the gap closed per target.
pub fn baselines_and_gap(
    groups: &[GroupRecord],
    random_runs: usize,
    seed: u64,
) -> Result<SelectionReport, HarnessError> {
    let method = best_of_k(groups, seed)?;
    let random = random_baseline(groups, random_runs, seed)?;
    let oracle_tq = oracle(groups, Target::Tq)?;
    let oracle_oq = oracle(groups, Target::Oq)?;
    Ok(SelectionReport {
        gap_closed_tq: gap_closed(method.tq, random.tq, oracle_tq),
        gap_closed_oq: gap_closed(method.oq, random.oq, oracle_oq),
        method,
        random,
        oracle_tq,
        oracle_oq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tests::group;
    use alloc::vec;

    #[test]
    fn scorer_equal_to_mos_is_oracle() {
        let gs = vec![group(&[1.0, 4.0, 2.0], &[3.0, 1.0, 2.0], &[1.0, 4.0, 2.0]), group(&[3.0, 0.5], &[1.0, 1.0], &[3.0, 0.5])];
        let s = best_of_k(&gs, 0).unwrap();
        assert_eq!(s.tq, oracle(&gs, Target::Tq).unwrap());
        assert_eq!(gap_closed(s.tq, 1.0, s.tq), Some(1.0));
    }

    #[test]
    fn second_best_hand_case() {
        let gs = vec![
            group(&[1.0, 4.0, 3.0], &[0.0, 0.0, 0.0], &[0.0, 1.0, 2.0]),
            group(&[5.0, 2.0, 4.5], &[1.0, 2.0, 3.0], &[0.0, -1.0, 7.0]),
        ];
        let s = best_of_k(&gs, 9).unwrap();
        assert_eq!(s.picks, vec![2, 2]);
        assert_eq!(s.tq, (3.0 + 4.5) / 2.0);
        assert_eq!(s.oq, 1.5);
    }

    #[test]
    fn constant_scorer_tracks_random() {
        let gs: Vec<_> = (0..20)
            .map(|i| {
                let t: Vec<f64> = (0..5).map(|k| ((i * 7 + k * 3) % 11) as f64 / 2.2).collect();
                group(&t, &t, &[1.0; 5])
            })
            .collect();
        let picks: Vec<f64> = (0..1000).map(|s| best_of_k(&gs, s).unwrap().tq).collect();
        let mean = picks.iter().sum::<f64>() / 1000.0;
        let base = random_baseline(&gs, 1000, 5).unwrap();
        assert!((mean - random_expectation(&gs, Target::Tq)).abs() < 3.0 * base.tq_std_err * 2.0_f64.sqrt());
        assert!((base.tq - random_expectation(&gs, Target::Tq)).abs() < 3.0 * base.tq_std_err);
    }

    #[test]
    fn tie_break_is_seeded() {
        let gs = vec![group(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], &[1.0; 4])];
        assert_eq!(best_of_k(&gs, 3).unwrap(), best_of_k(&gs, 3).unwrap());
        let seen: alloc::collections::BTreeSet<usize> = (0..64).map(|s| best_of_k(&gs, s).unwrap().picks[0]).collect();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn zero_gap_denominator() {
        assert_eq!(gap_closed(2.0, 3.0, 3.0), None);
    }
}
