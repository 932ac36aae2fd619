//! Group-level evaluation.
//!
//! A group is one (prompt, generator) pair with `K` generated samples, each
//! carrying a text-quality MOS, an overall-quality MOS and optionally a
//! predicted score. The submodules cover within-group correlation,
//! best-of-K selection against Random and Oracle baselines, the
//! OQ/TQ correlation decomposition, timing statistics for the throughput
//! benchmark, and a procedural generator of synthetic text crops.

pub mod bench;
pub mod decompose;
pub mod select;
pub mod synth;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metrics::{self, MetricError, PairedScores, Summary};

pub use bench::{BenchConfig, TimingSummary};
pub use decompose::{oq_tq_decomposition, Decomposition};
pub use select::{baselines_and_gap, best_of_k, gap_closed, oracle, random_baseline, Baseline, Selection, SelectionReport};
pub use synth::{synth_generate, DegradationModel, SynthCrop, SynthDataset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("no groups given")]
    Empty,
    #[error("group {group} has {size} members, need at least {min}")]
    GroupTooSmall { group: usize, size: usize, min: usize },
    #[error("member {member} of group {group} has no predicted score")]
    MissingScore { group: usize, member: usize },
    #[error("every group is degenerate (constant MOS or prediction)")]
    AllDegenerate,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub tq_mos: f64,
    pub oq_mos: f64,
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub generator: String,
    pub prompt: String,
    pub members: Vec<Member>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Tq,
    Oq,
}

impl Member {
    pub fn mos(&self, target: Target) -> f64 {
        match target {
            Target::Tq => self.tq_mos,
            Target::Oq => self.oq_mos,
        }
    }
}

pub(crate) fn predictions(groups: &[GroupRecord]) -> Result<Vec<Vec<f64>>, HarnessError> {
    groups
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            g.members
                .iter()
                .enumerate()
                .map(|(mi, m)| m.predicted.ok_or(HarnessError::MissingScore { group: gi, member: mi }))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCorrelation {
    pub group: usize,
    pub plcc: f64,
    pub srocc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinGroupReport {
    pub target: Target,
    pub per_group: Vec<GroupCorrelation>,
    /// Groups left out because MOS or prediction was constant.
    pub skipped: usize,
    pub plcc: Summary,
    pub srocc: Summary,
}

/// PLCC and SROCC between prediction and MOS inside each group, summarized
/// over groups. Groups where either side is constant are skipped and counted.
pub fn within_group_corr(groups: &[GroupRecord], target: Target) -> Result<WithinGroupReport, HarnessError> {
    if groups.is_empty() {
        return Err(HarnessError::Empty);
    }
    let preds = predictions(groups)?;
    let mut per_group = Vec::new();
    let mut skipped = 0;
    for (gi, (g, p)) in groups.iter().zip(&preds).enumerate() {
        if g.members.len() < 2 {
            return Err(HarnessError::GroupTooSmall { group: gi, size: g.members.len(), min: 2 });
        }
        let mos: Vec<f64> = g.members.iter().map(|m| m.mos(target)).collect();
        let pair = PairedScores::new(p, &mos)?;
        match (metrics::plcc(pair), metrics::srocc(pair)) {
            (Ok(plcc), Ok(srocc)) => per_group.push(GroupCorrelation { group: gi, plcc, srocc }),
            (Err(MetricError::Undefined), _) | (_, Err(MetricError::Undefined)) => skipped += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        }
    }
    let plcc: Vec<f64> = per_group.iter().map(|c| c.plcc).collect();
    let srocc: Vec<f64> = per_group.iter().map(|c| c.srocc).collect();
    let (Some(plcc), Some(srocc)) = (Summary::of(&plcc), Summary::of(&srocc)) else {
        return Err(HarnessError::AllDegenerate);
    };
    Ok(WithinGroupReport { target, per_group, skipped, plcc, srocc })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    pub(crate) fn group(tq: &[f64], oq: &[f64], pred: &[f64]) -> GroupRecord {
        GroupRecord {
            generator: "g".into(),
            prompt: "p".into(),
            members: tq
                .iter()
                .zip(oq)
                .zip(pred)
                .enumerate()
                .map(|(i, ((&t, &o), &p))| Member { id: format!("m{i}"), tq_mos: t, oq_mos: o, predicted: Some(p) })
                .collect(),
        }
    }

    #[test]
    fn perfect_and_inverted_predictions() {
        let a = [1.0, 2.5, 3.0, 4.0, 2.0];
        let b = [4.0, 1.0, 3.5, 2.0, 0.5];
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let gs = vec![group(&a, &a, &a), group(&b, &b, &b)];
        let r = within_group_corr(&gs, Target::Tq).unwrap();
        assert_eq!(r.srocc.mean, 1.0);
        assert_eq!(r.srocc.std, 0.0);
        let gs = vec![group(&a, &a, &neg(&a)), group(&b, &b, &neg(&b))];
        assert_eq!(within_group_corr(&gs, Target::Tq).unwrap().srocc.mean, -1.0);
    }

    #[test]
    fn hand_ranked_groups() {
        // group 1: one adjacent swap, d² sum 2 → 1 − 12/120 = 0.9
        // group 2: reversed → −1
        let g1 = group(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], &[2.0, 1.0, 3.0, 4.0, 5.0]);
        let g2 = group(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], &[5.0, 4.0, 3.0, 2.0, 1.0]);
        let r = within_group_corr(&[g1, g2], Target::Tq).unwrap();
        assert!((r.srocc.mean - (-0.05)).abs() < 1e-12);
        assert!((r.per_group[0].srocc - 0.9).abs() < 1e-12);
    }

    #[test]
    fn degenerate_groups_are_skipped() {
        let ok = group(&[1.0, 2.0, 3.0], &[0.0; 3], &[1.0, 2.0, 3.0]);
        let flat = group(&[2.0, 2.0, 2.0], &[0.0; 3], &[1.0, 2.0, 3.0]);
        let r = within_group_corr(&[ok, flat.clone()], Target::Tq).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.per_group.len(), 1);
        assert_eq!(within_group_corr(&[flat], Target::Tq), Err(HarnessError::AllDegenerate));
    }

    #[test]
    fn missing_score_is_an_error() {
        let mut g = group(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]);
        g.members[1].predicted = None;
        assert_eq!(within_group_corr(&[g], Target::Oq), Err(HarnessError::MissingScore { group: 0, member: 1 }));
    }
}
