//! Evaluation and selection reports, written as JSON and as CSV tables.

use antiqa_core::harness::decompose::Decomposition;
use antiqa_core::harness::{SelectionReport, WithinGroupReport};
use antiqa_core::metrics::Correlation;
use serde::{Deserialize, Serialize};

use crate::manifest::Split;
use crate::scores::Level;

pub const EVAL_SCHEMA: &str = "antiqa-eval/1";
pub const SELECT_SCHEMA: &str = "antiqa-select/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCorrelation {
    pub target: String,
    pub n: usize,
    pub correlation: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub method: String,
    pub level: Level,
    pub split: Option<Split>,
    /// Labelled records without a score.
    pub missing: usize,
    /// Whether the scores file carried a matching config hash.
    pub config_verified: bool,
    pub targets: Vec<TargetCorrelation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_group: Option<WithinGroupReport>,
}

impl EvalReport {
    /// One row per target: method, level, split, target, n, plcc, srocc.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "level", "split", "target", "n", "plcc", "srocc"]).unwrap();
        let level = match self.level {
            Level::Crop => "crop",
            Level::Image => "image",
        };
        let split = self.split.map_or("all", Split::name);
        for t in &self.targets {
            w.write_record([
                self.method.as_str(),
                level,
                split,
                t.target.as_str(),
                &t.n.to_string(),
                &format!("{:.6}", t.correlation.plcc),
                &format!("{:.6}", t.correlation.srocc),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub schema: String,
    pub method: String,
    pub split: Option<Split>,
    pub groups: usize,
    pub images: usize,
    pub config_verified: bool,
    pub selection: SelectionReport,
    pub within_group_tq: Option<WithinGroupReport>,
    pub decomposition: Decomposition,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |g| format!("{:.2}", 100.0 * g))
}

impl SelectReport {
    /// Random, method and Oracle rows with mean TQ/OQ MOS and gap closed in percent.
    pub fn to_csv(&self) -> String {
        let s = &self.selection;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "tq_mos", "tq_gap_closed_pct", "oq_mos", "oq_gap_closed_pct"]).unwrap();
        let f = |x: f64| format!("{x:.4}");
        w.write_record(["random", &f(s.random.tq), "0.00", &f(s.random.oq), "0.00"]).unwrap();
        w.write_record([
            self.method.as_str(),
            &f(s.method.tq),
            &opt(s.gap_closed_tq),
            &f(s.method.oq),
            &opt(s.gap_closed_oq),
        ])
        .unwrap();
        w.write_record(["oracle_tq", &f(s.oracle_tq), "100.00", "", ""]).unwrap();
        w.write_record(["oracle_oq", "", "", &f(s.oracle_oq), "100.00"]).unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}
