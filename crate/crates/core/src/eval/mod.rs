//! Scoring tracker output against ground truth.

mod bench;
mod dataset;

pub use bench::{
    run_benchmark, run_benchmark_on, sweep_parameter, sweep_parameter_on, write_frames_csv, write_sweep_csv,
    BenchmarkRun, FrameRecord, SweepParam, SweepRow, FRAMES_CSV_HEADER, SWEEP_CSV_HEADER,
};
pub use dataset::{list_frames, load_dataset, load_dataset_with, natural_cmp, ColumnMap, Dataset, COLUMN_MAP_FILE};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::Ellipse;
use crate::synth::GroundTruthRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeKind {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
    WrongDetection,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 5] = [
        OutcomeKind::TruePositive,
        OutcomeKind::TrueNegative,
        OutcomeKind::FalsePositive,
        OutcomeKind::FalseNegative,
        OutcomeKind::WrongDetection,
    ];

    pub fn short(&self) -> &'static str {
        match self {
            OutcomeKind::TruePositive => "TP",
            OutcomeKind::TrueNegative => "TN",
            OutcomeKind::FalsePositive => "FP",
            OutcomeKind::FalseNegative => "FN",
            OutcomeKind::WrongDetection => "WD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub kind: OutcomeKind,
    pub elapsed_ms: f64,
    pub detection: Option<Ellipse>,
    pub truth: Option<Ellipse>,
}

/// Intersection over union of two filled ellipses, counted on the integer
/// pixel grid of the unclipped plane.
pub fn filled_iou(p: &Ellipse, q: &Ellipse) -> f64 {
    let span = |e: &Ellipse| {
        let (hx, hy) = e.half_extents();
        (
            (e.cx - hx).floor() as i64,
            (e.cy - hy).floor() as i64,
            (e.cx + hx).ceil() as i64,
            (e.cy + hy).ceil() as i64,
        )
    };
    let count = |e: &Ellipse, other: Option<&Ellipse>| {
        let (x0, y0, x1, y1) = span(e);
        let mut n = 0usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (fx, fy) = (x as f64, y as f64);
                if e.normalized_radius_sq(fx, fy) <= 1.0 && other.is_none_or(|o| o.normalized_radius_sq(fx, fy) <= 1.0) {
                    n += 1;
                }
            }
        }
        n
    };
    if !(p.a > 0.0 && p.b > 0.0 && q.a > 0.0 && q.b > 0.0) {
        return 0.0;
    }
    let (ax0, ay0, ax1, ay1) = span(p);
    let (bx0, by0, bx1, by1) = span(q);
    let na = count(p, None);
    let nb = count(q, None);
    let disjoint = ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0;
    // Scan the smaller ellipse for the intersection.
    let inter = if disjoint {
        0
    } else if na <= nb {
        count(p, Some(q))
    } else {
        count(q, Some(p))
    };
    let union = na + nb - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn classify_frame(detection: Option<&Ellipse>, truth: Option<&GroundTruthRecord>, match_iou: f64) -> OutcomeKind {
    let truth = truth.filter(|t| t.target_present).and_then(|t| t.ellipse.as_ref());
    match (detection, truth) {
        (None, None) => OutcomeKind::TrueNegative,
        (Some(_), None) => OutcomeKind::FalsePositive,
        (None, Some(_)) => OutcomeKind::FalseNegative,
        (Some(d), Some(t)) => {
            if filled_iou(d, t) >= match_iou {
                OutcomeKind::TruePositive
            } else {
                OutcomeKind::WrongDetection
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub wd: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, kind: OutcomeKind) {
        match kind {
            OutcomeKind::TruePositive => self.tp += 1,
            OutcomeKind::TrueNegative => self.tn += 1,
            OutcomeKind::FalsePositive => self.fp += 1,
            OutcomeKind::FalseNegative => self.fn_ += 1,
            OutcomeKind::WrongDetection => self.wd += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_ + self.wd
    }

    /// Frames with a target where something was reported.
    pub fn positive_detections(&self) -> usize {
        self.tp + self.wd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingBucket {
    pub count: usize,
    pub avg_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: OutcomeCounts,
    pub n_all: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Keyed by TP, TN, FP, FN, WD; kinds that never occurred are absent.
    pub timing: BTreeMap<String, TimingBucket>,
    pub avg_ms: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(outcomes: &[FrameOutcome]) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = OutcomeCounts::default();
    let mut timing: BTreeMap<String, TimingBucket> = BTreeMap::new();
    // Sort the times per kind so the sums do not depend on input order.
    let mut times: BTreeMap<OutcomeKind, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        counts.add(o.kind);
        times.entry(o.kind).or_default().push(o.elapsed_ms);
    }
    let mut all: Vec<f64> = outcomes.iter().map(|o| o.elapsed_ms).collect();
    all.sort_by(f64::total_cmp);
    for (kind, mut ts) in times {
        ts.sort_by(f64::total_cmp);
        timing.insert(
            kind.short().to_string(),
            TimingBucket {
                count: ts.len(),
                avg_ms: ts.iter().sum::<f64>() / ts.len() as f64,
                max_ms: *ts.last().expect("non-empty"),
                min_ms: ts[0],
            },
        );
    }
    let n_all = outcomes.len();
    let c = counts;
    let precision = ratio(c.tp, c.tp + c.fp + c.wd);
    let recall = ratio(c.tp, c.tp + c.fn_ + c.wd);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        counts,
        n_all,
        accuracy: ratio(c.tp + c.tn, n_all),
        precision,
        recall,
        f1,
        timing,
        avg_ms: all.iter().sum::<f64>() / n_all as f64,
    })
}
