use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{load_dataset, Dataset};
use super::{classify_frame, compute_metrics, FrameOutcome, MetricsReport, OutcomeKind};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::raster::{GrayImage, Roi};
use crate::synth::GroundTruthRecord;
use crate::tracker::{track_step_report, StepReport, TrackerState};

/// Per-frame result of a benchmark or tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub outcome: Option<OutcomeKind>,
    pub target: Option<crate::fit::Ellipse>,
    /// Scale the result was obtained at.
    pub scale: usize,
    /// Region searched; `None` for the full frame.
    pub roi: Option<Roi>,
    pub elapsed_ms: f64,
}

impl FrameRecord {
    pub fn from_step(frame_index: usize, step: &StepReport, frame_roi: Roi, elapsed_ms: f64) -> Self {
        Self {
            frame_index,
            outcome: None,
            target: step.target,
            scale: step.processed_scale,
            roi: (step.region != frame_roi).then_some(step.region),
            elapsed_ms,
        }
    }

    /// CSV row matching [`FRAMES_CSV_HEADER`], without a newline.
    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{}", self.frame_index, u8::from(self.target.is_some()));
        match &self.target {
            Some(e) => write!(s, ",{:.3},{:.3},{:.3},{:.3},{:.5}", e.cx, e.cy, e.a, e.b, e.theta).unwrap(),
            None => s.push_str(",,,,,"),
        }
        write!(s, ",{}", self.scale).unwrap();
        match &self.roi {
            Some(r) => write!(s, ",{},{},{},{}", r.x, r.y, r.width, r.height).unwrap(),
            None => s.push_str(",,,,"),
        }
        write!(s, ",{:.3}", self.elapsed_ms).unwrap();
        if let Some(o) = self.outcome {
            write!(s, ",{}", o.short()).unwrap();
        }
        s
    }
}

pub const FRAMES_CSV_HEADER: &str = "frame_index,found,cx,cy,a,b,theta,scale,roi_x,roi_y,roi_w,roi_h,ms_elapsed";

pub fn write_frames_csv(records: &[FrameRecord], path: &Path) -> Result<()> {
    let with_outcome = records.iter().any(|r| r.outcome.is_some());
    let mut out = String::from(FRAMES_CSV_HEADER);
    if with_outcome {
        out.push_str(",outcome");
    }
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: MetricsReport,
    pub frames: Vec<FrameRecord>,
}

/// Replays `frames` through the tracker in order. Only [`track_step_report`]
/// is timed.
pub fn run_benchmark_on(
    frames: &[GrayImage],
    truth: &[GroundTruthRecord],
    sequence_starts: &[usize],
    cfg: &PipelineConfig,
) -> Result<BenchmarkRun> {
    if frames.len() != truth.len() {
        return Err(Error::DatasetFormat(format!(
            "{} frames but {} ground-truth records",
            frames.len(),
            truth.len()
        )));
    }
    run_with(frames.len(), |i| Ok(frames[i].clone()), truth, sequence_starts, cfg)
}

fn run_with(
    n: usize,
    mut frame: impl FnMut(usize) -> Result<GrayImage>,
    truth: &[GroundTruthRecord],
    sequence_starts: &[usize],
    cfg: &PipelineConfig,
) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let mut state = TrackerState::default();
    let mut outcomes = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let img = frame(i)?;
        if cfg.tracker.reset_on_sequence && sequence_starts.binary_search(&i).is_ok() {
            state = TrackerState::default();
        }
        let start = Instant::now();
        let step = track_step_report(&state, &img, &cfg.tracker)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        state = step.state;
        let kind = classify_frame(step.target.as_ref(), Some(&truth[i]), cfg.match_iou);
        outcomes.push(FrameOutcome {
            kind,
            elapsed_ms: ms,
            detection: step.target,
            truth: truth[i].ellipse.filter(|_| truth[i].target_present),
        });
        let mut rec = FrameRecord::from_step(truth[i].frame_index, &step, Roi::full(img.bounds()), ms);
        rec.outcome = Some(kind);
        records.push(rec);
    }
    Ok(BenchmarkRun {
        report: compute_metrics(&outcomes)?,
        frames: records,
    })
}

/// Benchmarks a dataset directory, loading frames one at a time.
pub fn run_benchmark(dataset: &Path, cfg: &PipelineConfig) -> Result<BenchmarkRun> {
    let ds = load_dataset(dataset)?;
    run_dataset(&ds, cfg)
}

fn run_dataset(ds: &Dataset, cfg: &PipelineConfig) -> Result<BenchmarkRun> {
    if ds.is_empty() {
        return Err(Error::DatasetFormat(format!("{} holds no frames", ds.root.display())));
    }
    run_with(ds.len(), |i| ds.load_frame(i), &ds.truth, &ds.sequence_starts, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    ContourOverlap,
    EllipseOverlap,
}

impl SweepParam {
    /// Sets the swept value and the fixed value in both modes.
    pub fn apply(&self, cfg: &mut PipelineConfig, value: f64, fixed_other: f64) {
        for t in [&mut cfg.tracker.detect_thresholds, &mut cfg.tracker.track_thresholds] {
            match self {
                SweepParam::ContourOverlap => {
                    t.contour_overlap = value;
                    t.ellipse_overlap = fixed_other;
                }
                SweepParam::EllipseOverlap => {
                    t.ellipse_overlap = value;
                    t.contour_overlap = fixed_other;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: MetricsReport,
}

pub const SWEEP_CSV_HEADER: &str = "value,accuracy,precision,recall,f1,TP,TN,FP,FN,WD,avg_ms";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        let r = &self.report;
        let c = &r.counts;
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{:.3}",
            self.value, r.accuracy, r.precision, r.recall, r.f1, c.tp, c.tn, c.fp, c.fn_, c.wd, r.avg_ms
        )
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One benchmark per value over frames already in memory; points run in
/// parallel, each with its own tracker.
pub fn sweep_parameter_on(
    frames: &[GrayImage],
    truth: &[GroundTruthRecord],
    sequence_starts: &[usize],
    base: &PipelineConfig,
    param: SweepParam,
    values: &[f64],
    fixed_other: f64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().chain([&fixed_other]).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("sweep values must lie in [0, 1], got {v}")));
    }
    values
        .par_iter()
        .map(|&value| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, value, fixed_other);
            let run = run_benchmark_on(frames, truth, sequence_starts, &cfg)?;
            Ok(SweepRow {
                value,
                report: run.report,
            })
        })
        .collect()
}

pub fn sweep_parameter(
    dataset: &Path,
    base: &PipelineConfig,
    param: SweepParam,
    values: &[f64],
    fixed_other: f64,
) -> Result<Vec<SweepRow>> {
    let ds = load_dataset(dataset)?;
    let frames = ds.load_all()?;
    sweep_parameter_on(&frames, &ds.truth, &ds.sequence_starts, base, param, values, fixed_other)
}
