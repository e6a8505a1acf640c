//! Per-stream tracking state machine.
//!
//! While no target is known every frame is searched in full with strict
//! thresholds. Once a target is found the next frame is searched only inside
//! an expanded box around it, with relaxed thresholds, on an image downscaled
//! by a power of two that follows the target's apparent size.

use serde::{Deserialize, Serialize};

use crate::detector::{detect_ellipses_with_stats, group_concentric, DetectionThresholds, FrameWindow, ScoredEllipse};
use crate::edges::CannyParams;
use crate::error::{Error, Result};
use crate::fit::Ellipse;
use crate::raster::{extract_roi, scale_image, Bounds, GrayImage, Roi};

/// Which thresholds the single not-found retry uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryThresholds {
    /// Same thresholds as the first attempt.
    #[default]
    CurrentMode,
    /// The strict detection thresholds.
    Detection,
}

/// Threshold selection override, mostly for interactive calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerMode {
    #[default]
    Auto,
    /// Always search the full frame with detection thresholds.
    Detect,
    /// Always use tracking thresholds.
    Track,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub detect_thresholds: DetectionThresholds,
    pub track_thresholds: DetectionThresholds,
    pub canny: CannyParams,
    /// Upper bound on the divisor; the effective cap is the largest power of
    /// two not above it.
    pub max_scale: usize,
    /// Major axis at processing scale below which the scale halves.
    pub min_target_size: f64,
    /// Major axis at processing scale above which the scale doubles.
    pub max_target_size: f64,
    pub roi_expand_factor: f64,
    /// Concentric grouping tolerance at processing scale, pixels.
    pub concentric_tolerance: f64,
    pub retry_thresholds: RetryThresholds,
    pub mode: TrackerMode,
    /// Reset the state at declared dataset sequence boundaries.
    pub reset_on_sequence: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            detect_thresholds: DetectionThresholds::detection(),
            track_thresholds: DetectionThresholds::tracking(),
            canny: CannyParams::default(),
            max_scale: 100,
            min_target_size: 50.0,
            max_target_size: 160.0,
            roi_expand_factor: 2.0,
            concentric_tolerance: 5.0,
            retry_thresholds: RetryThresholds::CurrentMode,
            mode: TrackerMode::Auto,
            reset_on_sequence: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.detect_thresholds.validate()?;
        self.track_thresholds.validate()?;
        self.canny.validate()?;
        if self.max_scale < 1 {
            return Err(Error::InvalidParameter("maxScale must be >= 1".into()));
        }
        if !(self.roi_expand_factor >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "roiExpandFactor must be >= 1, got {}",
                self.roi_expand_factor
            )));
        }
        if !(self.min_target_size >= 0.0 && self.min_target_size < self.max_target_size) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= minTargetSize < maxTargetSize, got {} / {}",
                self.min_target_size, self.max_target_size
            )));
        }
        if !(self.concentric_tolerance >= 0.0) {
            return Err(Error::InvalidParameter("concentricTolerance must be >= 0".into()));
        }
        Ok(())
    }

    /// Largest power of two not exceeding `max_scale`.
    pub fn effective_max_scale(&self) -> usize {
        let m = self.max_scale.max(1);
        1 << (usize::BITS - 1 - m.leading_zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub is_tracking: bool,
    pub scale: usize,
    pub roi: Option<Roi>,
    pub last_target: Option<Ellipse>,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            is_tracking: false,
            scale: 1,
            roi: None,
            last_target: None,
        }
    }
}

/// Thresholds for the current mode.
pub fn determine_params(cfg: &TrackerConfig, is_tracking: bool) -> DetectionThresholds {
    match cfg.mode {
        TrackerMode::Detect => cfg.detect_thresholds,
        TrackerMode::Track => cfg.track_thresholds,
        TrackerMode::Auto if is_tracking => cfg.track_thresholds,
        TrackerMode::Auto => cfg.detect_thresholds,
    }
}

/// Result of one detection attempt, in the coordinates of the image passed
/// to [`detect_target`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetSearch {
    pub target: Option<ScoredEllipse>,
    /// Every detection that passed the gates, rescaled.
    pub detections: Vec<ScoredEllipse>,
    /// Divisor actually applied; smaller than requested for tiny images.
    pub divisor: usize,
}

/// Detects on `image` downscaled by `scale` and returns ellipses rescaled to
/// `image` coordinates. `last_target` is in the same coordinates.
/// `frame_window` places `image` inside a larger frame, as for
/// [`detect_ellipses_with_stats`]; `None` when `image` is the whole frame.
#[allow(clippy::too_many_arguments)]
pub fn detect_target(
    image: &GrayImage,
    scale: usize,
    thresholds: &DetectionThresholds,
    canny: &CannyParams,
    concentric_tolerance: f64,
    last_target: Option<&Ellipse>,
    frame_window: Option<FrameWindow>,
) -> Result<TargetSearch> {
    if scale == 0 || !scale.is_power_of_two() {
        return Err(Error::InvalidScale {
            divisor: scale,
            width: image.width(),
            height: image.height(),
        });
    }
    // Keep at least a 3x3 image after downscaling.
    let mut divisor = scale;
    while divisor > 1 && (image.width() / divisor < 3 || image.height() / divisor < 3) {
        divisor /= 2;
    }
    if image.width() < 3 || image.height() < 3 {
        return Ok(TargetSearch {
            divisor,
            ..Default::default()
        });
    }
    let small = scale_image(image, divisor)?;
    let window = frame_window.map(|w| w.downscaled(divisor));
    let (found, _) = detect_ellipses_with_stats(&small, &thresholds.scaled(divisor), canny, window)?;
    let groups = group_concentric(&found, concentric_tolerance);
    let restore = |d: &ScoredEllipse| ScoredEllipse {
        ellipse: d.ellipse.upscaled(divisor),
        ..*d
    };
    let groups: Vec<Vec<ScoredEllipse>> = groups
        .iter()
        .map(|g| g.iter().map(restore).collect())
        .collect();
    let target = select_target(&groups, last_target);
    Ok(TargetSearch {
        target,
        detections: found.iter().map(restore).collect(),
        divisor,
    })
}

/// Picks the group with the highest summed ellipse overlap, preferring
/// groups of two or more and breaking ties by distance to `last_target`, and
/// returns its largest member.
pub fn select_target(groups: &[Vec<ScoredEllipse>], last_target: Option<&Ellipse>) -> Option<ScoredEllipse> {
    const TIE: f64 = 1e-9;
    let prefer_pairs = groups.iter().any(|g| g.len() >= 2);
    let outermost = |g: &[ScoredEllipse]| {
        g.iter()
            .copied()
            .max_by(|a, b| a.ellipse.area().total_cmp(&b.ellipse.area()))
    };
    let mut best: Option<(f64, f64, ScoredEllipse)> = None;
    for g in groups {
        if g.is_empty() || (prefer_pairs && g.len() < 2) {
            continue;
        }
        let Some(outer) = outermost(g) else { continue };
        let score: f64 = g.iter().map(|d| d.ellipse_overlap_score).sum();
        let dist = last_target.map_or(0.0, |t| t.center_distance(&outer.ellipse));
        let better = match &best {
            None => true,
            Some((s, d, _)) => score > s + TIE || ((score - s).abs() <= TIE && dist < *d),
        };
        if better {
            best = Some((score, dist, outer));
        }
    }
    best.map(|(_, _, e)| e)
}

/// Moves an ellipse found inside `roi` into full-frame coordinates.
pub fn compensate_offset(target: &Ellipse, roi: Option<&Roi>) -> Ellipse {
    match roi {
        Some(r) => target.translated(r.x as f64, r.y as f64),
        None => *target,
    }
}

/// Axis-aligned bounding box of `target` expanded by `factor` about its
/// center and clamped to the frame.
pub fn calculate_roi(target: &Ellipse, frame: Bounds, factor: f64) -> Option<Roi> {
    let (hx, hy) = target.half_extents();
    let (hx, hy) = (hx * factor, hy * factor);
    Roi::from_span_clamped(
        (target.cx - hx).floor() as i64,
        (target.cy - hy).floor() as i64,
        (target.cx + hx).ceil() as i64,
        (target.cy + hy).ceil() as i64,
        frame,
    )
}

/// Everything observed during one [`track_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub target: Option<Ellipse>,
    pub state: TrackerState,
    /// Detections of the last attempt, full-frame coordinates.
    pub detections: Vec<ScoredEllipse>,
    /// Selected detection with its scores, full-frame coordinates.
    pub selected: Option<ScoredEllipse>,
    /// Region searched this frame.
    pub region: Roi,
    /// Scale of the attempt that produced the result.
    pub processed_scale: usize,
    pub retried: bool,
}

/// Advances the tracker by one frame; returns the full-frame target and the
/// next state.
pub fn track_step(state: &TrackerState, frame: &GrayImage, cfg: &TrackerConfig) -> Result<(Option<Ellipse>, TrackerState)> {
    let r = track_step_report(state, frame, cfg)?;
    Ok((r.target, r.state))
}

pub fn track_step_report(state: &TrackerState, frame: &GrayImage, cfg: &TrackerConfig) -> Result<StepReport> {
    cfg.validate()?;
    let bounds = frame.bounds();
    let max_scale = cfg.effective_max_scale();
    let mut scale = state.scale.clamp(1, max_scale);
    if !scale.is_power_of_two() {
        scale = 1 << (usize::BITS - 1 - scale.leading_zeros());
    }
    let tracking = state.is_tracking && cfg.mode != TrackerMode::Detect;
    let roi = if tracking { state.roi.and_then(|r| r.clamp_to(bounds)) } else { None };
    let region = roi.unwrap_or(Roi::full(bounds));
    let local = match &roi {
        Some(r) => extract_roi(frame, r)?,
        None => frame.clone(),
    };
    let last_local = state
        .last_target
        .map(|t| t.translated(-(region.x as f64), -(region.y as f64)));
    let thresholds = determine_params(cfg, tracking);
    let tol = cfg.concentric_tolerance;
    let window = roi.map(|r| FrameWindow::around_crop(bounds, r.x, r.y));

    let mut search = detect_target(&local, scale, &thresholds, &cfg.canny, tol, last_local.as_ref(), window)?;
    let mut retried = false;
    if search.target.is_none() && scale > 1 {
        scale /= 2;
        retried = true;
        let retry_thresholds = match cfg.retry_thresholds {
            RetryThresholds::CurrentMode => thresholds,
            RetryThresholds::Detection => cfg.detect_thresholds,
        };
        search = detect_target(&local, scale, &retry_thresholds, &cfg.canny, tol, last_local.as_ref(), window)?;
    }
    let processed_scale = scale;

    if let Some(t) = &search.target {
        if !retried {
            let major = t.ellipse.major_axis() / search.divisor as f64;
            if major > cfg.max_target_size && scale < max_scale {
                scale *= 2;
            } else if major < cfg.min_target_size && scale > 1 {
                scale /= 2;
            }
        }
    }

    let to_frame = |d: &ScoredEllipse| ScoredEllipse {
        ellipse: compensate_offset(&d.ellipse, roi.as_ref()),
        ..*d
    };
    let selected = search.target.as_ref().map(to_frame);
    let detections = search.detections.iter().map(to_frame).collect();
    let target = selected.map(|s| s.ellipse);
    let next_roi = target.and_then(|t| calculate_roi(&t, bounds, cfg.roi_expand_factor));
    let next = TrackerState {
        is_tracking: next_roi.is_some(),
        scale,
        roi: next_roi,
        last_target: if next_roi.is_some() { target } else { None },
    };
    Ok(StepReport {
        target,
        state: next,
        detections,
        selected,
        region,
        processed_scale,
        retried,
    })
}
