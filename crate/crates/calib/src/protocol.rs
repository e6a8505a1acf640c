//! JSON messages exchanged over the websocket.
//!
//! Client to server:
//!
//! ```json
//! {"type": "update", "id": 7, "ContourOverlap": 0.9, "scope": "detection"}
//! {"type": "snapshot"}
//! ```
//!
//! Server to client: `frame`, `ack`, `error` and `snapshot` messages, see
//! [`ServerMessage`].

use ringtrack::tracker::TrackerMode;
use ringtrack::{CannyParams, DetectionThresholds, Ellipse, Roi, ScoredEllipse, TrackerConfig};
use serde::{Deserialize, Serialize};

/// Thresholds under the config-file key names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    #[serde(rename = "ContourOverlap")]
    pub contour_overlap: f64,
    #[serde(rename = "EllipseOverlap")]
    pub ellipse_overlap: f64,
    #[serde(rename = "mnAxSize")]
    pub min_axis_size: f64,
    #[serde(rename = "mxAxSize")]
    pub max_axis_size: f64,
    #[serde(rename = "maxAxisRatio")]
    pub max_axis_ratio: f64,
    #[serde(rename = "minContourSize")]
    pub min_contour_size: usize,
}

impl From<DetectionThresholds> for ThresholdSet {
    fn from(t: DetectionThresholds) -> Self {
        Self {
            contour_overlap: t.contour_overlap,
            ellipse_overlap: t.ellipse_overlap,
            min_axis_size: t.min_axis_size,
            max_axis_size: t.max_axis_size,
            max_axis_ratio: t.max_axis_ratio,
            min_contour_size: t.min_contour_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannySet {
    #[serde(rename = "CannyLow")]
    pub low: f64,
    #[serde(rename = "CannyHigh")]
    pub high: f64,
    #[serde(rename = "CannySigma")]
    pub sigma: f64,
}

impl From<CannyParams> for CannySet {
    fn from(c: CannyParams) -> Self {
        Self {
            low: c.low_threshold,
            high: c.high_threshold,
            sigma: c.gaussian_sigma,
        }
    }
}

/// Effective parameters, echoed in every frame annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub detection: ThresholdSet,
    pub tracking: ThresholdSet,
    pub canny: CannySet,
    pub mode: TrackerMode,
}

impl From<&TrackerConfig> for Params {
    fn from(c: &TrackerConfig) -> Self {
        Self {
            detection: c.detect_thresholds.into(),
            tracking: c.track_thresholds.into(),
            canny: c.canny.into(),
            mode: c.mode,
        }
    }
}

/// Which threshold set an update touches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Both,
    Detection,
    Tracking,
}

/// Partial parameter change; absent fields keep their value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default)]
    pub scope: Scope,
    #[serde(rename = "ContourOverlap", default, skip_serializing_if = "Option::is_none")]
    pub contour_overlap: Option<f64>,
    #[serde(rename = "EllipseOverlap", default, skip_serializing_if = "Option::is_none")]
    pub ellipse_overlap: Option<f64>,
    #[serde(rename = "mnAxSize", default, skip_serializing_if = "Option::is_none")]
    pub min_axis_size: Option<f64>,
    #[serde(rename = "mxAxSize", default, skip_serializing_if = "Option::is_none")]
    pub max_axis_size: Option<f64>,
    #[serde(rename = "maxAxisRatio", default, skip_serializing_if = "Option::is_none")]
    pub max_axis_ratio: Option<f64>,
    #[serde(rename = "minContourSize", default, skip_serializing_if = "Option::is_none")]
    pub min_contour_size: Option<usize>,
    #[serde(rename = "CannyLow", default, skip_serializing_if = "Option::is_none")]
    pub canny_low: Option<f64>,
    #[serde(rename = "CannyHigh", default, skip_serializing_if = "Option::is_none")]
    pub canny_high: Option<f64>,
    #[serde(rename = "CannySigma", default, skip_serializing_if = "Option::is_none")]
    pub canny_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TrackerMode>,
}

impl ParamUpdate {
    /// Returns `cfg` with the update applied, or the validation error.
    pub fn apply_to(&self, cfg: &TrackerConfig) -> Result<TrackerConfig, String> {
        let mut next = *cfg;
        let targets: &mut [&mut DetectionThresholds] = match self.scope {
            Scope::Both => &mut [&mut next.detect_thresholds, &mut next.track_thresholds],
            Scope::Detection => &mut [&mut next.detect_thresholds],
            Scope::Tracking => &mut [&mut next.track_thresholds],
        };
        for t in targets.iter_mut() {
            if let Some(v) = self.contour_overlap {
                t.contour_overlap = v;
            }
            if let Some(v) = self.ellipse_overlap {
                t.ellipse_overlap = v;
            }
            if let Some(v) = self.min_axis_size {
                t.min_axis_size = v;
            }
            if let Some(v) = self.max_axis_size {
                t.max_axis_size = v;
            }
            if let Some(v) = self.max_axis_ratio {
                t.max_axis_ratio = v;
            }
            if let Some(v) = self.min_contour_size {
                t.min_contour_size = v;
            }
        }
        if let Some(v) = self.canny_low {
            next.canny.low_threshold = v;
        }
        if let Some(v) = self.canny_high {
            next.canny.high_threshold = v;
        }
        if let Some(v) = self.canny_sigma {
            next.canny.gaussian_sigma = v;
        }
        if let Some(m) = self.mode {
            next.mode = m;
        }
        next.validate().map_err(|e| e.to_string())?;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Update(ParamUpdate),
    Snapshot,
}

impl ClientMessage {
    /// Parses one text frame; the error text is sent back to the client.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
        let obj = value.as_object_mut().ok_or("message must be a JSON object")?;
        let kind = obj.remove("type").ok_or("missing \"type\"")?;
        match kind.as_str() {
            Some("update") => serde_json::from_value(value)
                .map(ClientMessage::Update)
                .map_err(|e| format!("invalid update: {e}")),
            Some("snapshot") if obj.is_empty() => Ok(ClientMessage::Snapshot),
            Some("snapshot") => Err("snapshot takes no fields".into()),
            _ => Err(format!("unknown message type {kind}")),
        }
    }

    /// Correlation id of an update, if the client sent one.
    pub fn id_hint(text: &str) -> Option<u64> {
        serde_json::from_str::<serde_json::Value>(text).ok()?.get("id")?.as_u64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub ellipse: Ellipse,
    pub contour_overlap_score: f64,
    pub ellipse_overlap_score: f64,
}

impl From<&ScoredEllipse> for Detection {
    fn from(d: &ScoredEllipse) -> Self {
        Self {
            ellipse: d.ellipse,
            contour_overlap_score: d.contour_overlap_score,
            ellipse_overlap_score: d.ellipse_overlap_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame_index: u64,
    /// Position of the frame in the source.
    pub source_index: usize,
    /// Milliseconds since the Unix epoch when processing finished.
    pub timestamp_ms: u64,
    /// Full-frame coordinates; the selected target is one of them.
    pub detections: Vec<Detection>,
    pub selected_target: Option<Ellipse>,
    /// Divisor the frame was processed at.
    pub scale: usize,
    /// Region searched; absent for the full frame.
    pub roi: Option<Roi>,
    pub elapsed_ms: f64,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame {
        index: u64,
        png_b64: String,
        annotation: FrameAnnotation,
    },
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        /// First frame index processed with the new parameters.
        applies_from: u64,
        params: Params,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
    Snapshot {
        params: Params,
        frames_processed: u64,
    },
}
