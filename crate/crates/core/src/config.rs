//! Flat `key = value` configuration files.
//!
//! ```text
//! # thresholds shared by both modes
//! mnAxSize = 5
//! ContourOverlap.detection = 0.95
//! ContourOverlap.tracking = 0.7
//! maxScale = 100
//! ```
//!
//! An unsuffixed threshold key applies to both detection and tracking; a
//! `.detection` or `.tracking` suffix overrides one mode.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::DetectionThresholds;
use crate::edges::CannyParams;
use crate::error::{Error, Result};
use crate::tracker::{RetryThresholds, TrackerConfig};

/// Parsed key/value pairs in file order; later duplicates win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    path: PathBuf::new(),
                    message: format!("line {}: expected key = value, got {raw:?}", lineno + 1),
                });
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config {
                    path: PathBuf::new(),
                    message: format!("line {}: empty key", lineno + 1),
                });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { message, .. } => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config {
                path: PathBuf::new(),
                message: format!("{key}: expected {what}, got {v:?}"),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parsed(key, "a number")
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.parsed(key, "true or false")
    }
}

const THRESHOLD_KEYS: [&str; 6] = [
    "ContourOverlap",
    "EllipseOverlap",
    "mnAxSize",
    "mxAxSize",
    "maxAxisRatio",
    "minContourSize",
];

const OTHER_KEYS: [&str; 11] = [
    "maxScale",
    "minTargetSize",
    "maxTargetSize",
    "roiExpandFactor",
    "concentricTolerance",
    "retryThresholds",
    "CannyLow",
    "CannyHigh",
    "CannySigma",
    "matchIou",
    "resetOnSequence",
];

/// Everything a benchmark or tracking run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub match_iou: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            match_iou: 0.8,
        }
    }
}

impl PipelineConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        for key in kv.keys() {
            let base = key
                .strip_suffix(".detection")
                .or_else(|| key.strip_suffix(".tracking"))
                .unwrap_or(key);
            let known = THRESHOLD_KEYS.contains(&base) || (base == key && OTHER_KEYS.contains(&key));
            if !known {
                return Err(Error::Config {
                    path: PathBuf::new(),
                    message: format!("unknown key {key:?}"),
                });
            }
        }
        let mut cfg = Self::default();
        let t = &mut cfg.tracker;
        t.detect_thresholds.apply_keys(kv, None)?;
        t.track_thresholds.apply_keys(kv, None)?;
        t.detect_thresholds.apply_keys(kv, Some("detection"))?;
        t.track_thresholds.apply_keys(kv, Some("tracking"))?;
        if let Some(v) = kv.get_usize("maxScale")? {
            t.max_scale = v;
        }
        if let Some(v) = kv.get_f64("minTargetSize")? {
            t.min_target_size = v;
        }
        if let Some(v) = kv.get_f64("maxTargetSize")? {
            t.max_target_size = v;
        }
        if let Some(v) = kv.get_f64("roiExpandFactor")? {
            t.roi_expand_factor = v;
        }
        if let Some(v) = kv.get_f64("concentricTolerance")? {
            t.concentric_tolerance = v;
        }
        if let Some(v) = kv.get("retryThresholds") {
            t.retry_thresholds = match v {
                "current" => RetryThresholds::CurrentMode,
                "detection" => RetryThresholds::Detection,
                other => {
                    return Err(Error::Config {
                        path: PathBuf::new(),
                        message: format!("retryThresholds: expected current or detection, got {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = kv.get_bool("resetOnSequence")? {
            t.reset_on_sequence = v;
        }
        let c = &mut t.canny;
        if let Some(v) = kv.get_f64("CannyLow")? {
            c.low_threshold = v;
        }
        if let Some(v) = kv.get_f64("CannyHigh")? {
            c.high_threshold = v;
        }
        if let Some(v) = kv.get_f64("CannySigma")? {
            c.gaussian_sigma = v;
        }
        if let Some(v) = kv.get_f64("matchIou")? {
            cfg.match_iou = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path)?;
        Self::from_kv(&kv).map_err(|e| match e {
            Error::Config { message, .. } => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        if !(self.match_iou > 0.0 && self.match_iou < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "matchIou must lie in (0, 1), got {}",
                self.match_iou
            )));
        }
        Ok(())
    }

    /// Serializes back to the key=value format with per-mode keys.
    pub fn to_kv_string(&self) -> String {
        let t = &self.tracker;
        let mut out = String::new();
        let mut mode = |suffix: &str, d: &DetectionThresholds| {
            out.push_str(&format!("ContourOverlap.{suffix} = {}\n", d.contour_overlap));
            out.push_str(&format!("EllipseOverlap.{suffix} = {}\n", d.ellipse_overlap));
            out.push_str(&format!("mnAxSize.{suffix} = {}\n", d.min_axis_size));
            out.push_str(&format!("mxAxSize.{suffix} = {}\n", d.max_axis_size));
            out.push_str(&format!("maxAxisRatio.{suffix} = {}\n", d.max_axis_ratio));
            out.push_str(&format!("minContourSize.{suffix} = {}\n", d.min_contour_size));
        };
        mode("detection", &t.detect_thresholds);
        mode("tracking", &t.track_thresholds);
        let CannyParams {
            low_threshold,
            high_threshold,
            gaussian_sigma,
        } = t.canny;
        let retry = match t.retry_thresholds {
            RetryThresholds::CurrentMode => "current",
            RetryThresholds::Detection => "detection",
        };
        out.push_str(&format!(
            "maxScale = {}\nminTargetSize = {}\nmaxTargetSize = {}\nroiExpandFactor = {}\n\
             concentricTolerance = {}\nretryThresholds = {retry}\nresetOnSequence = {}\n\
             CannyLow = {low_threshold}\nCannyHigh = {high_threshold}\nCannySigma = {gaussian_sigma}\n\
             matchIou = {}\n",
            t.max_scale,
            t.min_target_size,
            t.max_target_size,
            t.roi_expand_factor,
            t.concentric_tolerance,
            t.reset_on_sequence,
            self.match_iou
        ));
        out
    }
}
