//! Detection and tracking of elliptical ring markers in grayscale video.
//!
//! The pipeline runs Canny edges, border following and a direct least-squares
//! ellipse fit per contour, then rejects fits by size, axis ratio and two
//! overlap scores. [`tracker::track_step`] wraps detection in a state machine
//! that narrows the search to a region around the last target and adapts the
//! processing scale to the target's size.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod detector;
pub mod edges;
pub mod error;
pub mod eval;
pub mod fit;
pub mod raster;
pub mod synth;
pub mod tracker;

pub use config::{KeyValues, PipelineConfig};
pub use detector::{detect_ellipses, group_concentric, DetectionThresholds, FrameWindow, ScoredEllipse};
pub use edges::{detect_edges, extract_contours, CannyParams, Contour};
pub use error::{Error, FitError, Result};
pub use fit::{fit_ellipse, Ellipse};
pub use raster::{BinaryImage, Bounds, GrayImage, PixelPoint, Roi};
pub use tracker::{track_step, TrackerConfig, TrackerState};
