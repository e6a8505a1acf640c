//! Edge map and contour extraction feeding the detector.

mod canny;
mod contours;

pub use canny::{detect_edges, CannyParams};
pub use contours::{extract_contours, BorderKind, Contour};
