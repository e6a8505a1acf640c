//! Per-frame ellipse detection: fit an ellipse to every contour and keep only
//! the fits that survive the size, axis and overlap gates.

use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::edges::{detect_edges, extract_contours, CannyParams, Contour};
use crate::error::{Error, Result};
use crate::fit::{fit_ellipse, Ellipse};
use crate::raster::{
    dilate, perimeter_pixels_in, rasterize_ellipse_perimeter, BinaryImage, Bounds, GrayImage, PixelPoint,
};

/// Rejection thresholds of the detection cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionThresholds {
    /// Minimum fraction of contour pixels on the fitted ellipse.
    pub contour_overlap: f64,
    /// Minimum fraction of in-frame ellipse pixels on the edge map.
    pub ellipse_overlap: f64,
    /// Smallest accepted full minor axis, pixels.
    pub min_axis_size: f64,
    /// Largest accepted full major axis, pixels.
    pub max_axis_size: f64,
    /// Largest accepted major/minor ratio.
    pub max_axis_ratio: f64,
    /// Contours with fewer points are skipped.
    pub min_contour_size: usize,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self::detection()
    }
}

impl DetectionThresholds {
    /// Strict values used while no target is being tracked.
    pub const fn detection() -> Self {
        Self {
            contour_overlap: 0.95,
            ellipse_overlap: 0.95,
            min_axis_size: 5.0,
            max_axis_size: 700.0,
            max_axis_ratio: 5.0,
            min_contour_size: 50,
        }
    }

    /// Relaxed values used once a target has been acquired.
    pub const fn tracking() -> Self {
        Self {
            contour_overlap: 0.7,
            ellipse_overlap: 0.3,
            ..Self::detection()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ratio = |v: f64| (0.0..=1.0).contains(&v);
        if !ratio(self.contour_overlap) || !ratio(self.ellipse_overlap) {
            return Err(Error::InvalidParameter(format!(
                "overlap thresholds must lie in [0, 1], got {} / {}",
                self.contour_overlap, self.ellipse_overlap
            )));
        }
        if !(self.min_axis_size >= 0.0) || !(self.min_axis_size <= self.max_axis_size) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= mnAxSize <= mxAxSize, got {} / {}",
                self.min_axis_size, self.max_axis_size
            )));
        }
        if !(self.max_axis_ratio >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "maxAxisRatio must be >= 1, got {}",
                self.max_axis_ratio
            )));
        }
        Ok(())
    }

    /// Pixel-sized thresholds for an image downscaled by `divisor`. Ratios and
    /// the axis cap are unchanged.
    pub fn scaled(&self, divisor: usize) -> Self {
        let d = divisor.max(1);
        Self {
            min_axis_size: self.min_axis_size / d as f64,
            min_contour_size: self.min_contour_size / d,
            ..*self
        }
    }

    /// Overrides fields from `ContourOverlap`, `EllipseOverlap`, `mnAxSize`,
    /// `mxAxSize`, `maxAxisRatio` and `minContourSize` keys, each optionally
    /// suffixed (`ContourOverlap.tracking`).
    pub fn apply_keys(&mut self, kv: &KeyValues, suffix: Option<&str>) -> Result<()> {
        let key = |name: &str| match suffix {
            Some(s) => format!("{name}.{s}"),
            None => name.to_string(),
        };
        if let Some(v) = kv.get_f64(&key("ContourOverlap"))? {
            self.contour_overlap = v;
        }
        if let Some(v) = kv.get_f64(&key("EllipseOverlap"))? {
            self.ellipse_overlap = v;
        }
        if let Some(v) = kv.get_f64(&key("mnAxSize"))? {
            self.min_axis_size = v;
        }
        if let Some(v) = kv.get_f64(&key("mxAxSize"))? {
            self.max_axis_size = v;
        }
        if let Some(v) = kv.get_f64(&key("maxAxisRatio"))? {
            self.max_axis_ratio = v;
        }
        if let Some(v) = kv.get_usize(&key("minContourSize"))? {
            self.min_contour_size = v;
        }
        Ok(())
    }

    /// Reads a flat key=value thresholds file.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut t = Self::detection();
        t.apply_keys(kv, None)?;
        t.validate()?;
        Ok(t)
    }
}

/// An accepted ellipse with the overlap scores it passed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEllipse {
    pub ellipse: Ellipse,
    pub contour_overlap_score: f64,
    pub ellipse_overlap_score: f64,
    pub source_contour_index: usize,
}

/// Which gate stopped a contour. Useful for calibration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    ContourSize,
    FitFailed,
    MaxAxis,
    MinAxis,
    AxisRatio,
    ContourOverlap,
    EllipseOverlap,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub contours: usize,
    pub contour_size: usize,
    pub fit_failed: usize,
    pub max_axis: usize,
    pub min_axis: usize,
    pub axis_ratio: usize,
    pub contour_overlap: usize,
    pub ellipse_overlap: usize,
    pub accepted: usize,
}

impl DetectionStats {
    fn record(&mut self, r: Rejection) {
        match r {
            Rejection::ContourSize => self.contour_size += 1,
            Rejection::FitFailed => self.fit_failed += 1,
            Rejection::MaxAxis => self.max_axis += 1,
            Rejection::MinAxis => self.min_axis += 1,
            Rejection::AxisRatio => self.axis_ratio += 1,
            Rejection::ContourOverlap => self.contour_overlap += 1,
            Rejection::EllipseOverlap => self.ellipse_overlap += 1,
        }
    }
}

/// Fraction of `contour` points lying on the once-dilated perimeter raster of
/// `ellipse` (clipped to `clip`). Points are counted with multiplicity.
pub fn contour_overlap(contour: &Contour, ellipse: &Ellipse, clip: Bounds) -> f64 {
    if contour.points.is_empty() {
        return 0.0;
    }
    let perimeter = rasterize_ellipse_perimeter(ellipse, clip);
    contour_overlap_with_raster(contour, &perimeter)
}

fn contour_overlap_with_raster(contour: &Contour, perimeter: &[PixelPoint]) -> f64 {
    let pts = &contour.points;
    if pts.is_empty() || perimeter.is_empty() {
        return 0.0;
    }
    // Local bitmap over the contour's bounding box.
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let w = x1 - x0 + 1;
    let h = y1 - y0 + 1;
    let mut hit = vec![false; w * h];
    for q in perimeter {
        let (qx, qy) = (q.x as i64, q.y as i64);
        if qx + 1 < x0 as i64 || qy + 1 < y0 as i64 || qx > x1 as i64 + 1 || qy > y1 as i64 + 1 {
            continue;
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                let lx = qx + dx - x0 as i64;
                let ly = qy + dy - y0 as i64;
                if lx >= 0 && ly >= 0 && (lx as usize) < w && (ly as usize) < h {
                    hit[ly as usize * w + lx as usize] = true;
                }
            }
        }
    }
    let on = pts
        .iter()
        .filter(|p| hit[(p.y - y0) * w + (p.x - x0)])
        .count();
    on as f64 / pts.len() as f64
}

/// Extent of the camera frame in the coordinates of the image being
/// searched, half-open. For a crop at `(rx, ry)` of a `w x h` frame this is
/// `[-rx, w - rx) x [-ry, h - ry)`. Perimeter pixels inside the window but
/// outside the searched image count as unmatched in [`ellipse_overlap`], so a
/// crop edge does not pass for the frame border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameWindow {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl FrameWindow {
    pub fn of(bounds: Bounds) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: bounds.width as i64,
            y1: bounds.height as i64,
        }
    }

    /// Window of the frame `frame` seen from a crop with origin `(x, y)`.
    pub fn around_crop(frame: Bounds, x: usize, y: usize) -> Self {
        Self {
            x0: -(x as i64),
            y0: -(y as i64),
            x1: frame.width as i64 - x as i64,
            y1: frame.height as i64 - y as i64,
        }
    }

    /// Same window after downscaling by `divisor`, rounded outwards.
    pub fn downscaled(&self, divisor: usize) -> Self {
        let d = divisor.max(1) as i64;
        Self {
            x0: self.x0.div_euclid(d),
            y0: self.y0.div_euclid(d),
            x1: -(-self.x1).div_euclid(d),
            y1: -(-self.y1).div_euclid(d),
        }
    }
}

/// Fraction of the in-frame perimeter raster of `ellipse` lying on the
/// once-dilated `edges`; 0 when no perimeter pixel is inside the frame.
pub fn ellipse_overlap(ellipse: &Ellipse, edges: &BinaryImage) -> f64 {
    ellipse_overlap_dilated(ellipse, &dilate(edges))
}

/// As [`ellipse_overlap`] with the dilation already applied.
pub fn ellipse_overlap_dilated(ellipse: &Ellipse, dilated_edges: &BinaryImage) -> f64 {
    ellipse_overlap_in_window(ellipse, dilated_edges, FrameWindow::of(dilated_edges.bounds()))
}

/// As [`ellipse_overlap_dilated`] with the denominator taken over `window`.
pub fn ellipse_overlap_in_window(ellipse: &Ellipse, dilated_edges: &BinaryImage, window: FrameWindow) -> f64 {
    let pts = perimeter_pixels_in(ellipse, window.x0, window.y0, window.x1, window.y1);
    if pts.is_empty() {
        return 0.0;
    }
    let hits = pts
        .iter()
        .filter(|&&(x, y)| dilated_edges.get_signed(x, y))
        .count();
    hits as f64 / pts.len() as f64
}

/// Runs the full cascade on one frame.
pub fn detect_ellipses(
    frame: &GrayImage,
    thresholds: &DetectionThresholds,
    canny: &CannyParams,
) -> Result<Vec<ScoredEllipse>> {
    Ok(detect_ellipses_with_stats(frame, thresholds, canny, None)?.0)
}

/// As [`detect_ellipses`] on a crop of a larger frame described by `window`
/// (the image itself when `None`), also returning per-gate rejection counts.
pub fn detect_ellipses_with_stats(
    frame: &GrayImage,
    thresholds: &DetectionThresholds,
    canny: &CannyParams,
    window: Option<FrameWindow>,
) -> Result<(Vec<ScoredEllipse>, DetectionStats)> {
    let edges = detect_edges(frame, canny)?;
    Ok(detect_in_edge_map(&edges, thresholds, window))
}

/// Cascade over a precomputed edge map.
pub fn detect_in_edge_map(
    edges: &BinaryImage,
    thresholds: &DetectionThresholds,
    window: Option<FrameWindow>,
) -> (Vec<ScoredEllipse>, DetectionStats) {
    let window = window.unwrap_or(FrameWindow::of(edges.bounds()));
    let contours = extract_contours(edges);
    let dilated = dilate(edges);
    let mut stats = DetectionStats {
        contours: contours.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for (index, contour) in contours.iter().enumerate() {
        match evaluate_contour(contour, &dilated, window, thresholds) {
            Ok((ellipse, co, eo)) => {
                stats.accepted += 1;
                out.push(ScoredEllipse {
                    ellipse,
                    contour_overlap_score: co,
                    ellipse_overlap_score: eo,
                    source_contour_index: index,
                });
            }
            Err(r) => stats.record(r),
        }
    }
    (out, stats)
}

/// Applies the gates to one contour in order; cheap gates run before any
/// rasterization.
pub fn evaluate_contour(
    contour: &Contour,
    dilated_edges: &BinaryImage,
    window: FrameWindow,
    t: &DetectionThresholds,
) -> std::result::Result<(Ellipse, f64, f64), Rejection> {
    if contour.points.len() < t.min_contour_size {
        return Err(Rejection::ContourSize);
    }
    let ellipse = fit_ellipse(&contour.points).map_err(|_| Rejection::FitFailed)?;
    if ellipse.major_axis() > t.max_axis_size {
        return Err(Rejection::MaxAxis);
    }
    if ellipse.minor_axis() < t.min_axis_size {
        return Err(Rejection::MinAxis);
    }
    if ellipse.axis_ratio() > t.max_axis_ratio {
        return Err(Rejection::AxisRatio);
    }
    let perimeter = rasterize_ellipse_perimeter(&ellipse, dilated_edges.bounds());
    let co = contour_overlap_with_raster(contour, &perimeter);
    if co < t.contour_overlap {
        return Err(Rejection::ContourOverlap);
    }
    let eo = ellipse_overlap_in_window(&ellipse, dilated_edges, window);
    if eo < t.ellipse_overlap {
        return Err(Rejection::EllipseOverlap);
    }
    Ok((ellipse, co, eo))
}

/// Groups detections whose centers are pairwise within `center_tolerance`.
///
/// When at least one group holds two or more ellipses only such groups are
/// returned; otherwise every detection comes back as its own group.
pub fn group_concentric(detections: &[ScoredEllipse], center_tolerance: f64) -> Vec<Vec<ScoredEllipse>> {
    let mut groups: Vec<Vec<ScoredEllipse>> = Vec::new();
    for d in detections {
        let slot = groups.iter_mut().find(|g| {
            g.iter()
                .all(|m| m.ellipse.center_distance(&d.ellipse) <= center_tolerance)
        });
        match slot {
            Some(g) => g.push(*d),
            None => groups.push(vec![*d]),
        }
    }
    if groups.iter().any(|g| g.len() >= 2) {
        groups.retain(|g| g.len() >= 2);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::BorderKind;
    use crate::raster::PixelPoint;

    fn contour_of(points: Vec<PixelPoint>) -> Contour {
        Contour {
            points,
            is_closed: false,
            kind: BorderKind::Outer,
            parent: None,
        }
    }

    fn scored(cx: f64, cy: f64, r: f64, eo: f64, idx: usize) -> ScoredEllipse {
        ScoredEllipse {
            ellipse: Ellipse::circle(cx, cy, r),
            contour_overlap_score: 1.0,
            ellipse_overlap_score: eo,
            source_contour_index: idx,
        }
    }

    #[test]
    fn crop_edge_does_not_count_as_frame_border() {
        // Circle centered on the top edge of a 100x60 crop taken at y = 40.
        let e = Ellipse::circle(50.0, 0.0, 20.0);
        let mut edges = BinaryImage::new(100, 60);
        for p in rasterize_ellipse_perimeter(&e, edges.bounds()) {
            edges.set(p.x, p.y, true);
        }
        let dilated = dilate(&edges);
        let as_frame = ellipse_overlap_dilated(&e, &dilated);
        assert!(as_frame > 0.99, "{as_frame}");
        let w = FrameWindow::around_crop(Bounds::new(100, 200), 0, 40);
        let in_crop = ellipse_overlap_in_window(&e, &dilated, w);
        assert!((in_crop - 0.5).abs() < 0.05, "{in_crop}");
        assert_eq!(ellipse_overlap_in_window(&e, &dilated, FrameWindow::of(dilated.bounds())), as_frame);
    }

    #[test]
    fn window_downscale_rounds_outwards() {
        let w = FrameWindow { x0: -5, y0: -8, x1: 13, y1: 16 };
        assert_eq!(w.downscaled(4), FrameWindow { x0: -2, y0: -2, x1: 4, y1: 4 });
        assert_eq!(w.downscaled(1), w);
    }

    #[test]
    fn contour_overlap_self() {
        let e = Ellipse::new(60.0, 50.0, 30.0, 18.0, 0.4);
        let b = Bounds::new(120, 100);
        let c = contour_of(rasterize_ellipse_perimeter(&e, b));
        assert!(contour_overlap(&c, &e, b) >= 0.99);
    }

    #[test]
    fn contour_overlap_half_on_ellipse() {
        let e = Ellipse::new(60.0, 50.0, 30.0, 18.0, 0.4);
        let b = Bounds::new(300, 100);
        let mut pts = rasterize_ellipse_perimeter(&e, b);
        let n = pts.len();
        pts.extend((0..n).map(|i| PixelPoint::new(200 + i % 80, 5 + i / 80)));
        let c = contour_of(pts);
        // Oracle: count by direct distance to the dilated raster.
        let raster = rasterize_ellipse_perimeter(&e, b);
        let on = c
            .points
            .iter()
            .filter(|p| raster.iter().any(|q| p.x.abs_diff(q.x) <= 1 && p.y.abs_diff(q.y) <= 1))
            .count();
        let expected = on as f64 / c.points.len() as f64;
        let got = contour_overlap(&c, &e, b);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.5).abs() <= 0.02, "{got}");
    }

    #[test]
    fn contour_overlap_disjoint() {
        let e = Ellipse::circle(20.0, 20.0, 10.0);
        let c = contour_of((0..30).map(|i| PixelPoint::new(60 + i, 60)).collect());
        assert_eq!(contour_overlap(&c, &e, Bounds::new(100, 100)), 0.0);
    }

    #[test]
    fn ellipse_overlap_cases() {
        let b = Bounds::new(100, 100);
        let e = Ellipse::circle(50.0, 50.0, 25.0);
        let own = BinaryImage::from_fn(100, 100, {
            let r = rasterize_ellipse_perimeter(&e, b);
            move |x, y| r.binary_search_by_key(&(y, x), |p| (p.y, p.x)).is_ok()
        });
        assert_eq!(ellipse_overlap(&e, &dilate(&own)), 1.0);
        assert_eq!(ellipse_overlap(&e, &BinaryImage::new(100, 100)), 0.0);
    }

    #[test]
    fn ellipse_overlap_half_arc() {
        let b = Bounds::new(100, 100);
        let e = Ellipse::circle(50.0, 50.0, 30.0);
        // Edges: samples of the arc with parametric angle in [0, pi).
        let mut mask = BinaryImage::new(100, 100);
        let steps = 2000;
        for i in 0..steps {
            let t = std::f64::consts::PI * i as f64 / steps as f64;
            let (x, y) = e.point_at(t);
            mask.set(x.round() as usize, y.round() as usize, true);
        }
        let got = ellipse_overlap(&e, &mask);
        assert!((got - 0.5).abs() <= 0.03, "{got}");
        let _ = b;
    }

    #[test]
    fn grouping_examples() {
        let two = [scored(100.0, 100.0, 30.0, 1.0, 0), scored(100.5, 100.5, 20.0, 1.0, 1)];
        let g = group_concentric(&two, 5.0);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].len(), 2);

        let three = [
            scored(100.0, 100.0, 30.0, 1.0, 0),
            scored(101.0, 100.0, 20.0, 1.0, 1),
            scored(300.0, 50.0, 20.0, 1.0, 2),
        ];
        let g = group_concentric(&three, 5.0);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].len(), 2);
        assert!(g[0].iter().all(|d| d.source_contour_index != 2));

        let apart = [
            scored(10.0, 10.0, 5.0, 1.0, 0),
            scored(100.0, 10.0, 5.0, 1.0, 1),
            scored(10.0, 100.0, 5.0, 1.0, 2),
        ];
        assert_eq!(group_concentric(&apart, 5.0).len(), 3);
        assert!(group_concentric(&[], 5.0).is_empty());
    }

    #[test]
    fn thresholds_validate_and_scale() {
        assert!(DetectionThresholds::detection().validate().is_ok());
        let bad = DetectionThresholds {
            contour_overlap: 1.5,
            ..DetectionThresholds::detection()
        };
        assert!(bad.validate().is_err());
        let s = DetectionThresholds::detection().scaled(2);
        assert_eq!(s.min_contour_size, 25);
        assert_eq!(s.min_axis_size, 2.5);
        assert_eq!(s.max_axis_size, 700.0);
        assert_eq!(s.contour_overlap, 0.95);
    }
}
