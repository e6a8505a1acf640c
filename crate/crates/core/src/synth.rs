//! Synthetic ring-marker sequences with exact ground truth.
//!
//! A scene is a dark elliptical ring on a light background following a
//! keyframed trajectory, plus optional distractor shapes drawn behind it,
//! occluders and attachments drawn over it, a linear illumination ramp and
//! additive Gaussian noise. Rendering is deterministic per (scene, seed,
//! frame index).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::Ellipse;
use crate::raster::{io, perimeter_pixels_in, Bounds, GrayImage};

/// Half-open range of frame indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub const fn all() -> Self {
        Self::new(0, usize::MAX)
    }

    pub fn contains(&self, f: usize) -> bool {
        f >= self.start && f < self.end
    }
}

/// Ring geometry: `outer` bounds the ring, the inner border has both semi-axes
/// reduced by `stroke`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub outer: Ellipse,
    pub stroke: f64,
}

impl Ring {
    pub fn inner(&self) -> Ellipse {
        Ellipse {
            a: self.outer.a - self.stroke,
            b: self.outer.b - self.stroke,
            ..self.outer
        }
    }
}

/// Target state at a keyframe; `None` means no target from this frame until
/// the next keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub ring: Option<Ring>,
}

/// Coordinates of a layer's shape. With `Target` the point `(u, v)` maps to
/// `center + R(theta) * (u * a, v * b)` of the current outer ellipse, so the
/// shape moves with the ring; widths stay in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Frame,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Convex polygon.
    Polygon(Vec<(f64, f64)>),
    /// Thick straight segment with round caps.
    Segment { from: (f64, f64), to: (f64, f64), width: f64 },
    /// Thick arc of a circle-like ring from `start` over `sweep` radians.
    Arc { ellipse: Ellipse, start: f64, sweep: f64, width: f64 },
}

/// How a shape is painted: `Hard` replaces pixels inside it; `Soft` blends
/// toward `intensity` with weight `strength / (1 + exp(d / feather))`, where
/// `d` is the signed distance to the shape outline (negative inside).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Paint {
    Hard { intensity: u8 },
    Soft { intensity: u8, feather: f64, strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Drawn before the ring.
    Distractor,
    /// Drawn over the ring and counted against visibility.
    Occluder,
    /// Drawn over the ring, not counted against visibility.
    Attachment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub frames: FrameRange,
    pub role: Role,
    pub anchor: Anchor,
    pub shape: Shape,
    pub paint: Paint,
}

/// Additive linear intensity ramp `gx * (x - w/2) + gy * (y - h/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub frames: FrameRange,
    pub gx: f64,
    pub gy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    /// Sorted by frame; linear interpolation between consecutive present
    /// keyframes, hold after the last one.
    pub keyframes: Vec<Keyframe>,
    pub foreground: u8,
    pub background: u8,
    pub noise_sigma: f64,
    pub layers: Vec<Layer>,
    pub ramps: Vec<Ramp>,
}

impl SceneSpec {
    /// Empty 640x360 scene without target.
    pub fn blank(n_frames: usize) -> Self {
        Self {
            width: 640,
            height: 360,
            n_frames,
            keyframes: Vec::new(),
            foreground: 40,
            background: 200,
            noise_sigma: 0.0,
            layers: Vec::new(),
            ramps: Vec::new(),
        }
    }

    /// One static ring for every frame.
    pub fn single_ring(ring: Ring, n_frames: usize) -> Self {
        Self {
            keyframes: vec![Keyframe { frame: 0, ring: Some(ring) }],
            ..Self::blank(n_frames)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("frame dimensions must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidSpec("noise sigma must be non-negative".into()));
        }
        if self.keyframes.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::InvalidSpec("keyframes must be strictly increasing".into()));
        }
        for k in &self.keyframes {
            if let Some(r) = &k.ring {
                if !(r.stroke >= 1.0) {
                    return Err(Error::InvalidSpec(format!("frame {}: stroke must be >= 1", k.frame)));
                }
                if r.outer.b <= r.stroke {
                    return Err(Error::InvalidSpec(format!(
                        "frame {}: ring axes ({}, {}) not larger than stroke {}",
                        k.frame, r.outer.a, r.outer.b, r.stroke
                    )));
                }
            }
        }
        for l in &self.layers {
            if let Paint::Soft { feather, strength, .. } = l.paint {
                if !(feather > 0.0) || !(0.0..=1.0).contains(&strength) {
                    return Err(Error::InvalidSpec("soft paint needs feather > 0 and strength in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Ring at frame `f`, interpolated between keyframes.
    pub fn ring_at(&self, f: usize) -> Option<Ring> {
        let i = self.keyframes.iter().rposition(|k| k.frame <= f)?;
        let k0 = &self.keyframes[i];
        let r0 = k0.ring?;
        let Some(k1) = self.keyframes.get(i + 1) else {
            return Some(r0);
        };
        let Some(r1) = k1.ring else {
            return Some(r0);
        };
        let t = (f - k0.frame) as f64 / (k1.frame - k0.frame) as f64;
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        let (e0, e1) = (r0.outer, r1.outer);
        // Interpolate the raw parameters; callers keep a >= b along a segment.
        let outer = Ellipse {
            cx: lerp(e0.cx, e1.cx),
            cy: lerp(e0.cy, e1.cy),
            a: lerp(e0.a, e1.a),
            b: lerp(e0.b, e1.b),
            theta: lerp(e0.theta, e1.theta),
        };
        Some(Ring {
            outer: Ellipse::new(outer.cx, outer.cy, outer.a, outer.b, outer.theta),
            stroke: lerp(r0.stroke, r1.stroke),
        })
    }
}

/// Ground truth for one frame; the ellipse is the outer ring border.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame_index: usize,
    pub target_present: bool,
    pub ellipse: Option<Ellipse>,
    /// Fraction of the outer perimeter inside the frame and not occluded.
    pub visibility_fraction: f64,
}

struct Placed<'a> {
    layer: &'a Layer,
    shape: Shape,
}

fn map_point(p: (f64, f64), anchor: Anchor, target: Option<&Ellipse>) -> Option<(f64, f64)> {
    match anchor {
        Anchor::Frame => Some(p),
        Anchor::Target => {
            let e = target?;
            let (s, c) = e.theta.sin_cos();
            let (u, v) = (p.0 * e.a, p.1 * e.b);
            Some((e.cx + u * c - v * s, e.cy + u * s + v * c))
        }
    }
}

fn place(layer: &Layer, target: Option<&Ellipse>) -> Option<Shape> {
    let m = |p| map_point(p, layer.anchor, target);
    Some(match &layer.shape {
        Shape::Polygon(pts) => Shape::Polygon(pts.iter().map(|&p| m(p)).collect::<Option<Vec<_>>>()?),
        Shape::Segment { from, to, width } => Shape::Segment {
            from: m(*from)?,
            to: m(*to)?,
            width: *width,
        },
        Shape::Arc { ellipse, start, sweep, width } => {
            let (cx, cy) = m((ellipse.cx, ellipse.cy))?;
            let theta = match (layer.anchor, target) {
                (Anchor::Target, Some(t)) => ellipse.theta + t.theta,
                _ => ellipse.theta,
            };
            Shape::Arc {
                ellipse: Ellipse { cx, cy, theta, ..*ellipse },
                start: *start,
                sweep: *sweep,
                width: *width,
            }
        }
    })
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Signed distance to the outline, negative inside. Exact for segments,
/// a half-plane bound for polygons, approximate for elliptic arcs.
fn signed_distance(shape: &Shape, x: f64, y: f64) -> f64 {
    match shape {
        Shape::Polygon(pts) => {
            let n = pts.len();
            if n < 3 {
                return f64::INFINITY;
            }
            // Orientation-independent: flip sign for clockwise input.
            let area2: f64 = (0..n)
                .map(|i| {
                    let (p, q) = (pts[i], pts[(i + 1) % n]);
                    p.0 * q.1 - q.0 * p.1
                })
                .sum();
            let sign = if area2 >= 0.0 { 1.0 } else { -1.0 };
            (0..n)
                .map(|i| {
                    let (p, q) = (pts[i], pts[(i + 1) % n]);
                    let (ex, ey) = (q.0 - p.0, q.1 - p.1);
                    let len = ex.hypot(ey).max(1e-12);
                    // Outward normal for counter-clockwise (in math axes) order.
                    sign * ((x - p.0) * ey - (y - p.1) * ex) / len
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        Shape::Segment { from, to, width } => segment_distance((x, y), *from, *to) - width / 2.0,
        Shape::Arc { ellipse, start, sweep, width } => {
            let e = ellipse;
            let (s, c) = e.theta.sin_cos();
            let (dx, dy) = (x - e.cx, y - e.cy);
            let u = (dx * c + dy * s) / e.a;
            let v = (-dx * s + dy * c) / e.b;
            let t = v.atan2(u);
            let rel = (t - start).rem_euclid(std::f64::consts::TAU);
            let radial = (u.hypot(v) - 1.0).abs() * e.a.min(e.b);
            if rel <= *sweep {
                radial - width / 2.0
            } else {
                let end_pt = |tt: f64| e.point_at(tt);
                let d0 = {
                    let p = end_pt(*start);
                    (x - p.0).hypot(y - p.1)
                };
                let d1 = {
                    let p = end_pt(start + sweep);
                    (x - p.0).hypot(y - p.1)
                };
                d0.min(d1) - width / 2.0
            }
        }
    }
}

fn weight(paint: &Paint, d: f64) -> f64 {
    match *paint {
        Paint::Hard { .. } => {
            if d <= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Paint::Soft { feather, strength, .. } => strength / (1.0 + (d / feather).exp()),
    }
}

fn paint_intensity(paint: &Paint) -> f64 {
    match *paint {
        Paint::Hard { intensity } | Paint::Soft { intensity, .. } => intensity as f64,
    }
}

/// Pixel bounding box that can receive nonzero weight.
fn reach(shape: &Shape, paint: &Paint, bounds: Bounds) -> Option<(usize, usize, usize, usize)> {
    let pad = match paint {
        Paint::Hard { .. } => 1.0,
        Paint::Soft { feather, .. } => 12.0 * feather,
    };
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |x: f64, y: f64, r: f64| {
        x0 = x0.min(x - r);
        y0 = y0.min(y - r);
        x1 = x1.max(x + r);
        y1 = y1.max(y + r);
    };
    match shape {
        Shape::Polygon(pts) => pts.iter().for_each(|p| grow(p.0, p.1, 0.0)),
        Shape::Segment { from, to, width } => {
            grow(from.0, from.1, width / 2.0);
            grow(to.0, to.1, width / 2.0);
        }
        Shape::Arc { ellipse, width, .. } => {
            let (hx, hy) = ellipse.half_extents();
            grow(ellipse.cx - hx, ellipse.cy - hy, width / 2.0);
            grow(ellipse.cx + hx, ellipse.cy + hy, width / 2.0);
        }
    }
    let x0 = (x0 - pad).floor().max(0.0);
    let y0 = (y0 - pad).floor().max(0.0);
    let x1 = (x1 + pad).ceil().min(bounds.width as f64 - 1.0);
    let y1 = (y1 + pad).ceil().min(bounds.height as f64 - 1.0);
    if x1 < x0 || y1 < y0 {
        return None;
    }
    Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

fn draw(buf: &mut [f64], bounds: Bounds, placed: &Placed<'_>) {
    let paint = &placed.layer.paint;
    let Some((x0, y0, x1, y1)) = reach(&placed.shape, paint, bounds) else {
        return;
    };
    let target = paint_intensity(paint);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let w = weight(paint, signed_distance(&placed.shape, x as f64, y as f64));
            if w > 0.0 {
                let v = &mut buf[y * bounds.width + x];
                *v += (target - *v) * w;
            }
        }
    }
}

fn frame_seed(seed: u64, frame_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Renders one frame and its ground truth.
pub fn render_frame(spec: &SceneSpec, seed: u64, frame_index: usize) -> Result<(GrayImage, GroundTruthRecord)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let bounds = Bounds::new(w, h);
    let ring = spec.ring_at(frame_index);
    if let Some(r) = &ring {
        if r.outer.b <= r.stroke {
            return Err(Error::InvalidSpec(format!(
                "frame {frame_index}: ring axes smaller than stroke"
            )));
        }
    }
    let target = ring.map(|r| r.outer);
    let active: Vec<Placed<'_>> = spec
        .layers
        .iter()
        .filter(|l| l.frames.contains(frame_index))
        .filter_map(|l| {
            place(l, target.as_ref()).map(|shape| Placed { layer: l, shape })
        })
        .collect();

    let mut buf = vec![spec.background as f64; w * h];
    for p in active.iter().filter(|p| p.layer.role == Role::Distractor) {
        draw(&mut buf, bounds, p);
    }
    if let Some(r) = &ring {
        let outer = r.outer;
        let inner = r.inner();
        let (hx, hy) = outer.half_extents();
        let xs = ((outer.cx - hx).floor().max(0.0) as usize)..=((outer.cx + hx).ceil().min(w as f64 - 1.0).max(0.0) as usize);
        let ys = ((outer.cy - hy).floor().max(0.0) as usize)..=((outer.cy + hy).ceil().min(h as f64 - 1.0).max(0.0) as usize);
        for y in ys {
            for x in xs.clone() {
                let (fx, fy) = (x as f64, y as f64);
                if outer.normalized_radius_sq(fx, fy) <= 1.0 && inner.normalized_radius_sq(fx, fy) > 1.0 {
                    buf[y * w + x] = spec.foreground as f64;
                }
            }
        }
    }
    for p in active.iter().filter(|p| p.layer.role != Role::Distractor) {
        draw(&mut buf, bounds, p);
    }
    for ramp in spec.ramps.iter().filter(|r| r.frames.contains(frame_index)) {
        for y in 0..h {
            for x in 0..w {
                buf[y * w + x] += ramp.gx * (x as f64 - w as f64 / 2.0) + ramp.gy * (y as f64 - h as f64 / 2.0);
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, frame_index));
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        for v in buf.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let data = buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let img = GrayImage::new(w, h, data)?;

    let occluders: Vec<&Placed<'_>> = active.iter().filter(|p| p.layer.role == Role::Occluder).collect();
    let visibility_fraction = match &target {
        Some(e) => visibility(e, bounds, &occluders),
        None => 0.0,
    };
    Ok((
        img,
        GroundTruthRecord {
            frame_index,
            target_present: target.is_some(),
            ellipse: target,
            visibility_fraction,
        },
    ))
}

/// Fraction of perimeter sample pixels inside `bounds` with occluder weight
/// below one half.
fn visibility(e: &Ellipse, bounds: Bounds, occluders: &[&Placed<'_>]) -> f64 {
    let pixels = perimeter_pixels(e);
    if pixels.is_empty() {
        return 0.0;
    }
    let visible = pixels
        .iter()
        .filter(|&&(x, y)| bounds.contains(x, y))
        .filter(|&&(x, y)| {
            occluders
                .iter()
                .all(|p| weight(&p.layer.paint, signed_distance(&p.shape, x as f64, y as f64)) < 0.5)
        })
        .count();
    visible as f64 / pixels.len() as f64
}

/// Unclipped perimeter raster.
fn perimeter_pixels(e: &Ellipse) -> Vec<(i64, i64)> {
    const FAR: i64 = 1 << 40;
    perimeter_pixels_in(e, -FAR, -FAR, FAR, FAR)
}

/// File name of frame `i` in a generated sequence.
pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:05}.png")
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const GROUND_TRUTH_HEADER: &str = "frame_index,target_present,cx,cy,a,b,theta_rad,visibility_fraction";

/// One ground-truth CSV row without trailing newline.
pub fn ground_truth_row(r: &GroundTruthRecord) -> String {
    match &r.ellipse {
        Some(e) if r.target_present => format!(
            "{},1,{},{},{},{},{},{}",
            r.frame_index, e.cx, e.cy, e.a, e.b, e.theta, r.visibility_fraction
        ),
        _ => format!("{},0,,,,,,{}", r.frame_index, r.visibility_fraction),
    }
}

/// Writes `n_frames` PNG frames and `ground_truth.csv` into `dir`.
pub fn generate_sequence(spec: &SceneSpec, seed: u64, dir: &Path) -> Result<Vec<GroundTruthRecord>> {
    if spec.n_frames == 0 {
        return Err(Error::InvalidSpec("need at least one frame".into()));
    }
    spec.validate()?;
    fs::create_dir_all(dir)?;
    let rendered: Vec<Result<(GrayImage, GroundTruthRecord)>> = {
        use rayon::prelude::*;
        (0..spec.n_frames)
            .into_par_iter()
            .map(|i| render_frame(spec, seed, i))
            .collect()
    };
    let mut records = Vec::with_capacity(spec.n_frames);
    for (i, r) in rendered.into_iter().enumerate() {
        let (img, rec) = r?;
        io::save_png(&img, dir.join(frame_file_name(i)))?;
        records.push(rec);
    }
    let mut csv = fs::File::create(dir.join(GROUND_TRUTH_FILE))?;
    writeln!(csv, "{GROUND_TRUTH_HEADER}")?;
    for r in &records {
        writeln!(csv, "{}", ground_truth_row(r))?;
    }
    Ok(records)
}

/// Contour situations a target can appear in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Clean ring, one contour per border.
    FullRing,
    /// A bar attached to the ring merges into its inner border.
    Attached,
    /// A soft glare band splits each border into several contours.
    Broken,
    /// A soft occluder hides part of the ring.
    Occluded,
    /// The ring leaves and re-enters the frame.
    Border,
    /// Attached bar, glare band and frame border together.
    Combined,
}

impl Case {
    pub const ALL: [Case; 6] = [
        Case::FullRing,
        Case::Attached,
        Case::Broken,
        Case::Occluded,
        Case::Border,
        Case::Combined,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Case::FullRing => "a_full_ring",
            Case::Attached => "b_attached",
            Case::Broken => "c_broken",
            Case::Occluded => "d_occluded",
            Case::Border => "e_border",
            Case::Combined => "f_combined",
        }
    }
}

/// Labeled frame span of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub frames: FrameRange,
    pub label: String,
}

/// A scene plus the labels of its segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub scene: SceneSpec,
    pub segments: Vec<Segment>,
}

impl Corpus {
    pub fn write(&self, seed: u64, dir: &Path) -> Result<Vec<GroundTruthRecord>> {
        let records = generate_sequence(&self.scene, seed, dir)?;
        let mut f = fs::File::create(dir.join("segments.csv"))?;
        writeln!(f, "start,end,label")?;
        for s in &self.segments {
            writeln!(f, "{},{},{}", s.frames.start, s.frames.end, s.label)?;
        }
        Ok(records)
    }
}

const W: f64 = 640.0;
const H: f64 = 360.0;

fn ring(cx: f64, cy: f64, a: f64, b: f64, theta: f64, stroke: f64) -> Option<Ring> {
    Some(Ring {
        outer: Ellipse::new(cx, cy, a, b, theta),
        stroke,
    })
}

fn key(frame: usize, ring: Option<Ring>) -> Keyframe {
    Keyframe { frame, ring }
}

fn soft(intensity: u8, feather: f64) -> Paint {
    Paint::Soft {
        intensity,
        feather,
        strength: 1.0,
    }
}

fn rect(x: f64, y: f64, w: f64, h: f64) -> Shape {
    Shape::Polygon(vec![(x, y), (x + w, y), (x + w, y + h), (x, y + h)])
}

/// Shapes placed away from every trajectory of the standard corpus.
fn background_distractors(fg: u8) -> Vec<Layer> {
    let hard = Paint::Hard { intensity: fg };
    let layer = |shape| Layer {
        frames: FrameRange::all(),
        role: Role::Distractor,
        anchor: Anchor::Frame,
        shape,
        paint: hard,
    };
    vec![
        layer(rect(20.0, 20.0, 60.0, 26.0)),
        layer(Shape::Segment {
            from: (30.0, 330.0),
            to: (150.0, 300.0),
            width: 4.0,
        }),
        layer(Shape::Arc {
            ellipse: Ellipse::circle(575.0, 55.0, 32.0),
            start: 0.3,
            sweep: 2.6,
            width: 5.0,
        }),
    ]
}

/// Bar spanning the ring interior along the minor axis, touching the inner border.
fn attached_bar(frames: FrameRange, fg: u8) -> Layer {
    Layer {
        frames,
        role: Role::Attachment,
        anchor: Anchor::Target,
        shape: Shape::Segment {
            from: (0.0, -0.97),
            to: (0.0, 0.97),
            width: 5.0,
        },
        paint: Paint::Hard { intensity: fg },
    }
}

/// Soft band of background intensity through the ring center.
fn glare_band(frames: FrameRange, bg: u8, angle: f64) -> Layer {
    let (s, c) = angle.sin_cos();
    Layer {
        frames,
        role: Role::Occluder,
        anchor: Anchor::Target,
        shape: Shape::Segment {
            from: (-1.6 * c, -1.6 * s),
            to: (1.6 * c, 1.6 * s),
            width: 44.0,
        },
        paint: soft(bg, 8.0),
    }
}

/// Soft blob hiding the part of the ring around normalized point `(u, v)`.
fn soft_occluder(frames: FrameRange, bg: u8, u: f64, v: f64, half: f64) -> Layer {
    Layer {
        frames,
        role: Role::Occluder,
        anchor: Anchor::Target,
        shape: Shape::Polygon(vec![
            (u - half, v - half),
            (u + half, v - half),
            (u + half, v + half),
            (u - half, v + half),
        ]),
        paint: soft(bg, 8.0),
    }
}

/// The 200-frame evaluation corpus: 180 positive frames spanning every
/// [`Case`] plus a growing-target span, and 20 negative frames.
pub fn standard_corpus() -> Corpus {
    let fg = 40;
    let bg = 200;
    let st = 5.0;
    let keyframes = vec![
        key(0, None),
        // full ring under an illumination ramp
        key(10, ring(170.0, 180.0, 70.0, 50.0, 0.3, st)),
        // attached bar
        key(35, ring(240.0, 170.0, 68.0, 52.0, 0.6, st)),
        // glare band
        key(55, ring(300.0, 185.0, 72.0, 48.0, 0.9, st)),
        // occluded
        key(85, ring(420.0, 180.0, 70.0, 50.0, 1.2, st)),
        // right border crossing
        key(115, ring(450.0, 200.0, 70.0, 52.0, 0.2, st)),
        key(130, ring(615.0, 196.0, 70.0, 52.0, 0.25, st)),
        // combination near the bottom border
        key(145, ring(460.0, 200.0, 70.0, 50.0, 0.3, st)),
        key(157, ring(330.0, 300.0, 70.0, 50.0, 0.1, st)),
        key(169, ring(290.0, 305.0, 70.0, 50.0, 0.1, st)),
        key(170, None),
        // growing target under glare drives the scale ladder
        key(180, ring(320.0, 180.0, 60.0, 44.0, 0.4, 4.5)),
        key(199, ring(320.0, 180.0, 170.0, 124.0, 0.4, 12.0)),
    ];
    let mut layers = background_distractors(fg);
    layers.push(attached_bar(FrameRange::new(35, 55), fg));
    layers.push(glare_band(FrameRange::new(55, 85), bg, 0.4));
    layers.push(soft_occluder(FrameRange::new(85, 115), bg, 0.9, 0.6, 0.5));
    layers.push(attached_bar(FrameRange::new(145, 170), fg));
    layers.push(glare_band(FrameRange::new(145, 170), bg, 1.1));
    layers.push(glare_band(FrameRange::new(180, 200), bg, 1.1));
    let ramps = vec![Ramp {
        frames: FrameRange::new(10, 35),
        gx: 0.08,
        gy: 0.05,
    }];
    let scene = SceneSpec {
        width: W as usize,
        height: H as usize,
        n_frames: 200,
        keyframes,
        foreground: fg,
        background: bg,
        noise_sigma: 8.0,
        layers,
        ramps,
    };
    let seg = |s, e, label: &str| Segment {
        frames: FrameRange::new(s, e),
        label: label.to_string(),
    };
    Corpus {
        scene,
        segments: vec![
            seg(0, 10, "negative"),
            seg(10, 35, Case::FullRing.label()),
            seg(35, 55, Case::Attached.label()),
            seg(55, 85, Case::Broken.label()),
            seg(85, 115, Case::Occluded.label()),
            seg(115, 145, Case::Border.label()),
            seg(145, 170, Case::Combined.label()),
            seg(170, 180, "negative"),
            seg(180, 200, "growing"),
        ],
    }
}

/// Clean frames at the start of every case corpus, so a tracker can acquire
/// the target before the case's difficulty appears.
pub const CASE_LEAD_IN: usize = 3;

/// A short sequence exercising one case in isolation, after
/// [`CASE_LEAD_IN`] clean frames.
pub fn case_corpus(case: Case, n_frames: usize) -> Corpus {
    let fg = 40;
    let bg = 200;
    let n = n_frames.max(CASE_LEAD_IN + 2);
    let last = n - 1;
    let all = FrameRange::new(CASE_LEAD_IN, n);
    let (start, end) = match case {
        Case::Border => (ring(470.0, 180.0, 70.0, 50.0, 0.2, 5.0), ring(620.0, 180.0, 70.0, 50.0, 0.2, 5.0)),
        Case::Combined => (ring(320.0, 260.0, 70.0, 50.0, 0.1, 5.0), ring(320.0, 305.0, 70.0, 50.0, 0.1, 5.0)),
        _ => (ring(260.0, 170.0, 70.0, 50.0, 0.3, 5.0), ring(380.0, 190.0, 72.0, 48.0, 0.8, 5.0)),
    };
    let mut layers = background_distractors(fg);
    let mut ramps = Vec::new();
    match case {
        Case::FullRing => ramps.push(Ramp { frames: all, gx: 0.08, gy: 0.05 }),
        Case::Attached => layers.push(attached_bar(all, fg)),
        Case::Broken => {
            layers.push(glare_band(all, bg, 0.4));
        }
        Case::Occluded => layers.push(soft_occluder(all, bg, 0.9, 0.6, 0.5)),
        Case::Border => {}
        Case::Combined => {
            layers.push(attached_bar(all, fg));
            layers.push(glare_band(all, bg, 1.1));
        }
    }
    Corpus {
        scene: SceneSpec {
            n_frames: n,
            keyframes: vec![key(0, start), key(last, end)],
            noise_sigma: 8.0,
            layers,
            ramps,
            ..SceneSpec::blank(n)
        },
        segments: vec![
            Segment {
                frames: FrameRange::new(0, CASE_LEAD_IN),
                label: "lead_in".to_string(),
            },
            Segment {
                frames: all,
                label: case.label().to_string(),
            },
        ],
    }
}

/// Writes one sub-directory per case under `dir`.
pub fn write_case_corpora(dir: &Path, n_frames: usize, seed: u64) -> Result<()> {
    for case in Case::ALL {
        case_corpus(case, n_frames).write(seed, &dir.join(case.label()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_frame_is_background_and_distractors() {
        let mut spec = SceneSpec::blank(1);
        let (img, rec) = render_frame(&spec, 1, 0).unwrap();
        assert!(img.as_slice().iter().all(|&v| v == 200));
        assert!(!rec.target_present);
        assert!(rec.ellipse.is_none());
        spec.layers = background_distractors(40);
        let (img, _) = render_frame(&spec, 1, 0).unwrap();
        assert!(img.as_slice().contains(&40));
    }

    #[test]
    fn ring_pixels_lie_between_borders() {
        let r = Ring {
            outer: Ellipse::new(320.0, 180.0, 80.0, 50.0, 0.5),
            stroke: 8.0,
        };
        let (img, rec) = render_frame(&SceneSpec::single_ring(r, 1), 0, 0).unwrap();
        assert_eq!(rec.ellipse, Some(r.outer));
        assert_eq!(rec.visibility_fraction, 1.0);
        let inner = r.inner();
        for y in 0..360 {
            for x in 0..640 {
                let (fx, fy) = (x as f64, y as f64);
                let on = r.outer.normalized_radius_sq(fx, fy) <= 1.0 && inner.normalized_radius_sq(fx, fy) > 1.0;
                assert_eq!(img.get(x, y) == 40, on);
            }
        }
    }

    #[test]
    fn axes_smaller_than_stroke_rejected() {
        let r = Ring {
            outer: Ellipse::new(100.0, 100.0, 10.0, 4.0, 0.0),
            stroke: 5.0,
        };
        assert!(matches!(
            render_frame(&SceneSpec::single_ring(r, 1), 0, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn half_outside_visibility() {
        let r = Ring {
            outer: Ellipse::circle(0.0, 180.0, 60.0),
            stroke: 6.0,
        };
        let (_, rec) = render_frame(&SceneSpec::single_ring(r, 1), 0, 0).unwrap();
        assert!((rec.visibility_fraction - 0.5).abs() <= 0.05, "{}", rec.visibility_fraction);
    }

    #[test]
    fn deterministic_noise() {
        let c = standard_corpus();
        let (a, _) = render_frame(&c.scene, 7, 33).unwrap();
        let (b, _) = render_frame(&c.scene, 7, 33).unwrap();
        let (d, _) = render_frame(&c.scene, 8, 33).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn keyframe_interpolation_and_absence() {
        let c = standard_corpus();
        let s = &c.scene;
        assert!(s.ring_at(5).is_none());
        assert!(s.ring_at(175).is_none());
        let r = s.ring_at(20).unwrap();
        assert!((r.outer.cx - 198.0).abs() < 1e-9);
        assert_eq!(s.ring_at(169).unwrap().outer.cx, 290.0);
        let present = (0..200).filter(|&f| s.ring_at(f).is_some()).count();
        assert_eq!(present, 180);
    }

    #[test]
    fn standard_corpus_validates() {
        let c = standard_corpus();
        c.scene.validate().unwrap();
        let covered: usize = c.segments.iter().map(|s| s.frames.end - s.frames.start).sum();
        assert_eq!(covered, 200);
        for case in Case::ALL {
            case_corpus(case, 10).scene.validate().unwrap();
        }
    }

    #[test]
    fn csv_row_formats() {
        let rec = GroundTruthRecord {
            frame_index: 3,
            target_present: false,
            ellipse: None,
            visibility_fraction: 0.0,
        };
        assert_eq!(ground_truth_row(&rec), "3,0,,,,,,0");
    }
}
