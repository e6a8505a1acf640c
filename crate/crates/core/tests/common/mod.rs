//! Checks shared by the module tests and the acceptance run.

#![allow(dead_code)]

pub mod state_machine;

use ringtrack::detector::{evaluate_contour, FrameWindow, Rejection};
use ringtrack::edges::BorderKind;
use ringtrack::raster::{dilate, extract_roi, rasterize_ellipse_perimeter, PixelPoint};
use ringtrack::synth::{render_frame, Ring, SceneSpec};
use ringtrack::tracker::{calculate_roi, compensate_offset, detect_target, determine_params, select_target};
use ringtrack::{
    detect_ellipses, group_concentric, BinaryImage, Bounds, CannyParams, Contour, DetectionThresholds, Ellipse,
    GrayImage, Roi, ScoredEllipse, TrackerConfig, TrackerState,
};

pub type Check = (&'static str, bool);

pub fn contour_of(points: Vec<PixelPoint>) -> Contour {
    Contour {
        points,
        is_closed: true,
        kind: BorderKind::Outer,
        parent: None,
    }
}

pub fn edges_from(points: &[PixelPoint], bounds: Bounds) -> BinaryImage {
    let mut m = BinaryImage::new(bounds.width, bounds.height);
    for p in points {
        m.set(p.x, p.y, true);
    }
    m
}

pub fn scored(cx: f64, cy: f64, r: f64, eo: f64) -> ScoredEllipse {
    ScoredEllipse {
        ellipse: Ellipse::circle(cx, cy, r),
        contour_overlap_score: 1.0,
        ellipse_overlap_score: eo,
        source_contour_index: 0,
    }
}

/// Noiseless 640x360 frame with one dark ring on white.
pub fn ring_frame(outer: Ellipse, stroke: f64) -> (GrayImage, Ellipse) {
    let mut spec = SceneSpec::single_ring(Ring { outer, stroke }, 1);
    spec.foreground = 0;
    spec.background = 255;
    let (img, _) = render_frame(&spec, 0, 0).expect("render");
    (img, outer)
}

pub fn blank_frame() -> GrayImage {
    GrayImage::filled(640, 360, 255)
}

/// One pass and one fail per gate, each against the gate it targets.
pub fn gate_checks() -> Vec<Check> {
    let b = Bounds::new(200, 160);
    let e = Ellipse::new(100.0, 80.0, 36.0, 24.0, 0.3);
    let raster = rasterize_ellipse_perimeter(&e, b);
    let good = contour_of(raster.clone());
    let dilated = dilate(&edges_from(&raster, b));
    let win = FrameWindow::of(b);
    let base = DetectionThresholds::detection();
    let run = |c: &Contour, d: &BinaryImage, t: DetectionThresholds| evaluate_contour(c, d, win, &t);
    let passes = |c: &Contour, d: &BinaryImage, t: DetectionThresholds| run(c, d, t).is_ok();
    let rejects = |c: &Contour, d: &BinaryImage, t: DetectionThresholds, r: Rejection| run(c, d, t).err() == Some(r);

    let n = good.points.len();
    let fitted = run(&good, &dilated, base).map(|(f, _, _)| f).ok();
    let (major, minor, ratio) = fitted.map_or((0.0, 0.0, 0.0), |f| (f.major_axis(), f.minor_axis(), f.axis_ratio()));

    let mut square = Vec::new();
    for i in 0..60 {
        square.push(PixelPoint::new(70 + i, 50));
        square.push(PixelPoint::new(130, 50 + i));
        square.push(PixelPoint::new(130 - i, 110));
        square.push(PixelPoint::new(70, 110 - i));
    }
    let square = contour_of(square);
    let half: Vec<PixelPoint> = raster.iter().copied().filter(|p| (p.y as f64) < e.cy).collect();
    let half_dilated = dilate(&edges_from(&half, b));
    let line = contour_of((0..80).map(|i| PixelPoint::new(20 + i, 30)).collect());

    let with = |f: &dyn Fn(&mut DetectionThresholds)| {
        let mut t = base;
        f(&mut t);
        t
    };
    vec![
        ("gate size passes at n", passes(&good, &dilated, with(&|t| t.min_contour_size = n))),
        (
            "gate size rejects at n+1",
            rejects(&good, &dilated, with(&|t| t.min_contour_size = n + 1), Rejection::ContourSize),
        ),
        ("gate fit rejects a straight line", rejects(&line, &dilated, with(&|t| t.min_contour_size = 10), Rejection::FitFailed)),
        ("gate axis-max passes just above 2a", passes(&good, &dilated, with(&|t| t.max_axis_size = major + 0.5))),
        (
            "gate axis-max rejects just below 2a",
            rejects(&good, &dilated, with(&|t| t.max_axis_size = major - 0.5), Rejection::MaxAxis),
        ),
        ("gate axis-min passes just below 2b", passes(&good, &dilated, with(&|t| t.min_axis_size = minor - 0.5))),
        (
            "gate axis-min rejects just above 2b",
            rejects(&good, &dilated, with(&|t| t.min_axis_size = minor + 0.5), Rejection::MinAxis),
        ),
        ("gate axis-ratio passes above a/b", passes(&good, &dilated, with(&|t| t.max_axis_ratio = ratio + 0.05))),
        (
            "gate axis-ratio rejects below a/b",
            rejects(&good, &dilated, with(&|t| t.max_axis_ratio = ratio - 0.05), Rejection::AxisRatio),
        ),
        ("gate contour overlap passes on the ellipse itself", passes(&good, &dilated, base)),
        ("gate contour overlap rejects a square", rejects(&square, &dilated, base, Rejection::ContourOverlap)),
        (
            "gate ellipse overlap passes half coverage at 0.4",
            passes(&good, &half_dilated, with(&|t| t.ellipse_overlap = 0.4)),
        ),
        (
            "gate ellipse overlap rejects half coverage at 0.95",
            rejects(&good, &half_dilated, base, Rejection::EllipseOverlap),
        ),
    ]
}

pub fn grouping_checks() -> Vec<Check> {
    let sizes = |g: &[Vec<ScoredEllipse>]| {
        let mut v: Vec<usize> = g.iter().map(Vec::len).collect();
        v.sort_unstable();
        v
    };
    let pair = group_concentric(&[scored(100.0, 100.0, 30.0, 1.0), scored(100.5, 100.5, 20.0, 1.0)], 5.0);
    let drop = group_concentric(
        &[scored(100.0, 100.0, 30.0, 1.0), scored(101.0, 100.0, 20.0, 1.0), scored(300.0, 50.0, 20.0, 1.0)],
        5.0,
    );
    let apart = group_concentric(
        &[scored(10.0, 10.0, 5.0, 1.0), scored(100.0, 10.0, 5.0, 1.0), scored(10.0, 100.0, 5.0, 1.0)],
        5.0,
    );
    vec![
        ("grouping joins centers 0.7 px apart", sizes(&pair) == [2]),
        (
            "grouping drops the far singleton when a pair exists",
            sizes(&drop) == [2] && drop[0].iter().all(|d| d.ellipse.cx < 200.0),
        ),
        ("grouping keeps singletons without any pair", sizes(&apart) == [1, 1, 1]),
        ("grouping of nothing is empty", group_concentric(&[], 5.0).is_empty()),
    ]
}

/// Frame-level examples of the detection cascade.
pub fn detector_examples() -> Vec<Check> {
    let canny = CannyParams::default();
    let det = DetectionThresholds::detection();
    let blank = detect_ellipses(&blank_frame(), &det, &canny).map(|v| v.is_empty()).unwrap_or(false);

    let (img, truth) = ring_frame(Ellipse::new(320.0, 180.0, 80.0, 50.0, 0.0), 8.0);
    let found = detect_ellipses(&img, &det, &canny).unwrap_or_default();
    let near: Vec<&ScoredEllipse> = found
        .iter()
        .filter(|d| d.ellipse.center_distance(&truth) <= 2.0)
        .collect();
    let agree = near
        .iter()
        .all(|d| near.iter().all(|o| d.ellipse.center_distance(&o.ellipse) <= 3.0));

    // Shift the ring right until 40% of its outer border leaves the frame.
    let mut partial = false;
    if let Some(cx) = center_for_visibility(0.6) {
        let (img, truth) = ring_frame(Ellipse::new(cx, 180.0, 80.0, 50.0, 0.0), 8.0);
        let found = detect_ellipses(&img, &DetectionThresholds::tracking(), &canny).unwrap_or_default();
        partial = found.iter().any(|d| d.ellipse.center_distance(&truth) <= 5.0);
    }
    vec![
        ("detect on blank frame is empty", blank),
        ("detect finds both ring borders within 2 px, agreeing within 3 px", near.len() >= 2 && agree),
        ("detect with tracking thresholds finds a ring 40% outside within 5 px", partial),
    ]
}

/// Ring center x for which the visible share of the outer border is closest
/// to `target`.
pub fn center_for_visibility(target: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for step in 0..80 {
        let cx = 560.0 + step as f64;
        let spec = SceneSpec::single_ring(
            Ring {
                outer: Ellipse::new(cx, 180.0, 80.0, 50.0, 0.0),
                stroke: 8.0,
            },
            1,
        );
        let (_, gt) = render_frame(&spec, 0, 0).ok()?;
        let err = (gt.visibility_fraction - target).abs();
        if best.is_none_or(|(e, _)| err < e) {
            best = Some((err, cx));
        }
    }
    best.filter(|(e, _)| *e < 0.02).map(|(_, cx)| cx)
}

pub fn tracker_examples() -> Vec<Check> {
    let cfg = TrackerConfig::default();
    let canny = CannyParams::default();
    let mut out: Vec<Check> = Vec::new();

    let d = determine_params(&cfg, false);
    let t = determine_params(&cfg, true);
    out.push(("params when detecting are 0.95/0.95", d.contour_overlap == 0.95 && d.ellipse_overlap == 0.95));
    out.push(("params when tracking are 0.7/0.3", t.contour_overlap == 0.7 && t.ellipse_overlap == 0.3));
    out.push(("params lookup is pure", determine_params(&cfg, true) == t));

    let (img, truth) = ring_frame(Ellipse::new(300.0, 170.0, 80.0, 50.0, 0.2), 8.0);
    let at = |scale: usize| {
        detect_target(&img, scale, &d, &canny, cfg.concentric_tolerance, None, None)
            .ok()
            .and_then(|s| s.target)
            .map(|t| t.ellipse.center_distance(&truth))
    };
    out.push(("detect_target at scale 1 within 2 px", at(1).is_some_and(|e| e <= 2.0)));
    out.push(("detect_target at scale 2 within 4 px", at(2).is_some_and(|e| e <= 4.0)));
    let blank = blank_frame();
    out.push((
        "detect_target on blank frame is absent at every scale",
        [1, 2, 4, 8, 16, 32, 64].iter().all(|&s| {
            detect_target(&blank, s, &d, &canny, 5.0, None, None).is_ok_and(|r| r.target.is_none())
        }),
    ));

    let pair = vec![scored(100.0, 100.0, 30.0, 0.9), scored(100.5, 100.0, 20.0, 0.9)];
    let single = vec![scored(300.0, 100.0, 40.0, 1.0)];
    let picked = select_target(&[single, pair.clone()], None);
    out.push((
        "select returns the pair's outer ellipse over a singleton",
        picked.is_some_and(|p| p.ellipse.a == 30.0 && p.ellipse.cx == 100.0),
    ));
    out.push(("select of no groups is absent", select_target(&[], None).is_none()));
    let pair_b = vec![scored(400.0, 200.0, 30.0, 0.9), scored(400.5, 200.0, 20.0, 0.9)];
    let last = Ellipse::circle(398.0, 201.0, 30.0);
    out.push((
        "select breaks a score tie by distance to the last target",
        select_target(&[pair, pair_b], Some(&last)).is_some_and(|p| p.ellipse.cx == 400.0),
    ));

    let e = Ellipse::new(10.0, 20.0, 5.0, 3.0, 0.4);
    let moved = compensate_offset(&e, Some(&Roi::new(100, 50, 10, 10)));
    out.push((
        "compensate shifts by the roi origin only",
        moved.cx == 110.0 && moved.cy == 70.0 && moved.a == 5.0 && moved.b == 3.0 && moved.theta == 0.4,
    ));
    out.push(("compensate without roi is identity", compensate_offset(&e, None) == e));

    let roi = Roi::new(150, 40, 300, 260);
    let composed = extract_roi(&img, &roi).ok().and_then(|crop| {
        detect_target(&crop, 1, &d, &canny, 5.0, None, None)
            .ok()?
            .target
            .map(|t| compensate_offset(&t.ellipse, Some(&roi)))
    });
    let full = detect_target(&img, 1, &d, &canny, 5.0, None, None).ok().and_then(|s| s.target);
    out.push((
        "crop, detect and compensate agrees with full frame within 2 px",
        matches!((composed, full), (Some(c), Some(f)) if c.center_distance(&f.ellipse) <= 2.0),
    ));

    let frame = Bounds::new(640, 360);
    let circle = Ellipse::circle(320.0, 180.0, 50.0);
    out.push(("roi of r=50 circle at factor 2", calculate_roi(&circle, frame, 2.0) == Some(Roi::new(220, 80, 200, 200))));
    let corner = Ellipse::circle(20.0, 15.0, 40.0);
    let clipped = calculate_roi(&corner, frame, 2.0);
    let bbox = Roi::from_span_clamped(-20, -25, 60, 55, frame);
    out.push((
        "roi near a corner is clamped and covers the clipped bbox",
        matches!((clipped, bbox), (Some(r), Some(b)) if r.x == 0 && r.y == 0 && r.contains_roi(&b)),
    ));
    out.push(("roi at factor 1 is the bbox", calculate_roi(&circle, frame, 1.0) == Some(Roi::new(270, 130, 100, 100))));

    let step = ringtrack::track_step(&TrackerState::default(), &img, &cfg);
    out.push((
        "first acquisition starts tracking with an roi",
        matches!(&step, Ok((Some(t), s)) if s.is_tracking && s.roi.is_some()
            && s.scale == if t.major_axis() > cfg.max_target_size { 2 } else { 1 }),
    ));
    let tracking4 = TrackerState {
        is_tracking: true,
        scale: 4,
        roi: Some(Roi::new(100, 100, 200, 150)),
        last_target: Some(circle),
    };
    let lost = ringtrack::track_step(&tracking4, &blank, &cfg);
    out.push((
        "tracking at scale 4 on a blank frame ends at scale 2, not tracking",
        matches!(lost, Ok((None, s)) if s == TrackerState { is_tracking: false, scale: 2, roi: None, last_target: None }),
    ));
    let (big, _) = ring_frame(Ellipse::new(320.0, 180.0, 100.0, 70.0, 0.0), 8.0);
    let grow = ringtrack::track_step(
        &TrackerState {
            is_tracking: true,
            scale: 1,
            roi: Some(Roi::full(frame)),
            last_target: None,
        },
        &big,
        &cfg,
    );
    out.push((
        "a major axis above the size limit doubles the scale",
        matches!(grow, Ok((Some(_), s)) if s.scale == 2),
    ));
    out
}

pub mod fit_suite;
