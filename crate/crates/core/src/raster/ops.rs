use crate::error::{Error, Result};
use crate::fit::Ellipse;

use super::image::{BinaryImage, Bounds, GrayImage, PixelPoint, Roi};

/// Downscales by a power-of-two `divisor` using block means. Partial blocks at
/// the right and bottom edges average only the pixels they cover.
pub fn scale_image(img: &GrayImage, divisor: usize) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if divisor == 0 || !divisor.is_power_of_two() || divisor > w || divisor > h {
        return Err(Error::InvalidScale {
            divisor,
            width: w,
            height: h,
        });
    }
    if divisor == 1 {
        return Ok(img.clone());
    }
    let ow = w.div_ceil(divisor);
    let oh = h.div_ceil(divisor);
    let src = img.as_slice();
    let mut sums = vec![0u32; ow];
    let mut out = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        sums.iter_mut().for_each(|s| *s = 0);
        let y0 = by * divisor;
        let y1 = (y0 + divisor).min(h);
        for y in y0..y1 {
            let row = &src[y * w..(y + 1) * w];
            for (bx, chunk) in row.chunks(divisor).enumerate() {
                sums[bx] += chunk.iter().map(|&v| v as u32).sum::<u32>();
            }
        }
        let rows = (y1 - y0) as u32;
        for (bx, &s) in sums.iter().enumerate() {
            let cols = (divisor.min(w - bx * divisor)) as u32;
            let n = rows * cols;
            out.push(((s + n / 2) / n) as u8);
        }
    }
    GrayImage::new(ow, oh, out)
}

/// Copies the region of `img` covered by `roi`, after clamping it to the frame.
pub fn extract_roi(img: &GrayImage, roi: &Roi) -> Result<GrayImage> {
    let r = roi.clamp_to(img.bounds()).ok_or(Error::EmptyRoi)?;
    let mut out = Vec::with_capacity(r.area());
    for y in r.y..r.y + r.height {
        out.extend_from_slice(&img.row(y)[r.x..r.x + r.width]);
    }
    GrayImage::new(r.width, r.height, out)
}

/// Integer pixels on the boundary of `e` that fall inside `clip`, as a sorted
/// set (row-major order).
///
/// The parametric boundary is sampled with step `1 / max(a, b)` radians so
/// consecutive samples are at most one pixel apart; rounding then yields an
/// 8-connected chain.
pub fn rasterize_ellipse_perimeter(e: &Ellipse, clip: Bounds) -> Vec<PixelPoint> {
    perimeter_pixels_in(e, 0, 0, clip.width as i64, clip.height as i64)
        .into_iter()
        .map(|(x, y)| PixelPoint::new(x as usize, y as usize))
        .collect()
}

/// As [`rasterize_ellipse_perimeter`] over the half-open window
/// `[x0, x1) x [y0, y1)`, which may extend past the image on any side.
pub fn perimeter_pixels_in(e: &Ellipse, x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    if !(e.a > 0.0 && e.b > 0.0) || !e.cx.is_finite() || !e.cy.is_finite() {
        return Vec::new();
    }
    let (hx, hy) = e.half_extents();
    if e.cx + hx < x0 as f64 - 0.5
        || e.cy + hy < y0 as f64 - 0.5
        || e.cx - hx > x1 as f64 - 0.5
        || e.cy - hy > y1 as f64 - 0.5
    {
        return Vec::new();
    }
    let rmax = e.a.max(e.b);
    let steps = (std::f64::consts::TAU * rmax).ceil().max(8.0) as usize;
    let dt = std::f64::consts::TAU / steps as f64;
    let (s, c) = e.theta.sin_cos();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(steps);
    let mut last: Option<(i64, i64)> = None;
    for i in 0..steps {
        let (st, ct) = (i as f64 * dt).sin_cos();
        let u = e.a * ct;
        let v = e.b * st;
        let x = (e.cx + u * c - v * s).round() as i64;
        let y = (e.cy + u * s + v * c).round() as i64;
        if last == Some((x, y)) {
            continue;
        }
        last = Some((x, y));
        if x >= x0 && y >= y0 && x < x1 && y < y1 {
            out.push((x, y));
        }
    }
    out.sort_unstable_by_key(|&(x, y)| (y, x));
    out.dedup();
    out
}

/// One pass of 3x3 binary dilation.
pub fn dilate(mask: &BinaryImage) -> BinaryImage {
    let (w, h) = (mask.width(), mask.height());
    if w == 0 || h == 0 {
        return mask.clone();
    }
    let src = mask.as_slice();
    // Horizontal pass then vertical pass.
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let dst = &mut horiz[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(1);
            let hi = (x + 1).min(w - 1);
            dst[x] = row[lo..=hi].iter().any(|&v| v);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(1);
        let hi = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
        }
    }
    BinaryImage::from_vec(w, h, out).expect("dimensions preserved")
}

/// Number of `points` that land on a true pixel of `mask`.
pub fn count_intersection(points: &[PixelPoint], mask: &BinaryImage) -> usize {
    points
        .iter()
        .filter(|p| p.x < mask.width() && p.y < mask.height() && mask.get(p.x, p.y))
        .count()
}
