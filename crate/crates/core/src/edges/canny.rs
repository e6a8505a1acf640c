use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryImage, GrayImage};

/// Thresholds apply to the L2 magnitude of the 3x3 Sobel response on the
/// smoothed image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub gaussian_sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            low_threshold: 50.0,
            high_threshold: 150.0,
            gaussian_sigma: 1.4,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_threshold >= 0.0) || !(self.high_threshold >= self.low_threshold) {
            return Err(Error::InvalidParameter(format!(
                "canny thresholds need 0 <= low <= high, got low={} high={}",
                self.low_threshold, self.high_threshold
            )));
        }
        if !(self.gaussian_sigma > 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "canny sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }
}

// Fixed-point kernel scale. Keeps the two-pass blur exact in i32 so that an
// intensity inversion produces exactly negated gradients.
const KERNEL_ONE: f64 = 1024.0;

fn gaussian_kernel(sigma: f64) -> Vec<i32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|w| ((w / total) * KERNEL_ONE).round().max(0.0) as i32)
        .collect()
}

/// Separable blur with replicated borders; output is scaled by `sum(k)^2`.
fn blur(img: &GrayImage, kernel: &[i32]) -> Vec<i32> {
    let (w, h) = (img.width(), img.height());
    let r = (kernel.len() / 2) as i64;
    let src = img.as_slice();
    let mut tmp = vec![0i32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0i32;
            for (k, &kw) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kw * row[sx] as i32;
            }
            *o = acc;
        }
    }
    let mut out = vec![0i32; w * h];
    for y in 0..h {
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src_row) {
                *d += kw * s;
            }
        }
    }
    out
}

/// Gradient magnitude (in intensity units) and quantized direction per pixel.
/// Direction bins: 0 horizontal, 1 diagonal `\`, 2 vertical, 3 diagonal `/`.
fn gradients(smooth: &[i32], w: usize, h: usize, norm: f64) -> (Vec<f32>, Vec<u8>) {
    let mut mag = vec![0f32; w * h];
    let mut dir = vec![0u8; w * h];
    // tan(22.5deg) and tan(67.5deg)
    const T1: f64 = 0.414_213_562_373_095_1;
    const T2: f64 = 2.414_213_562_373_095;
    let at = |x: i64, y: i64| -> i64 {
        let xx = x.clamp(0, w as i64 - 1) as usize;
        let yy = y.clamp(0, h as i64 - 1) as usize;
        smooth[yy * w + xx] as i64
    };
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            let fx = gx as f64;
            let fy = gy as f64;
            let i = y as usize * w + x as usize;
            mag[i] = ((fx * fx + fy * fy).sqrt() / norm) as f32;
            let ax = fx.abs();
            let ay = fy.abs();
            dir[i] = if ay <= T1 * ax {
                0
            } else if ay >= T2 * ax {
                2
            } else if (gx > 0) == (gy > 0) {
                1
            } else {
                3
            };
        }
    }
    (mag, dir)
}

/// Canny edge map: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression over four direction bins, and hysteresis by flood fill from
/// strong pixels. The one-pixel image border never carries an edge.
pub fn detect_edges(img: &GrayImage, params: &CannyParams) -> Result<BinaryImage> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    params.validate()?;
    let kernel = gaussian_kernel(params.gaussian_sigma);
    let ksum: i32 = kernel.iter().sum();
    let smooth = blur(img, &kernel);
    let norm = (ksum as f64) * (ksum as f64);
    let (mag, dir) = gradients(&smooth, w, h, norm);

    let low = params.low_threshold as f32;
    let high = params.high_threshold as f32;
    // 0 = none, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    let mut stack = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m < low || m == 0.0 {
                continue;
            }
            let (before, after) = match dir[i] {
                0 => (i - 1, i + 1),
                2 => (i - w, i + w),
                1 => (i - w - 1, i + w + 1),
                _ => (i - w + 1, i + w - 1),
            };
            // Strict on one side so plateaus of equal magnitude keep one pixel.
            if m > mag[before] && m >= mag[after] {
                if m >= high {
                    class[i] = 2;
                    stack.push(i);
                } else {
                    class[i] = 1;
                }
            }
        }
    }

    let mut edges = vec![false; w * h];
    for &i in &stack {
        edges[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                let j = ny * w + nx;
                if class[j] == 1 && !edges[j] {
                    edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    BinaryImage::from_vec(w, h, edges)
}
