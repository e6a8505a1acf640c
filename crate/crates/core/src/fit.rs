//! Direct least-squares ellipse fitting and conic/geometric conversions.
//!
//! The fit minimizes the algebraic residual `sum (Ax^2 + Bxy + Cy^2 + Dx + Ey + F)^2`
//! under the ellipse-specific normalization `4AC - B^2 = 1`. The scatter matrix
//! is split into quadratic and linear blocks so that the linear part is
//! eliminated in closed form and only a 3x3 generalized eigenproblem remains;
//! that problem is solved through its characteristic cubic.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::raster::PixelPoint;

/// Geometric ellipse. `a` is the semi-major axis, `theta` the angle of the
/// major axis against +x, in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    /// Builds an ellipse, swapping the axes if needed so that `a >= b` and
    /// wrapping `theta` into `[0, pi)`.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if a >= b {
            (a, b, theta)
        } else {
            (b, a, theta + FRAC_PI_2)
        };
        Self {
            cx,
            cy,
            a,
            b,
            theta: normalize_angle(theta),
        }
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self::new(cx, cy, r, r, 0.0)
    }

    /// Full major axis length.
    #[inline]
    pub fn major_axis(&self) -> f64 {
        2.0 * self.a
    }

    /// Full minor axis length.
    #[inline]
    pub fn minor_axis(&self) -> f64 {
        2.0 * self.b
    }

    #[inline]
    pub fn axis_ratio(&self) -> f64 {
        self.a / self.b
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    /// Ramanujan's perimeter approximation.
    pub fn perimeter(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
    }

    /// Point at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let (st, ct) = t.sin_cos();
        let u = self.a * ct;
        let v = self.b * st;
        (self.cx + u * c - v * s, self.cy + u * s + v * c)
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let hx = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let hy = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (hx, hy)
    }

    /// Whether `(x, y)` lies inside or on the ellipse.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.normalized_radius_sq(x, y) <= 1.0
    }

    /// `(x'/a)^2 + (y'/b)^2` in the ellipse frame.
    #[inline]
    pub fn normalized_radius_sq(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Maps an ellipse measured on an image downscaled by `divisor` back to
    /// the source image. Downscaled pixel `i` covers source pixels
    /// `[divisor*i, divisor*i + divisor)`, whose center is offset by
    /// `(divisor - 1) / 2`.
    pub fn upscaled(&self, divisor: usize) -> Self {
        let s = divisor as f64;
        let off = (s - 1.0) / 2.0;
        Self {
            cx: self.cx * s + off,
            cy: self.cy * s + off,
            a: self.a * s,
            b: self.b * s,
            theta: self.theta,
        }
    }

    pub fn center_distance(&self, other: &Ellipse) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// Wraps an angle into `[0, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Smallest difference between two axis angles, modulo pi.
pub fn angle_diff_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// General conic `Ax^2 + Bxy + Cy^2 + Dx + Ey + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Conic {
    /// Rescales so that `A + C = 1` when `A + C != 0`.
    pub fn normalized(self) -> Self {
        let s = self.a + self.c;
        if s == 0.0 || !s.is_finite() {
            return self;
        }
        Self {
            a: self.a / s,
            b: self.b / s,
            c: self.c / s,
            d: self.d / s,
            e: self.e / s,
            f: self.f / s,
        }
    }

    #[inline]
    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.c
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    /// Sum of squared algebraic distances over `points`.
    pub fn algebraic_residual<P: FitPoint>(&self, points: &[P]) -> f64 {
        points
            .iter()
            .map(|p| {
                let (x, y) = p.xy();
                self.eval(x, y).powi(2)
            })
            .sum()
    }
}

/// Anything usable as a 2-D sample for the fit.
pub trait FitPoint {
    fn xy(&self) -> (f64, f64);
}

impl FitPoint for PixelPoint {
    #[inline]
    fn xy(&self) -> (f64, f64) {
        (self.x as f64, self.y as f64)
    }
}

impl FitPoint for (f64, f64) {
    #[inline]
    fn xy(&self) -> (f64, f64) {
        *self
    }
}

impl FitPoint for [f64; 2] {
    #[inline]
    fn xy(&self) -> (f64, f64) {
        (self[0], self[1])
    }
}

/// Fits an ellipse to `points` and returns it in geometric form.
pub fn fit_ellipse<P: FitPoint>(points: &[P]) -> Result<Ellipse, FitError> {
    let conic = fit_conic(points)?;
    conic_to_geometric(&conic).map_err(|_| FitError::DegenerateFit)
}

/// Direct least-squares conic under `4AC - B^2 = 1`, returned in the input
/// coordinate frame and normalized so that `A + C = 1`.
pub fn fit_conic<P: FitPoint>(points: &[P]) -> Result<Conic, FitError> {
    let n = points.len();
    if n < 5 {
        return Err(FitError::TooFewPoints(n));
    }

    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        let (x, y) = p.xy();
        mx += x;
        my += y;
    }
    mx /= n as f64;
    my /= n as f64;
    let mut spread = 0.0;
    for p in points {
        let (x, y) = p.xy();
        spread += (x - mx).powi(2) + (y - my).powi(2);
    }
    let rms = (spread / n as f64).sqrt();
    if !rms.is_finite() || rms < 1e-12 {
        return Err(FitError::DegenerateFit);
    }
    // RMS radius sqrt(2) after scaling.
    let scale = std::f64::consts::SQRT_2 / rms;

    // Scatter blocks: quadratic q = [u^2, uv, v^2], linear l = [u, v, 1].
    let mut s1 = [[0.0f64; 3]; 3];
    let mut s2 = [[0.0f64; 3]; 3];
    let mut s3 = [[0.0f64; 3]; 3];
    for p in points {
        let (x, y) = p.xy();
        let u = (x - mx) * scale;
        let v = (y - my) * scale;
        let q = [u * u, u * v, v * v];
        let l = [u, v, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                s1[i][j] += q[i] * q[j];
                s2[i][j] += q[i] * l[j];
                s3[i][j] += l[i] * l[j];
            }
        }
    }

    let s3_inv = invert3(&s3, n as f64).ok_or(FitError::DegenerateFit)?;
    // Linear coefficients as a function of the quadratic ones: l = t q.
    let t = neg(&mul3(&s3_inv, &transpose3(&s2)));
    let mut reduced = add3(&s1, &mul3(&s2, &t));
    // Symmetrize away rounding.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = 0.5 * (reduced[i][j] + reduced[j][i]);
            reduced[i][j] = m;
            reduced[j][i] = m;
        }
    }

    let quad = constrained_min(&reduced).ok_or(FitError::DegenerateFit)?;
    let lin = mul3v(&t, &quad);

    let (qa, qb, qc) = (quad[0], quad[1], quad[2]);
    let (ld, le, lf) = (lin[0], lin[1], lin[2]);
    // Undo u = s(x - mx), v = s(y - my).
    let s2f = scale * scale;
    let a = qa * s2f;
    let b = qb * s2f;
    let c = qc * s2f;
    let d = ld * scale - 2.0 * a * mx - b * my;
    let e = le * scale - 2.0 * c * my - b * mx;
    let f = a * mx * mx + b * mx * my + c * my * my - ld * scale * mx - le * scale * my + lf;
    let conic = Conic { a, b, c, d, e, f }.normalized();
    if [conic.a, conic.b, conic.c, conic.d, conic.e, conic.f]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(FitError::DegenerateFit);
    }
    Ok(conic)
}

/// Minimizes `q' M q` subject to `q' K q = 1` with `K = [[0,0,2],[0,-1,0],[2,0,0]]`
/// (so that `q' K q = 4ac - b^2`).
fn constrained_min(m: &[[f64; 3]; 3]) -> Option<[f64; 3]> {
    let (s00, s01, s02) = (m[0][0], m[0][1], m[0][2]);
    let (s11, s12, s22) = (m[1][1], m[1][2], m[2][2]);
    // det(M - lambda K) as a cubic in lambda.
    let c0 = det3(m);
    let c1 = s00 * s22 - 4.0 * s01 * s12 + 4.0 * s11 * s02 - s02 * s02;
    let c2 = 4.0 * (s02 - s11);
    let c3 = -4.0;

    let charpoly = |lambda: f64| det3(&shift(m, lambda));
    let mut best: Option<([f64; 3], f64)> = None;
    for root in real_cubic_roots(c3, c2, c1, c0) {
        let lambda = polish_root(charpoly, root);
        let Some(v) = null_vector(&shift(m, lambda)) else {
            continue;
        };
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond <= 0.0 || !cond.is_finite() {
            continue;
        }
        let k = 1.0 / cond.sqrt();
        let q = [v[0] * k, v[1] * k, v[2] * k];
        let residual = quad_form(m, &q);
        if best.is_none_or(|(_, r)| residual < r) {
            best = Some((q, residual));
        }
    }
    best.map(|(q, _)| q)
}

fn shift(m: &[[f64; 3]; 3], lambda: f64) -> [[f64; 3]; 3] {
    let mut out = *m;
    out[0][2] -= 2.0 * lambda;
    out[2][0] -= 2.0 * lambda;
    out[1][1] += lambda;
    out
}

fn polish_root(f: impl Fn(f64) -> f64, mut x: f64) -> f64 {
    for _ in 0..8 {
        let h = 1e-7 * x.abs().max(1e-3);
        let fx = f(x);
        let d = (f(x + h) - f(x - h)) / (2.0 * h);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        if !next.is_finite() || (f(next).abs() >= fx.abs()) {
            break;
        }
        x = next;
    }
    x
}

/// Real roots of `a3 x^3 + a2 x^2 + a1 x + a0`.
fn real_cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let p = a2 / a3;
    let q = a1 / a3;
    let r = a0 / a3;
    // x = t - p/3  =>  t^3 + pp t + qq = 0
    let pp = q - p * p / 3.0;
    let qq = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    let shift = -p / 3.0;
    let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);
    if pp.abs() < 1e-300 && qq.abs() < 1e-300 {
        return vec![shift];
    }
    if disc > 0.0 {
        let sd = disc.sqrt();
        let u = (-qq / 2.0 + sd).cbrt();
        let v = (-qq / 2.0 - sd).cbrt();
        vec![u + v + shift]
    } else {
        // Three real roots (trigonometric form).
        let m = 2.0 * (-pp / 3.0).sqrt();
        let arg = if m == 0.0 {
            0.0
        } else {
            (3.0 * qq / (pp * m)).clamp(-1.0, 1.0)
        };
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (phi - 2.0 * PI * k as f64 / 3.0).cos() + shift)
            .collect()
    }
}

/// Null vector of a rank-2 matrix from the best-conditioned pair of rows.
fn null_vector(m: &[[f64; 3]; 3]) -> Option<[f64; 3]> {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut best = [0.0; 3];
    let mut best_norm = 0.0;
    for (i, j) in pairs {
        let v = cross(&m[i], &m[j]);
        let norm = dot(&v, &v);
        if norm > best_norm {
            best_norm = norm;
            best = v;
        }
    }
    if best_norm <= 0.0 || !best_norm.is_finite() {
        return None;
    }
    let k = 1.0 / best_norm.sqrt();
    Some([best[0] * k, best[1] * k, best[2] * k])
}

/// Reduces an elliptic conic to center, semi-axes and major-axis angle.
pub fn conic_to_geometric(conic: &Conic) -> Result<Ellipse, FitError> {
    let Conic { a, b, c, d, e, f } = *conic;
    let det = 4.0 * a * c - b * b;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if !(det > 1e-14 * scale * scale) || !det.is_finite() {
        return Err(FitError::NotAnEllipse);
    }
    let cx = (b * e - 2.0 * c * d) / det;
    let cy = (b * d - 2.0 * a * e) / det;
    let mut f0 = f + 0.5 * (d * cx + e * cy);
    let (mut qa, mut qb, mut qc) = (a, b, c);
    if qa + qc < 0.0 {
        qa = -qa;
        qb = -qb;
        qc = -qc;
        f0 = -f0;
    }
    if !(f0 < 0.0) {
        return Err(FitError::NotAnEllipse);
    }
    let mean = 0.5 * (qa + qc);
    let dev = (0.5 * (qa - qc)).hypot(0.5 * qb);
    let lambda_small = mean - dev;
    let lambda_large = mean + dev;
    if !(lambda_small > 0.0) {
        return Err(FitError::NotAnEllipse);
    }
    let semi_major = (-f0 / lambda_small).sqrt();
    let semi_minor = (-f0 / lambda_large).sqrt();
    // Direction of the larger eigenvalue is the minor axis.
    let minor_dir = 0.5 * qb.atan2(qa - qc);
    let theta = normalize_angle(minor_dir + FRAC_PI_2);
    if ![cx, cy, semi_major, semi_minor, theta]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(FitError::NotAnEllipse);
    }
    Ok(Ellipse {
        cx,
        cy,
        a: semi_major,
        b: semi_minor,
        theta,
    })
}

/// Implicit form of a geometric ellipse, normalized so that `A + C = 1`.
pub fn geometric_to_conic(e: &Ellipse) -> Conic {
    let (s, c) = e.theta.sin_cos();
    let ia = 1.0 / (e.a * e.a);
    let ib = 1.0 / (e.b * e.b);
    let qa = c * c * ia + s * s * ib;
    let qb = 2.0 * c * s * (ia - ib);
    let qc = s * s * ia + c * c * ib;
    let qd = -2.0 * qa * e.cx - qb * e.cy;
    let qe = -qb * e.cx - 2.0 * qc * e.cy;
    let qf = qa * e.cx * e.cx + qb * e.cx * e.cy + qc * e.cy * e.cy - 1.0;
    Conic {
        a: qa,
        b: qb,
        c: qc,
        d: qd,
        e: qe,
        f: qf,
    }
    .normalized()
}

type Mat3 = [[f64; 3]; 3];

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse via the adjugate; `None` when the matrix is singular relative to
/// the magnitude `n` of its entries.
fn invert3(m: &Mat3, n: f64) -> Option<Mat3> {
    let det = det3(m);
    if det.abs() <= 1e-10 * n * n * n || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            // Cofactor of (j, i).
            let (r0, r1) = others(j);
            let (c0, c1) = others(i);
            let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            *cell = sign * minor * inv;
        }
    }
    Some(out)
}

fn others(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn mul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mul3v(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [dot(&a[0], v), dot(&a[1], v), dot(&a[2], v)]
}

fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

fn add3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += b[i][j];
        }
    }
    out
}

fn neg(a: &Mat3) -> Mat3 {
    a.map(|row| row.map(|v| -v))
}

fn quad_form(m: &Mat3, v: &[f64; 3]) -> f64 {
    dot(v, &mul3v(m, v))
}

#[inline]
fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
