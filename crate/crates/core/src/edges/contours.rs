use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryImage, PixelPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BorderKind {
    Outer,
    Hole,
}

/// Ordered 8-connected chain of border pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<PixelPoint>,
    /// First and last points are adjacent and no pixel is visited twice.
    pub is_closed: bool,
    pub kind: BorderKind,
    /// Index of the enclosing border in the returned list.
    pub parent: Option<usize>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Neighbour offsets, clockwise on screen (y grows downwards), starting east.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is a unit neighbour")
}

const MIN_POINTS: usize = 3;
/// A hole border sharing at least this fraction of its points with its
/// enclosing outer border retraces a one-pixel-wide curve and is dropped.
const RETRACE_FRACTION: f64 = 0.5;

/// Suzuki-Abe border following over a binary map.
///
/// Returns outer and hole borders in raster-scan order of their starting
/// pixels. Borders with fewer than three points are dropped, as are hole
/// borders that only retrace the pixels of their enclosing outer border (the
/// inside of a thin edge curve).
pub fn extract_contours(edges: &BinaryImage) -> Vec<Contour> {
    let (w, h) = (edges.width(), edges.height());
    if w == 0 || h == 0 {
        return Vec::new();
    }
    // Padded label grid so neighbour reads never leave the buffer.
    let pw = w + 2;
    let ph = h + 2;
    let mut f = vec![0i32; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if edges.get(x, y) {
                f[(y + 1) * pw + x + 1] = 1;
            }
        }
    }
    let idx = |x: i64, y: i64| (y as usize) * pw + x as usize;

    struct Raw {
        points: Vec<PixelPoint>,
        kind: BorderKind,
        parent: Option<usize>,
    }
    // raw[k] has border number k + 2.
    let mut raw: Vec<Raw> = Vec::new();
    let mut nbd: i32 = 1;

    for y in 1..(ph - 1) as i64 {
        let mut lnbd: i32 = 1;
        for x in 1..(pw - 1) as i64 {
            let here = f[idx(x, y)];
            if here == 0 {
                continue;
            }
            let start = if here == 1 && f[idx(x - 1, y)] == 0 {
                Some(((x - 1, y), BorderKind::Outer))
            } else if here >= 1 && f[idx(x + 1, y)] == 0 {
                if here > 1 {
                    lnbd = here;
                }
                Some(((x + 1, y), BorderKind::Hole))
            } else {
                None
            };

            if let Some(((sx, sy), kind)) = start {
                nbd += 1;
                let parent = if lnbd <= 1 {
                    None
                } else {
                    let k = (lnbd - 2) as usize;
                    match (kind, raw[k].kind) {
                        (BorderKind::Outer, BorderKind::Outer)
                        | (BorderKind::Hole, BorderKind::Hole) => raw[k].parent,
                        _ => Some(k),
                    }
                };
                let points = follow(&mut f, pw, (x, y), (sx, sy), nbd);
                raw.push(Raw {
                    points,
                    kind,
                    parent,
                });
            }

            let v = f[idx(x, y)];
            if v != 1 {
                lnbd = v.abs();
            }
        }
    }

    // Drop short borders and retraced holes; remap parents past dropped ones.
    let mut keep: Vec<Option<usize>> = vec![None; raw.len()];
    let mut effective_parent: Vec<Option<usize>> = vec![None; raw.len()];
    let mut out: Vec<Contour> = Vec::new();
    let mut point_sets: Vec<Option<HashSet<PixelPoint>>> = (0..raw.len()).map(|_| None).collect();
    for k in 0..raw.len() {
        let parent_final = raw[k].parent.and_then(|p| keep[p].or(effective_parent[p]));
        effective_parent[k] = parent_final;
        let r = &raw[k];
        if r.points.len() < MIN_POINTS {
            continue;
        }
        if r.kind == BorderKind::Hole {
            if let Some(p) = r.parent {
                if raw[p].kind == BorderKind::Outer {
                    let set = point_sets[p]
                        .get_or_insert_with(|| raw[p].points.iter().copied().collect());
                    let shared = r.points.iter().filter(|q| set.contains(q)).count();
                    if shared as f64 >= RETRACE_FRACTION * r.points.len() as f64 {
                        continue;
                    }
                }
            }
        }
        keep[k] = Some(out.len());
        let mut points = r.points.clone();
        points.dedup();
        let is_closed = closed_chain(&points);
        out.push(Contour {
            points,
            is_closed,
            kind: r.kind,
            parent: parent_final,
        });
    }
    out
}

/// Traces one border starting at padded `(x, y)` whose zero neighbour is
/// `from`; labels visited pixels with `nbd` and returns unpadded points.
fn follow(f: &mut [i32], pw: usize, start: (i64, i64), from: (i64, i64), nbd: i32) -> Vec<PixelPoint> {
    let at = |x: i64, y: i64| (y as usize) * pw + x as usize;
    let (x0, y0) = start;
    let d_from = dir_index(from.0 - x0, from.1 - y0);
    // Clockwise search for the first nonzero neighbour.
    let first = (0..8)
        .map(|k| (d_from + k) % 8)
        .find(|&d| f[at(x0 + DIRS[d].0, y0 + DIRS[d].1)] != 0);
    let Some(d1) = first else {
        f[at(x0, y0)] = -nbd;
        return vec![PixelPoint::new(x0 as usize - 1, y0 as usize - 1)];
    };
    let p1 = (x0 + DIRS[d1].0, y0 + DIRS[d1].1);
    let mut p2 = p1;
    let mut p3 = (x0, y0);
    let mut points = Vec::new();
    loop {
        points.push(PixelPoint::new(p3.0 as usize - 1, p3.1 as usize - 1));
        let d2 = dir_index(p2.0 - p3.0, p2.1 - p3.1);
        // Counter-clockwise from the element after p2.
        let mut east_zero_examined = false;
        let mut p4 = p2;
        for k in 1..=8 {
            let d = (d2 + 8 - k) % 8;
            let q = (p3.0 + DIRS[d].0, p3.1 + DIRS[d].1);
            if f[at(q.0, q.1)] != 0 {
                p4 = q;
                break;
            }
            if d == 0 {
                east_zero_examined = true;
            }
        }
        let i3 = at(p3.0, p3.1);
        if east_zero_examined {
            f[i3] = -nbd;
        } else if f[i3] == 1 {
            f[i3] = nbd;
        }
        if p4 == (x0, y0) && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}

fn closed_chain(points: &[PixelPoint]) -> bool {
    if points.len() < MIN_POINTS {
        return false;
    }
    let first = points[0];
    let last = points[points.len() - 1];
    if !first.is_8_adjacent(&last) {
        return false;
    }
    let mut seen = HashSet::with_capacity(points.len());
    points.iter().all(|p| seen.insert(*p))
}
