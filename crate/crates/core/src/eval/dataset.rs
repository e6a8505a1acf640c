use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::fit::Ellipse;
use crate::raster::{io, GrayImage};
use crate::synth::{GroundTruthRecord, GROUND_TRUTH_FILE};

/// Optional file in a dataset directory describing its annotation columns.
pub const COLUMN_MAP_FILE: &str = "columns.cfg";

const FRAME_EXTENSIONS: [&str; 5] = ["png", "pgm", "jpg", "jpeg", "PNG"];

/// How annotation CSV columns map onto ground-truth fields.
///
/// The default matches the generator's `ground_truth.csv`. External datasets
/// provide a `columns.cfg` with keys `file`, `frame_index`, `present`, `cx`,
/// `cy`, `a`, `b`, `theta`, `visibility`, `sequence`, `axes` (`semi` or
/// `full`) and `angle` (`radians` or `degrees`).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub file: String,
    pub frame_index: Option<String>,
    /// Without a presence column a row is positive iff `cx` is non-empty.
    pub present: Option<String>,
    pub cx: String,
    pub cy: String,
    pub a: String,
    pub b: String,
    pub theta: String,
    pub visibility: Option<String>,
    /// Rows whose value here changes start a new sequence.
    pub sequence: Option<String>,
    pub full_axes: bool,
    pub degrees: bool,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            file: GROUND_TRUTH_FILE.to_string(),
            frame_index: Some("frame_index".into()),
            present: Some("target_present".into()),
            cx: "cx".into(),
            cy: "cy".into(),
            a: "a".into(),
            b: "b".into(),
            theta: "theta_rad".into(),
            visibility: Some("visibility_fraction".into()),
            sequence: None,
            full_axes: false,
            degrees: false,
        }
    }
}

impl ColumnMap {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut m = Self::default();
        let opt = |k: &str, cur: Option<String>| match kv.get(k) {
            Some("") => None,
            Some(v) => Some(v.to_string()),
            None => cur,
        };
        m.frame_index = opt("frame_index", m.frame_index);
        m.present = opt("present", m.present);
        m.visibility = opt("visibility", m.visibility);
        m.sequence = opt("sequence", m.sequence);
        for (k, slot) in [
            ("file", &mut m.file),
            ("cx", &mut m.cx),
            ("cy", &mut m.cy),
            ("a", &mut m.a),
            ("b", &mut m.b),
            ("theta", &mut m.theta),
        ] {
            if let Some(v) = kv.get(k) {
                *slot = v.to_string();
            }
        }
        if let Some(v) = kv.get("axes") {
            m.full_axes = match v {
                "semi" => false,
                "full" => true,
                _ => return Err(Error::DatasetFormat(format!("axes must be semi or full, got {v:?}"))),
            };
        }
        if let Some(v) = kv.get("angle") {
            m.degrees = match v {
                "radians" => false,
                "degrees" => true,
                _ => return Err(Error::DatasetFormat(format!("angle must be radians or degrees, got {v:?}"))),
            };
        }
        Ok(m)
    }
}

/// Compares names treating digit runs as numbers, so `f2` < `f10` and
/// zero-padded names order like their indices.
pub fn natural_cmp(x: &str, y: &str) -> Ordering {
    let (mut a, mut b) = (x.as_bytes(), y.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return x.cmp(y),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(ca), Some(cb)) if ca.is_ascii_digit() && cb.is_ascii_digit() => {
                let la = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let lb = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (da, db) = (&a[..la], &b[..lb]);
                let ta = trim_zeros(da);
                let tb = trim_zeros(db);
                let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[la..];
                b = &b[lb..];
            }
            (Some(ca), Some(cb)) => {
                if ca != cb {
                    return ca.cmp(cb);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(d: &[u8]) -> &[u8] {
    let k = d.iter().take_while(|&&c| c == b'0').count();
    &d[k..]
}

/// Frame paths paired with ground truth; images load on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub frames: Vec<PathBuf>,
    pub truth: Vec<GroundTruthRecord>,
    /// Index of the first frame of every sequence after the first.
    pub sequence_starts: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_frame(&self, i: usize) -> Result<GrayImage> {
        io::load_gray(&self.frames[i])
    }

    pub fn load_all(&self) -> Result<Vec<GrayImage>> {
        use rayon::prelude::*;
        (0..self.len()).into_par_iter().map(|i| self.load_frame(i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<(GrayImage, GroundTruthRecord)>> + '_ {
        (0..self.len()).map(move |i| Ok((self.load_frame(i)?, self.truth[i])))
    }
}

/// Opens a dataset directory: frames in natural filename order and one
/// annotation row per frame, matched by frame index (or by row order when no
/// index column is mapped).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let map_path = path.join(COLUMN_MAP_FILE);
    let map = if map_path.exists() {
        ColumnMap::from_kv(&KeyValues::load(&map_path)?)?
    } else {
        ColumnMap::default()
    };
    load_dataset_with(path, &map)
}

/// Image files directly inside `dir`, in natural filename order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::DatasetFormat(format!("{} is not a directory", dir.display())));
    }
    let mut frames: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| FRAME_EXTENSIONS.contains(&e))
        })
        .collect();
    frames.sort_by(|a, b| {
        let na = a.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let nb = b.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        natural_cmp(na, nb)
    });
    Ok(frames)
}

pub fn load_dataset_with(path: &Path, map: &ColumnMap) -> Result<Dataset> {
    let frames = list_frames(path)?;
    let csv_path = path.join(&map.file);
    if !csv_path.is_file() {
        return Err(Error::DatasetFormat(format!("missing annotation file {}", csv_path.display())));
    }
    let (rows, seq) = read_annotations(&csv_path, map)?;
    if rows.len() != frames.len() {
        return Err(Error::DatasetFormat(format!(
            "{} frames but {} annotation rows",
            frames.len(),
            rows.len()
        )));
    }
    let mut truth: Vec<Option<GroundTruthRecord>> = vec![None; frames.len()];
    let mut seq_of: Vec<Option<String>> = vec![None; frames.len()];
    for (row, (mut rec, s)) in rows.into_iter().zip(seq).enumerate() {
        let i = if map.frame_index.is_some() { rec.frame_index } else { row };
        rec.frame_index = i;
        let slot = truth
            .get_mut(i)
            .ok_or_else(|| Error::DatasetFormat(format!("frame_index {i} out of range")))?;
        if slot.is_some() {
            return Err(Error::DatasetFormat(format!("duplicate frame_index {i}")));
        }
        *slot = Some(rec);
        seq_of[i] = s;
    }
    let truth: Vec<GroundTruthRecord> = truth.into_iter().map(|t| t.expect("all slots filled")).collect();
    let sequence_starts = (1..seq_of.len()).filter(|&i| seq_of[i] != seq_of[i - 1]).collect();
    Ok(Dataset {
        root: path.to_path_buf(),
        frames,
        truth,
        sequence_starts,
    })
}

type Rows = (Vec<GroundTruthRecord>, Vec<Option<String>>);

fn read_annotations(path: &Path, map: &ColumnMap) -> Result<Rows> {
    let bad = |m: String| Error::DatasetFormat(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let need = |name: &str| col.get(name).copied().ok_or_else(|| bad(format!("missing column {name:?}")));
    let opt = |name: &Option<String>| -> Result<Option<usize>> { name.as_deref().map(need).transpose() };
    let c_idx = opt(&map.frame_index)?;
    let c_present = opt(&map.present)?;
    let c_vis = opt(&map.visibility)?;
    let c_seq = opt(&map.sequence)?;
    let geo = [need(&map.cx)?, need(&map.cy)?, need(&map.a)?, need(&map.b)?, need(&map.theta)?];

    let mut out = Vec::new();
    let mut seq = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: bad number {:?}", row + 1, field(i))))
        };
        let frame_index = match c_idx {
            Some(i) => field(i)
                .parse::<usize>()
                .map_err(|_| bad(format!("row {}: bad frame index {:?}", row + 1, field(i))))?,
            None => row,
        };
        let present = match c_present {
            Some(i) => match field(i) {
                "1" | "true" | "True" | "yes" => true,
                "0" | "false" | "False" | "no" | "" => false,
                v => return Err(bad(format!("row {}: bad presence flag {v:?}", row + 1))),
            },
            None => !field(geo[0]).is_empty(),
        };
        let ellipse = if present {
            let mut v = [0.0; 5];
            for (k, &i) in geo.iter().enumerate() {
                v[k] = num(i)?;
            }
            let axis = if map.full_axes { 0.5 } else { 1.0 };
            let theta = if map.degrees { v[4].to_radians() } else { v[4] };
            Some(Ellipse::new(v[0], v[1], v[2] * axis, v[3] * axis, theta))
        } else {
            None
        };
        let visibility_fraction = match c_vis {
            Some(i) if !field(i).is_empty() => num(i)?,
            _ => f64::from(u8::from(present)),
        };
        out.push(GroundTruthRecord {
            frame_index,
            target_present: present,
            ellipse,
            visibility_fraction,
        });
        seq.push(c_seq.map(|i| field(i).to_string()));
    }
    Ok((out, seq))
}
