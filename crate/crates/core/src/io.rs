//! Readers and writers for annotation/result text, detection JSONL, 16-bit
//! depth images and the run configuration file.
//!
//! Annotation and result files share one format: UTF-8 lines of six
//! comma-separated integers `fn,id,x1,y1,x2,y2`; lines starting with `#` are
//! comments and blank lines are ignored. Writers emit records sorted by
//! `(fn, id)` with no header.
//!
//! Detections are one JSON object per line:
//! `{"fn": 1, "bbox": [x1, y1, x2, y2], "score": 0.9, "depth_m": 2.5}` where
//! `depth_m` is optional.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::geometry::{BBox, DepthMap};
use crate::metrics::SequenceGT;
use crate::motion::KalmanConfig;
use crate::tracker::{Detection, FrameResult, TrackDepthMode, TrackerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub frame: u32,
    pub id: u32,
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl AnnotationRecord {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x1 as f64, self.y1 as f64, self.x2 as f64, self.y2 as f64)
            .expect("records hold valid boxes")
    }
}

fn syntax(path: &Path, line: usize, column: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses annotation text. `path` only labels error messages.
pub fn parse_gt(text: &str, path: &Path) -> Result<Vec<AnnotationRecord>, FormatError> {
    let mut out = Vec::new();
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = Vec::with_capacity(6);
        let mut col = 1usize;
        for part in raw.split(',') {
            let lead = part.len() - part.trim_start().len();
            fields.push((col + lead, part.trim()));
            col += part.chars().count() + 1;
        }
        if fields.len() != 6 {
            return Err(syntax(path, line_no, 1, format!("expected 6 comma-separated fields, found {}", fields.len())));
        }
        let mut values = [0i64; 6];
        for (k, (column, field)) in fields.iter().enumerate() {
            values[k] = field
                .parse::<i64>()
                .map_err(|_| syntax(path, line_no, *column, format!("field {} is not an integer: {field:?}", k + 1)))?;
        }
        let frame = u32::try_from(values[0])
            .ok()
            .filter(|f| *f >= 1)
            .ok_or_else(|| syntax(path, line_no, fields[0].0, "frame number must be a positive integer"))?;
        let id = u32::try_from(values[1])
            .map_err(|_| syntax(path, line_no, fields[1].0, "id must be a non-negative integer"))?;
        let [_, _, x1, y1, x2, y2] = values;
        if x2 <= x1 {
            return Err(syntax(path, line_no, fields[4].0, format!("x2 ({x2}) must exceed x1 ({x1})")));
        }
        if y2 <= y1 {
            return Err(syntax(path, line_no, fields[5].0, format!("y2 ({y2}) must exceed y1 ({y1})")));
        }
        if let Some(first_line) = seen.insert((frame, id), line_no) {
            return Err(FormatError::Duplicate {
                path: path.to_path_buf(),
                line: line_no,
                frame,
                id,
                first_line,
            });
        }
        out.push(AnnotationRecord { frame, id, x1, y1, x2, y2 });
    }
    Ok(out)
}

/// Canonical text for a record set, sorted by `(fn, id)`.
pub fn write_records(records: &[AnnotationRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut out = String::new();
    for r in sorted {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.frame, r.id, r.x1, r.y1, r.x2, r.y2);
    }
    out
}

/// Rounds a box to integer pixels, half away from zero. A side that collapses
/// under rounding is widened to one pixel so the record stays valid.
pub fn round_box(b: &BBox) -> [i64; 4] {
    let [x1, y1, x2, y2] = b.to_array().map(|v| v.round() as i64);
    [x1, y1, x2.max(x1 + 1), y2.max(y1 + 1)]
}

pub fn results_to_records(frames: &[FrameResult]) -> Vec<AnnotationRecord> {
    frames
        .iter()
        .flat_map(|fr| {
            fr.tracks.iter().map(move |(id, b)| {
                let [x1, y1, x2, y2] = round_box(b);
                AnnotationRecord {
                    frame: fr.frame,
                    id: *id,
                    x1,
                    y1,
                    x2,
                    y2,
                }
            })
        })
        .collect()
}

pub fn write_results(frames: &[FrameResult]) -> String {
    write_records(&results_to_records(frames))
}

pub fn sequence_to_records(seq: &SequenceGT) -> Vec<AnnotationRecord> {
    seq.frames()
        .flat_map(|(frame, boxes)| {
            boxes.iter().map(move |(id, b)| {
                let [x1, y1, x2, y2] = round_box(b);
                AnnotationRecord { frame, id: *id, x1, y1, x2, y2 }
            })
        })
        .collect()
}

pub fn records_to_sequence(records: &[AnnotationRecord], num_frames: Option<u32>) -> SequenceGT {
    let mut seq = match num_frames {
        Some(n) => SequenceGT::with_frames(n),
        None => SequenceGT::new(),
    };
    for r in records {
        seq.insert(r.frame, r.id, r.bbox());
    }
    seq
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_gt_file(path: &Path) -> Result<Vec<AnnotationRecord>, FormatError> {
    parse_gt(&read_text(path)?, path)
}

pub fn write_records_file(path: &Path, records: &[AnnotationRecord]) -> Result<(), FormatError> {
    write_text(path, &write_records(records))
}

/// One line of a detection file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    #[serde(rename = "fn")]
    pub frame: u32,
    pub bbox: [f64; 4],
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
}

impl DetectionRecord {
    pub fn detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            score: self.score,
            depth_m: self.depth_m,
        }
    }
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<DetectionRecord>, FormatError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(raw).map_err(|e| syntax(path, line_no, e.column().max(1), e.to_string()))?;
        if rec.frame == 0 {
            return Err(syntax(path, line_no, 1, "fn must be at least 1"));
        }
        if let Err(e) = BBox::from_array(rec.bbox) {
            return Err(syntax(path, line_no, 1, e.to_string()));
        }
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(syntax(path, line_no, 1, format!("score {} outside [0, 1]", rec.score)));
        }
        if let Some(d) = rec.depth_m {
            if !(d.is_finite() && d >= 0.0) {
                return Err(syntax(path, line_no, 1, format!("depth_m {d} must be finite and non-negative")));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_detections(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("detection records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_detections_file(path: &Path) -> Result<Vec<DetectionRecord>, FormatError> {
    parse_detections(&read_text(path)?, path)
}

/// Groups detections by frame.
pub fn detections_by_frame(records: &[DetectionRecord]) -> BTreeMap<u32, Vec<Detection>> {
    let mut out: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for r in records {
        out.entry(r.frame).or_default().push(r.detection());
    }
    out
}

/// Loads a 16-bit single-channel image of millimeters into meters.
pub fn load_depth(path: &Path) -> Result<DepthMap, FormatError> {
    let depth_err = |message: String| FormatError::Depth {
        path: path.to_path_buf(),
        message,
    };
    let img = image::ImageReader::open(path)
        .map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|e| depth_err(e.to_string()))?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let values = buf.into_raw().into_iter().map(|mm| f32::from(mm) / 1000.0).collect();
            DepthMap::new(w as usize, h as usize, values).map_err(|e| depth_err(e.to_string()))
        }
        other => Err(depth_err(format!(
            "expected a 16-bit single-channel image, found {:?}",
            other.color()
        ))),
    }
}

/// Writes meters as 16-bit millimeters, rounding and saturating at 65535.
pub fn save_depth(path: &Path, depth: &DepthMap) -> Result<(), FormatError> {
    let raw: Vec<u16> = depth
        .values()
        .iter()
        .map(|m| (f64::from(*m) * 1000.0).round().clamp(0.0, f64::from(u16::MAX)) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw).expect("buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| FormatError::Depth {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Linear map of `[range_min, range_max]` meters onto `0..=255`, replicated on
/// three channels. Invalid pixels are black; out-of-range depths clamp.
pub fn export_pseudo_rgb(depth: &DepthMap, range_min_m: f64, range_max_m: f64) -> RgbImage {
    assert!(range_max_m > range_min_m && range_min_m >= 0.0, "range_max must exceed range_min >= 0");
    let span = range_max_m - range_min_m;
    RgbImage::from_fn(depth.width() as u32, depth.height() as u32, |x, y| {
        let v = f64::from(depth.get(x as usize, y as usize));
        let level = if v > 0.0 {
            ((v.clamp(range_min_m, range_max_m) - range_min_m) / span * 255.0).round() as u8
        } else {
            0
        };
        image::Rgb([level; 3])
    })
}

/// Every tunable knob, all optional; absent keys keep their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub s_neutral: Option<f64>,
    pub lambda: Option<f64>,
    pub gate: Option<f64>,
    pub second_round: Option<bool>,
    pub second_round_iou_gate: Option<f64>,
    pub max_age: Option<u32>,
    pub min_hits: Option<u32>,
    pub det_score_min: Option<f64>,
    pub vdc_window: Option<u32>,
    pub track_depth: Option<TrackDepthMode>,
    pub init_position_var: Option<f64>,
    pub init_velocity_var: Option<f64>,
    pub std_weight_position: Option<f64>,
    pub std_weight_velocity: Option<f64>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, FormatError> {
        toml::from_str(text).map_err(|e| FormatError::Config {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::parse(&read_text(path)?, path)
    }

    /// Overlays the knobs present in this file onto `params`.
    pub fn apply(&self, params: &mut TrackerParams) {
        fn set<T: Copy>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut params.sim.alpha, self.alpha);
        set(&mut params.sim.sigma, self.sigma);
        set(&mut params.sim.s_neutral, self.s_neutral);
        set(&mut params.assoc.lambda, self.lambda);
        set(&mut params.assoc.gate, self.gate);
        set(&mut params.assoc.second_round, self.second_round);
        set(&mut params.assoc.second_round_iou_gate, self.second_round_iou_gate);
        set(&mut params.max_age, self.max_age);
        set(&mut params.min_hits, self.min_hits);
        set(&mut params.det_score_min, self.det_score_min);
        set(&mut params.vdc_window, self.vdc_window);
        set(&mut params.track_depth, self.track_depth);
        let k: &mut KalmanConfig = &mut params.kalman;
        set(&mut k.init_position_var, self.init_position_var);
        set(&mut k.init_velocity_var, self.init_velocity_var);
        set(&mut k.std_weight_position, self.std_weight_position);
        set(&mut k.std_weight_velocity, self.std_weight_velocity);
    }
}

/// Files of one sequence directory: `gt.txt`, `det.jsonl`, `depth/<frame>.png`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDir {
    pub name: String,
    pub root: PathBuf,
}

impl SequenceDir {
    pub const GT: &'static str = "gt.txt";
    pub const DETECTIONS: &'static str = "det.jsonl";
    pub const DEPTH: &'static str = "depth";

    pub fn gt_path(&self) -> PathBuf {
        self.root.join(Self::GT)
    }

    pub fn detections_path(&self) -> PathBuf {
        self.root.join(Self::DETECTIONS)
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.root.join(Self::DEPTH)
    }

    pub fn depth_file_name(frame: u32) -> String {
        format!("{frame:06}.png")
    }

    /// Depth images keyed by the frame number parsed from the file stem.
    pub fn depth_files(&self) -> Result<BTreeMap<u32, PathBuf>, FormatError> {
        let dir = self.depth_dir();
        let mut out = BTreeMap::new();
        if !dir.is_dir() {
            return Ok(out);
        }
        let entries = fs::read_dir(&dir).map_err(|source| FormatError::Io { path: dir.clone(), source })?;
        for entry in entries {
            let path = entry.map_err(|source| FormatError::Io { path: dir.clone(), source })?.path();
            let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            let frame = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u32>().ok());
            if let (true, Some(frame)) = (is_png, frame) {
                out.insert(frame, path);
            }
        }
        Ok(out)
    }
}

/// Sequence subdirectories of `root`, sorted by name.
pub fn list_sequences(root: &Path) -> Result<Vec<SequenceDir>, FormatError> {
    let entries = fs::read_dir(root).map_err(|source| FormatError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| FormatError::Io {
                path: root.to_path_buf(),
                source,
            })?
            .path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push(SequenceDir {
                    name: name.to_string(),
                    root: path.clone(),
                });
            }
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
