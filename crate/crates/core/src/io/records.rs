//! Line-delimited JSON records: detections in, per-frame results out, and
//! keypoint correspondences.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_version, default_version, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::model::{BBox, Detection};
use crate::tracker::Correspondence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub frame: u64,
    pub class_id: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            format_version: FORMAT_VERSION,
            frame: d.frame,
            class_id: d.class_id,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            confidence: d.confidence,
        }
    }
}

pub fn detection_to_line(d: &Detection) -> String {
    serde_json::to_string(&DetectionRecord::from(d)).expect("record serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResultRecord {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub frame: u64,
    pub track_id: u64,
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub distance_m: f64,
    pub area_raw_m2: f64,
    /// Equal to `area_raw_m2` when smoothing is off.
    pub area_smoothed_m2: f64,
    pub nis: Option<f64>,
    pub valid_patch_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceRecord {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub prev: [f64; 2],
    pub curr: [f64; 2],
}

/// Parses non-blank lines; `convert` sees the 1-based line number.
fn parse_lines<R: DeserializeOwned, T>(text: &str, mut convert: impl FnMut(R, usize) -> Result<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: R = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: line_no,
            msg: e.to_string(),
        })?;
        out.push(convert(rec, line_no)?);
    }
    Ok(out)
}

fn version_at(v: u32, line: usize) -> Result<()> {
    check_version(v).map_err(|e| Error::MalformedLine { line, msg: e.to_string() })
}

/// Groups detections by frame, keeping input order within a frame.
pub fn parse_detections(text: &str) -> Result<BTreeMap<u64, Vec<Detection>>> {
    let dets = parse_lines(text, |r: DetectionRecord, line| {
        version_at(r.format_version, line)?;
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(Error::MalformedLine {
                line,
                msg: format!("confidence {} outside [0, 1]", r.confidence),
            });
        }
        Detection::new(r.frame, r.class_id, BBox::new(r.x, r.y, r.w, r.h), r.confidence)
            .map_err(|e| Error::MalformedLine { line, msg: e.to_string() })
    })?;
    let mut map: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        map.entry(d.frame).or_default().push(d);
    }
    Ok(map)
}

pub fn parse_results(text: &str) -> Result<Vec<FrameResultRecord>> {
    parse_lines(text, |r: FrameResultRecord, line| {
        version_at(r.format_version, line)?;
        if r.area_raw_m2 < 0.0 || r.area_smoothed_m2 < 0.0 {
            return Err(Error::MalformedLine {
                line,
                msg: "negative area".into(),
            });
        }
        Ok(r)
    })
}

pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>> {
    parse_lines(text, |r: CorrespondenceRecord, line| {
        version_at(r.format_version, line)?;
        Ok(Correspondence::new(r.prev, r.curr))
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: &Path) -> Result<BTreeMap<u64, Vec<Detection>>> {
    parse_detections(&read_text(path)?)
}

pub fn read_results(path: &Path) -> Result<Vec<FrameResultRecord>> {
    parse_results(&read_text(path)?)
}

pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    parse_correspondences(&read_text(path)?)
}
