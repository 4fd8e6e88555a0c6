//! Writes a rendered scene in the formats the pipeline reads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{GroundTruth, MotionOutput, Renderer, SceneSpec};
use crate::error::{Error, Result};
use crate::io::{detection_to_line, write_pfm_file, CorrespondenceRecord, FrameEntry, SequenceManifest, FORMAT_VERSION};
use crate::model::Detection;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFiles {
    pub manifest: PathBuf,
    pub ground_truth: PathBuf,
    /// Ground-truth boxes as detection records with confidence 1.
    pub gt_boxes: PathBuf,
    pub gt: GroundTruth,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Renders frame by frame into `dir`: `manifest.toml`, `depth/*.pfm`,
/// `detections.jsonl`, `gt.json`, `gt_boxes.jsonl` and, when requested,
/// `correspondences/*.jsonl`.
pub fn write_scene(spec: &SceneSpec, dir: &Path) -> Result<SceneFiles> {
    let r = Renderer::new(spec)?;
    mkdir(&dir.join("depth"))?;
    let with_corr = spec.output.motion == MotionOutput::Correspondences;
    if with_corr {
        mkdir(&dir.join("correspondences"))?;
    }
    let mut dets = String::new();
    let mut entries = Vec::with_capacity(spec.frames);
    for k in 0..spec.frames {
        let f = r.frame(k);
        let depth_rel = PathBuf::from(format!("depth/{k:06}.pfm"));
        write_pfm_file(&dir.join(&depth_rel), &f.depth)?;
        for d in &f.detections {
            writeln!(dets, "{}", detection_to_line(d)).expect("string write");
        }
        let mut entry = FrameEntry {
            index: k as u64,
            depth: depth_rel,
            motion: None,
            correspondences: None,
        };
        if k > 0 {
            match spec.output.motion {
                MotionOutput::None => {}
                MotionOutput::Transform => entry.motion = Some(f.motion.affine_params()),
                MotionOutput::Correspondences => {
                    let rel = PathBuf::from(format!("correspondences/{k:06}.jsonl"));
                    let mut text = String::new();
                    for c in &f.correspondences {
                        let rec = CorrespondenceRecord {
                            format_version: FORMAT_VERSION,
                            prev: c.prev,
                            curr: c.curr,
                        };
                        writeln!(text, "{}", serde_json::to_string(&rec).expect("record serializes")).expect("string write");
                    }
                    write(&dir.join(&rel), &text)?;
                    entry.correspondences = Some(rel);
                }
            }
        }
        entries.push(entry);
    }
    write(&dir.join("detections.jsonl"), &dets)?;

    let gt = r.ground_truth();
    let mut gt_lines = String::new();
    for (k, boxes) in gt.boxes.iter().enumerate() {
        for b in boxes {
            let d = Detection::new(k as u64, b.class_id, b.bbox, 1.0)?;
            writeln!(gt_lines, "{}", detection_to_line(&d)).expect("string write");
        }
    }
    let gt_boxes = dir.join("gt_boxes.jsonl");
    write(&gt_boxes, &gt_lines)?;
    let ground_truth = dir.join("gt.json");
    write(&ground_truth, &serde_json::to_string_pretty(&gt).expect("gt serializes"))?;

    let manifest = SequenceManifest {
        format_version: FORMAT_VERSION,
        dataset: "synthetic".into(),
        fps: spec.output.fps,
        intrinsics: spec.intrinsics,
        detections: PathBuf::from("detections.jsonl"),
        frames: entries,
    };
    let manifest_path = dir.join("manifest.toml");
    write(&manifest_path, &manifest.to_toml())?;
    Ok(SceneFiles {
        manifest: manifest_path,
        ground_truth,
        gt_boxes,
        gt,
    })
}
