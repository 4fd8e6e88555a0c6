//! TOML sequence manifest. Relative paths resolve against the manifest's
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_version, default_version};
use crate::error::{Error, Result};
use crate::model::{CameraIntrinsics, MotionTransform};

/// Camera motion into a frame: either given directly or estimated from
/// keypoint correspondences.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameMotion {
    Transform(MotionTransform),
    Correspondences(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: u64,
    pub depth: PathBuf,
    /// Affine `[a, b, tx, c, d, ty]`, previous frame to this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondences: Option<PathBuf>,
}

impl FrameEntry {
    pub fn motion(&self) -> Option<FrameMotion> {
        match (&self.motion, &self.correspondences) {
            (Some(p), _) => Some(FrameMotion::Transform(MotionTransform::affine(*p))),
            (None, Some(path)) => Some(FrameMotion::Correspondences(path.clone())),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    #[serde(default = "default_version")]
    pub format_version: u32,
    #[serde(default)]
    pub dataset: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub intrinsics: CameraIntrinsics,
    /// Detection records for every frame.
    pub detections: PathBuf,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
}

fn default_fps() -> f64 {
    30.0
}

impl SequenceManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: SequenceManifest = toml::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        check_version(m.format_version)?;
        m.intrinsics.validate()?;
        if !(m.fps.is_finite() && m.fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps {} must be positive", m.fps)));
        }
        for w in m.frames.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::InvalidArgument(format!(
                    "frame indices must increase strictly ({} then {})",
                    w[0].index, w[1].index
                )));
            }
        }
        Ok(m)
    }

    /// Parses and rebases every relative path onto the manifest's directory,
    /// then checks that the referenced files exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.rebase(base);
        m.check_files()?;
        Ok(m)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.detections);
        for f in &mut self.frames {
            fix(&mut f.depth);
            if let Some(c) = f.correspondences.as_mut() {
                fix(c);
            }
        }
    }

    fn check_files(&self) -> Result<()> {
        let must_exist = |p: &Path| -> Result<()> {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing")))
            }
        };
        must_exist(&self.detections)?;
        for f in &self.frames {
            must_exist(&f.depth).map_err(|e| e.at_frame(f.index))?;
            if let Some(c) = &f.correspondences {
                must_exist(c).map_err(|e| e.at_frame(f.index))?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}
