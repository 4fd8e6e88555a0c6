//! On-disk formats: grayscale PFM depth maps, line-delimited JSON records and
//! the TOML sequence manifest.

mod manifest;
mod pfm;
mod records;

pub use manifest::{FrameEntry, FrameMotion, SequenceManifest};
pub use pfm::{parse_pfm, read_pfm, write_pfm, write_pfm_file};
pub use records::{
    detection_to_line, parse_correspondences, parse_detections, parse_results, read_correspondences, read_detections,
    read_results, CorrespondenceRecord, DetectionRecord, FrameResultRecord,
};

/// Version stamped into every record, manifest and report we write.
pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn check_version(v: u32) -> crate::Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(crate::Error::UnsupportedVersion(v))
    }
}

pub(crate) fn default_version() -> u32 {
    FORMAT_VERSION
}
