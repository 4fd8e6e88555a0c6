//! Frame-ordered orchestration: motion estimate, tracking, per-detection area
//! measurement and per-track smoothing, plus the tuning and ablation harness
//! built on replaying the smoother over recorded measurements.

use std::collections::{BTreeMap, HashMap};
use std::sync::mpsc::sync_channel;

use crate::bayesopt::{optimize, OptResult, SearchSpec};
use crate::cdkf::{AreaFilter, CdkfConfig, NoiseMode};
use crate::error::{Error, Result};
use crate::io::{read_correspondences, read_detections, read_pfm, FrameMotion, FrameResultRecord, SequenceManifest, FORMAT_VERSION};
use crate::mbtp::{estimate_area, AreaEstimate};
use crate::metrics::{area_consistency, group_series, AreaConsistencyReport};
use crate::model::{CameraIntrinsics, Detection, DepthMap, MotionTransform, CLASS_POTHOLE};
use crate::synth::{MotionOutput, Renderer};
use crate::tracker::{fit_motion_ransac, Correspondence, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub cdkf: CdkfConfig,
    /// When false, smoothed areas equal raw areas.
    pub smoothing: bool,
    /// Measurements with fewer valid patches than this fraction only coast
    /// the smoother.
    pub min_valid_fraction: f64,
    /// Runs depth loading, motion fitting and area measurement on a worker
    /// thread ahead of the tracker.
    pub parallel: bool,
    pub queue_depth: usize,
    /// Base seed for per-frame RANSAC.
    pub seed: u64,
    pub min_track_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tracker: TrackerConfig::default(),
            cdkf: CdkfConfig::default(),
            smoothing: true,
            min_valid_fraction: 0.5,
            parallel: false,
            queue_depth: 4,
            seed: 0,
            min_track_len: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MotionInput {
    Transform(MotionTransform),
    Correspondences(Vec<Correspondence>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub index: u64,
    pub depth: DepthMap,
    pub detections: Vec<Detection>,
    pub motion: Option<MotionInput>,
}

/// Lazily loads the frames of a manifest; each item reads one depth map.
pub fn manifest_frames(m: &SequenceManifest) -> Result<impl Iterator<Item = Result<FrameInput>> + Send + '_> {
    let mut dets = read_detections(&m.detections)?;
    let known: std::collections::BTreeSet<u64> = m.frames.iter().map(|f| f.index).collect();
    if let Some(orphan) = dets.keys().find(|k| !known.contains(k)) {
        log::warn!("detections reference frame {orphan}, which is not in the manifest");
    }
    let intr = m.intrinsics;
    Ok(m.frames.iter().map(move |f| {
        let mut load = || -> Result<FrameInput> {
            let depth = read_pfm(&f.depth)?;
            if depth.width() != intr.width || depth.height() != intr.height {
                return Err(Error::DimensionMismatch(format!(
                    "depth is {}x{}, intrinsics say {}x{}",
                    depth.width(),
                    depth.height(),
                    intr.width,
                    intr.height
                )));
            }
            let motion = match f.motion() {
                None => None,
                Some(FrameMotion::Transform(t)) => Some(MotionInput::Transform(t)),
                Some(FrameMotion::Correspondences(p)) => Some(MotionInput::Correspondences(read_correspondences(&p)?)),
            };
            Ok(FrameInput {
                index: f.index,
                depth,
                detections: dets.remove(&f.index).unwrap_or_default(),
                motion,
            })
        };
        load().map_err(|e| e.at_frame(f.index))
    }))
}

/// Renders synthetic frames on demand.
pub fn synth_frames(r: &Renderer, motion: MotionOutput) -> impl Iterator<Item = Result<FrameInput>> + Send + '_ {
    (0..r.frame_count()).map(move |k| {
        let f = r.frame(k);
        let motion = match (motion, k) {
            (_, 0) | (MotionOutput::None, _) => None,
            (MotionOutput::Transform, _) => Some(MotionInput::Transform(f.motion)),
            (MotionOutput::Correspondences, _) => Some(MotionInput::Correspondences(f.correspondences)),
        };
        Ok(FrameInput {
            index: f.index,
            depth: f.depth,
            detections: f.detections,
            motion,
        })
    })
}

/// Stateless per-frame work, safe to run ahead of the tracker.
struct Prepared {
    index: u64,
    detections: Vec<Detection>,
    measurements: Vec<Result<AreaEstimate>>,
    motion: Option<MotionTransform>,
}

fn prepare(f: FrameInput, intr: &CameraIntrinsics, seed: u64) -> Prepared {
    let motion = match f.motion {
        None => None,
        Some(MotionInput::Transform(t)) => Some(t),
        Some(MotionInput::Correspondences(cs)) => match fit_motion_ransac(&cs, seed.wrapping_add(f.index)) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("frame {}: {e}; assuming no camera motion", f.index);
                None
            }
        },
    };
    let measurements = f
        .detections
        .iter()
        .map(|d| {
            estimate_area(&d.bbox, &f.depth, intr, d.confidence).map(|mut a| {
                a.frame = f.index;
                a
            })
        })
        .collect();
    Prepared {
        index: f.index,
        detections: f.detections,
        measurements,
        motion,
    }
}

/// One smoother step; low-coverage measurements leave the filter untouched.
fn smooth(filter: &mut AreaFilter, frame: u64, raw: f64, conf: f64, dist: f64, valid_fraction: f64, min_valid: f64) -> (f64, Option<f64>) {
    if valid_fraction >= min_valid {
        match filter.observe_at(frame, raw, conf, dist) {
            Ok(out) => return out,
            Err(e) => log::warn!("frame {frame}: smoother skipped measurement: {e}"),
        }
    }
    if filter.state.is_initialized() {
        (filter.state.a, None)
    } else {
        (raw, None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub frames: usize,
    pub records: usize,
    pub skipped_detections: usize,
    pub report: AreaConsistencyReport,
}

struct Sequential<'a, S> {
    cfg: &'a PipelineConfig,
    tracker: Tracker,
    sink: S,
    frames: usize,
    records: usize,
    skipped: usize,
    obs: Vec<(u64, f64, Option<f64>)>,
}

impl<S: FnMut(FrameResultRecord) -> Result<()>> Sequential<'_, S> {
    fn consume(&mut self, p: Prepared) -> Result<()> {
        let ids = self
            .tracker
            .step_indexed(p.index, &p.detections, p.motion.as_ref())
            .map_err(|e| e.at_frame(p.index))?;
        self.frames += 1;
        for (id, di) in ids {
            let det = &p.detections[di];
            let m = match &p.measurements[di] {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("frame {}: track {id}: detection skipped: {e}", p.index);
                    self.skipped += 1;
                    continue;
                }
            };
            let (smoothed, nis) = if self.cfg.smoothing {
                let track = self.tracker.track_mut(id).expect("tracker returned a live id");
                let filter = track.cdkf.get_or_insert_with(|| AreaFilter::new(self.cfg.cdkf));
                smooth(filter, p.index, m.area_m2, det.confidence, m.distance_m, m.valid_patch_fraction(), self.cfg.min_valid_fraction)
            } else {
                (m.area_m2, None)
            };
            let rec = FrameResultRecord {
                format_version: FORMAT_VERSION,
                frame: p.index,
                track_id: id,
                class_id: det.class_id,
                bbox: det.bbox,
                confidence: det.confidence,
                distance_m: m.distance_m,
                area_raw_m2: m.area_m2,
                area_smoothed_m2: smoothed,
                nis,
                valid_patch_fraction: m.valid_patch_fraction(),
            };
            if rec.class_id == CLASS_POTHOLE {
                self.obs.push((id, smoothed, nis));
            }
            self.records += 1;
            (self.sink)(rec)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<PipelineSummary> {
        Ok(PipelineSummary {
            frames: self.frames,
            records: self.records,
            skipped_detections: self.skipped,
            report: area_consistency(&group_series(self.obs), self.cfg.min_track_len)?,
        })
    }
}

/// Runs the whole sequence, handing each record to `sink` in frame order.
/// Serial and parallel modes produce identical records.
pub fn run_pipeline<I, S>(frames: I, intr: &CameraIntrinsics, cfg: &PipelineConfig, sink: S) -> Result<PipelineSummary>
where
    I: IntoIterator<Item = Result<FrameInput>>,
    I::IntoIter: Send,
    S: FnMut(FrameResultRecord) -> Result<()>,
{
    cfg.cdkf.validate()?;
    let mut seq = Sequential {
        cfg,
        tracker: Tracker::new(cfg.tracker)?,
        sink,
        frames: 0,
        records: 0,
        skipped: 0,
        obs: Vec::new(),
    };
    let seed = cfg.seed;
    if !cfg.parallel {
        for f in frames {
            seq.consume(prepare(f?, intr, seed))?;
        }
        return seq.finish();
    }
    let iter = frames.into_iter();
    std::thread::scope(|s| -> Result<()> {
        let (tx, rx) = sync_channel::<Result<Prepared>>(cfg.queue_depth.max(1));
        s.spawn(move || {
            for f in iter {
                let item = f.map(|f| prepare(f, intr, seed));
                let failed = item.is_err();
                if tx.send(item).is_err() || failed {
                    break;
                }
            }
        });
        for item in rx {
            seq.consume(item?)?;
        }
        Ok(())
    })?;
    seq.finish()
}

/// Convenience wrapper collecting every record.
pub fn run_collect<I>(frames: I, intr: &CameraIntrinsics, cfg: &PipelineConfig) -> Result<(Vec<FrameResultRecord>, PipelineSummary)>
where
    I: IntoIterator<Item = Result<FrameInput>>,
    I::IntoIter: Send,
{
    let mut out = Vec::new();
    let summary = run_pipeline(frames, intr, cfg, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok((out, summary))
}

/// Re-runs the smoother over recorded raw measurements. With `cdkf = None`
/// the smoothed area is the raw one. Equivalent to a fresh pipeline run with
/// the same tracker output.
pub fn resmooth(records: &[FrameResultRecord], cdkf: Option<&CdkfConfig>, min_valid: f64) -> Result<Vec<FrameResultRecord>> {
    if let Some(c) = cdkf {
        c.validate()?;
    }
    let mut filters: HashMap<u64, AreaFilter> = HashMap::new();
    Ok(records
        .iter()
        .map(|r| {
            let (smoothed, nis) = match cdkf {
                None => (r.area_raw_m2, None),
                Some(c) => {
                    let f = filters.entry(r.track_id).or_insert_with(|| AreaFilter::new(*c));
                    smooth(f, r.frame, r.area_raw_m2, r.confidence, r.distance_m, r.valid_patch_fraction, min_valid)
                }
            };
            FrameResultRecord {
                area_smoothed_m2: smoothed,
                nis,
                ..r.clone()
            }
        })
        .collect())
}

/// Consistency of smoothed pothole areas, per track.
pub fn consistency_report(records: &[FrameResultRecord], min_track_len: usize) -> Result<AreaConsistencyReport> {
    let obs = records
        .iter()
        .filter(|r| r.class_id == CLASS_POTHOLE)
        .map(|r| (r.track_id, r.area_smoothed_m2, r.nis));
    area_consistency(&group_series(obs), min_track_len)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AblationRow {
    pub name: String,
    pub report: AreaConsistencyReport,
    pub objective: f64,
}

/// Raw measurements versus the three noise models, all with `base`'s other
/// parameters.
pub fn ablation(records: &[FrameResultRecord], base: &CdkfConfig, min_valid: f64, min_track_len: usize) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let variants: [(&str, Option<NoiseMode>); 4] = [
        ("raw", None),
        ("confidence_only", Some(NoiseMode::ConfidenceOnly)),
        ("distance_only", Some(NoiseMode::DistanceOnly)),
        ("combined", Some(NoiseMode::Combined)),
    ];
    for (name, mode) in variants {
        let cfg = mode.map(|mode| CdkfConfig { mode, ..*base });
        let report = consistency_report(&resmooth(records, cfg.as_ref(), min_valid)?, min_track_len)?;
        rows.push(AblationRow {
            name: name.to_string(),
            objective: report.objective(),
            report,
        });
    }
    Ok(rows)
}

/// Tunes `(lambda, theta)` for `mode` by minimizing the consistency objective
/// over replays of `records`.
pub fn optimize_smoother(
    records: &[FrameResultRecord],
    base: &CdkfConfig,
    mode: NoiseMode,
    spec: &SearchSpec,
    min_valid: f64,
    min_track_len: usize,
) -> Result<OptResult> {
    let objective = |p: [f64; 2]| -> f64 {
        let cfg = CdkfConfig {
            lambda: p[0],
            theta: p[1],
            mode,
            ..*base
        };
        resmooth(records, Some(&cfg), min_valid)
            .and_then(|r| consistency_report(&r, min_track_len))
            .map(|rep| rep.objective())
            .unwrap_or(f64::NAN)
    };
    optimize(objective, spec)
}

/// Groups records by frame, keeping order; handy for evaluation.
pub fn records_by_frame(records: &[FrameResultRecord]) -> BTreeMap<u64, Vec<&FrameResultRecord>> {
    let mut m: BTreeMap<u64, Vec<&FrameResultRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.frame).or_default().push(r);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{PotholeSpec, SceneSpec};

    fn scene(seed: u64, noisy: bool) -> SceneSpec {
        let mut s = SceneSpec::plane(CameraIntrinsics::centered(600.0, 480, 360).unwrap(), 6.0, 15);
        s.seed = seed;
        s.camera.velocity = [0.0, 0.0, 0.05];
        s.potholes.push(PotholeSpec {
            center: [-0.6, 0.2],
            semi_axes: [0.45, 0.35],
            depth: 0.04,
            class_id: 0,
        });
        s.potholes.push(PotholeSpec {
            center: [0.8, -0.3],
            semi_axes: [0.35, 0.3],
            depth: 0.03,
            class_id: 1,
        });
        if noisy {
            s.noise.box_jitter_px = 2.0;
            s.noise.confidence_std = 0.05;
            s.noise.depth_rel_std = 0.01;
        }
        s
    }

    #[test]
    fn empty_detections_yield_no_records() {
        let spec = SceneSpec::plane(CameraIntrinsics::centered(300.0, 64, 48).unwrap(), 5.0, 4);
        let r = Renderer::new(&spec).unwrap();
        let (recs, summary) = run_collect(synth_frames(&r, MotionOutput::None), &spec.intrinsics, &PipelineConfig::default()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(summary.frames, 4);
        assert_eq!(summary.report.track_count, 0);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let spec = scene(4, true);
        let r = Renderer::new(&spec).unwrap();
        let serial = run_collect(synth_frames(&r, MotionOutput::None), &spec.intrinsics, &PipelineConfig::default()).unwrap();
        let cfg = PipelineConfig {
            parallel: true,
            queue_depth: 2,
            ..Default::default()
        };
        let parallel = run_collect(synth_frames(&r, MotionOutput::None), &spec.intrinsics, &cfg).unwrap();
        assert_eq!(serial.0, parallel.0);
        assert_eq!(serial.1, parallel.1);
        assert!(!serial.0.is_empty());
    }

    #[test]
    fn manholes_are_tracked_but_not_reported() {
        let spec = scene(1, false);
        let r = Renderer::new(&spec).unwrap();
        let (recs, summary) = run_collect(synth_frames(&r, MotionOutput::None), &spec.intrinsics, &PipelineConfig::default()).unwrap();
        assert!(recs.iter().any(|r| r.class_id == 1));
        assert_eq!(summary.report.track_count, 1);
    }

    #[test]
    fn replay_matches_live_smoothing() {
        let spec = scene(2, true);
        let r = Renderer::new(&spec).unwrap();
        let raw_cfg = PipelineConfig {
            smoothing: false,
            ..Default::default()
        };
        let (raw, _) = run_collect(synth_frames(&r, MotionOutput::None), &spec.intrinsics, &raw_cfg).unwrap();
        let (live, _) = run_collect(synth_frames(&r, MotionOutput::None), &spec.intrinsics, &PipelineConfig::default()).unwrap();
        assert_eq!(resmooth(&raw, Some(&CdkfConfig::default()), 0.5).unwrap(), live);
    }

    #[test]
    fn frame_errors_carry_the_index() {
        let spec = scene(0, false);
        let r = Renderer::new(&spec).unwrap();
        for parallel in [false, true] {
            let frames = synth_frames(&r, MotionOutput::None).enumerate().map(|(k, f)| {
                if k == 3 {
                    Err(Error::Parse("corrupt depth".into()).at_frame(3))
                } else {
                    f
                }
            });
            let cfg = PipelineConfig {
                parallel,
                ..Default::default()
            };
            let err = run_collect(frames, &spec.intrinsics, &cfg).unwrap_err();
            assert!(matches!(err, Error::Frame { frame: 3, .. }), "{err}");
        }
    }
}
