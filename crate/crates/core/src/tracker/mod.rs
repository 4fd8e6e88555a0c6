//! Appearance-free multi-object tracking: camera-motion compensation,
//! constant-velocity box prediction and two-stage IoU association.

pub mod hungarian;
pub mod kalman;
pub mod motion;

use serde::{Deserialize, Serialize};

use crate::cdkf::AreaFilter;
use crate::error::{Error, Result};
use crate::model::{iou, BBox, Detection, MotionTransform};

pub use hungarian::hungarian_solve;
pub use kalman::{kf_update, predict, BoxNoise, TrackState};
pub use motion::{compensate, fit_motion_ransac, Correspondence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub class_id: u32,
    pub age: u64,
    pub misses: u32,
    pub hits: u32,
    pub status: TrackStatus,
    pub cdkf: Option<AreaFilter>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub high_conf_threshold: f64,
    pub low_conf_floor: f64,
    pub iou_gate_stage1: f64,
    pub iou_gate_stage2: f64,
    pub max_misses: u32,
    pub min_hits_to_confirm: u32,
    pub noise: BoxNoise,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            high_conf_threshold: 0.5,
            low_conf_floor: 0.1,
            iou_gate_stage1: 0.3,
            iou_gate_stage2: 0.5,
            max_misses: 30,
            min_hits_to_confirm: 2,
            noise: BoxNoise::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.low_conf_floor && self.low_conf_floor < self.high_conf_threshold && self.high_conf_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= low_conf_floor ({}) < high_conf_threshold ({}) <= 1",
                self.low_conf_floor, self.high_conf_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssociationResult {
    /// `(track index, detection index)`.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Cost assigned to gated-out pairs so the solver only takes them when forced;
/// such pairs are discarded afterwards.
const GATED_COST: f64 = 1e6;

fn gated_match(track_boxes: &[BBox], tracks: &[usize], dets: &[Detection], cands: &[usize], gate: f64) -> Vec<(usize, usize)> {
    if tracks.is_empty() || cands.is_empty() {
        return Vec::new();
    }
    let ious: Vec<Vec<f64>> = tracks
        .iter()
        .map(|&t| cands.iter().map(|&d| iou(&track_boxes[t], &dets[d].bbox)).collect())
        .collect();
    let cost: Vec<Vec<f64>> = ious
        .iter()
        .map(|row| row.iter().map(|&v| if v >= gate { 1.0 - v } else { GATED_COST }).collect())
        .collect();
    hungarian_solve(&cost)
        .into_iter()
        .filter(|&(r, c)| ious[r][c] >= gate)
        .map(|(r, c)| (tracks[r], cands[c]))
        .collect()
}

/// Two-stage association: high-confidence detections against all tracks,
/// then the leftover tracks against low-confidence detections. Detections
/// below `low_conf_floor` take no part.
pub fn associate(track_boxes: &[BBox], dets: &[Detection], cfg: &TrackerConfig) -> AssociationResult {
    let high: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].confidence >= cfg.high_conf_threshold).collect();
    let low: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= cfg.low_conf_floor && dets[i].confidence < cfg.high_conf_threshold)
        .collect();
    let all_tracks: Vec<usize> = (0..track_boxes.len()).collect();

    let mut matches = gated_match(track_boxes, &all_tracks, dets, &high, cfg.iou_gate_stage1);
    let mut track_used = vec![false; track_boxes.len()];
    let mut det_used = vec![false; dets.len()];
    for &(t, d) in &matches {
        track_used[t] = true;
        det_used[d] = true;
    }
    let remaining: Vec<usize> = all_tracks.iter().copied().filter(|&t| !track_used[t]).collect();
    for (t, d) in gated_match(track_boxes, &remaining, dets, &low, cfg.iou_gate_stage2) {
        track_used[t] = true;
        det_used[d] = true;
        matches.push((t, d));
    }
    matches.sort_unstable();
    AssociationResult {
        matches,
        unmatched_tracks: (0..track_boxes.len()).filter(|&t| !track_used[t]).collect(),
        unmatched_detections: (0..dets.len()).filter(|&d| !det_used[d]).collect(),
    }
}

/// Single-sequence tracker. One `step` per frame, in increasing frame order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (non-deleted) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }

    /// Advances the tracker by one frame. `motion` maps previous-frame pixels
    /// to this frame's pixels. Returns the track id of every detection that
    /// was matched or started a track, in input order.
    pub fn step(&mut self, frame: u64, frame_dets: &[Detection], motion: Option<&MotionTransform>) -> Result<Vec<(u64, Detection)>> {
        Ok(self
            .step_indexed(frame, frame_dets, motion)?
            .into_iter()
            .map(|(id, di)| (id, frame_dets[di]))
            .collect())
    }

    /// Same as [`Tracker::step`] but pairs track ids with detection indices.
    pub fn step_indexed(&mut self, frame: u64, frame_dets: &[Detection], motion: Option<&MotionTransform>) -> Result<Vec<(u64, usize)>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { last, got: frame });
            }
        }
        if let Some(t) = motion {
            // The state is warped forward by T, which aligns tracks with this
            // frame's detections exactly as mapping the detections back by T⁻¹.
            t.inverse()?;
            for tr in &mut self.tracks {
                tr.state.warp(t);
            }
        }
        let gap = self.last_frame.map_or(1, |l| frame - l);
        self.last_frame = Some(frame);
        for tr in &mut self.tracks {
            for _ in 0..gap {
                tr.state = predict(&tr.state, &self.cfg.noise);
            }
            tr.age += gap;
        }

        let boxes: Vec<BBox> = self.tracks.iter().map(|t| t.state.bbox()).collect();
        let assoc = associate(&boxes, frame_dets, &self.cfg);

        let mut assigned: Vec<Option<u64>> = vec![None; frame_dets.len()];
        for &(ti, di) in &assoc.matches {
            let det = &frame_dets[di];
            let tr = &mut self.tracks[ti];
            tr.state = kf_update(&tr.state, &det.bbox, &self.cfg.noise);
            tr.hits += 1;
            tr.misses = 0;
            tr.class_id = det.class_id;
            if tr.status == TrackStatus::Tentative && tr.hits >= self.cfg.min_hits_to_confirm {
                tr.status = TrackStatus::Confirmed;
            }
            assigned[di] = Some(tr.id);
        }
        for &ti in &assoc.unmatched_tracks {
            let tr = &mut self.tracks[ti];
            tr.misses += 1;
            let expired = match tr.status {
                TrackStatus::Tentative => true,
                _ => tr.misses > self.cfg.max_misses,
            };
            if expired {
                tr.status = TrackStatus::Deleted;
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);

        for &di in &assoc.unmatched_detections {
            let det = &frame_dets[di];
            if det.confidence < self.cfg.high_conf_threshold {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let status = if self.cfg.min_hits_to_confirm <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            self.tracks.push(Track {
                id,
                state: TrackState::initiate(&det.bbox, &self.cfg.noise),
                class_id: det.class_id,
                age: 0,
                misses: 0,
                hits: 1,
                status,
                cdkf: None,
            });
            assigned[di] = Some(id);
        }

        Ok(assigned.into_iter().enumerate().filter_map(|(di, id)| id.map(|id| (id, di))).collect())
    }
}
