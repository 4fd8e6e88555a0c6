//! Detection quality (precision, recall, F1, AP), per-track area consistency
//! (MAE, CV, AFD), filter consistency (NIS) and the tuning objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{iou, BBox, CameraIntrinsics, DepthMap};
use crate::projection::backproject;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching in descending confidence order. Returns the
/// per-detection TP flags in that order along with the counts.
fn greedy_flags(dets: &[(BBox, f64)], gts: &[BBox], iou_thresh: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.total_cmp(&dets[a].1));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|di| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(gi, _)| !taken[*gi])
                .map(|(gi, g)| (gi, iou(&dets[di].0, g)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let tp = match best {
                Some((gi, v)) if v >= iou_thresh => {
                    taken[gi] = true;
                    true
                }
                _ => false,
            };
            (dets[di].1, tp)
        })
        .collect()
}

/// `dets` are `(box, confidence)`; a detection is a TP when its best-IoU
/// still-unmatched ground truth reaches `iou_thresh`.
pub fn match_for_eval(dets: &[(BBox, f64)], gts: &[BBox], iou_thresh: f64) -> MatchCounts {
    let tp = greedy_flags(dets, gts, iou_thresh).iter().filter(|f| f.1).count();
    MatchCounts {
        tp,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r <= 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_score(p, r))
}

/// 101-point interpolated AP over detections already ranked by descending
/// confidence; `flags[i]` tells whether the i-th ranked detection is a TP.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut total = 0.0;
    let mut idx = 0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        while idx < recall.len() && recall[idx] < r - 1e-12 {
            idx += 1;
        }
        if idx == recall.len() {
            break;
        }
        total += precision[idx];
    }
    total / 101.0
}

/// One image's detections and ground truth for dataset-level evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalImage {
    pub dets: Vec<(BBox, f64)>,
    pub gts: Vec<BBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap50: f64,
    pub ap50_95: f64,
    pub iou_threshold: f64,
}

/// AP at `iou_thresh`, pooling all images' detections into one ranking.
pub fn dataset_ap(images: &[EvalImage], iou_thresh: f64) -> f64 {
    let n_gt: usize = images.iter().map(|im| im.gts.len()).sum();
    let mut ranked: Vec<(f64, usize, bool)> = Vec::new();
    for (ii, im) in images.iter().enumerate() {
        for (c, f) in greedy_flags(&im.dets, &im.gts, iou_thresh) {
            ranked.push((c, ii, f));
        }
    }
    // stable: ties keep image order, then within-image greedy order
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let flags: Vec<bool> = ranked.iter().map(|r| r.2).collect();
    average_precision(&flags, n_gt)
}

/// Counts at `iou_thresh` plus AP(50) and AP(50-95).
pub fn evaluate_detections(images: &[EvalImage], iou_thresh: f64) -> DetectionEvalReport {
    let mut counts = MatchCounts::default();
    for im in images {
        let c = match_for_eval(&im.dets, &im.gts, iou_thresh);
        counts.tp += c.tp;
        counts.fp += c.fp;
        counts.fn_ += c.fn_;
    }
    let (precision, recall, f1) = precision_recall_f1(counts.tp, counts.fp, counts.fn_);
    let ap50 = dataset_ap(images, 0.5);
    let ap50_95 = (0..10).map(|k| dataset_ap(images, 0.5 + 0.05 * k as f64)).sum::<f64>() / 10.0;
    DetectionEvalReport {
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
        precision,
        recall,
        f1,
        ap50,
        ap50_95,
        iou_threshold: iou_thresh,
    }
}

fn mean(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

/// Mean absolute deviation from the series mean.
pub fn area_mae(series: &[f64]) -> Result<f64> {
    let m = mean(series)?;
    Ok(series.iter().map(|a| (a - m).abs()).sum::<f64>() / series.len() as f64)
}

/// Population standard deviation over the mean.
pub fn area_cv(series: &[f64]) -> Result<f64> {
    let m = mean(series)?;
    if m == 0.0 {
        return Err(Error::ZeroMean);
    }
    // the rounded mean of equal values can miss them by an ulp
    if series.iter().all(|a| *a == series[0]) {
        return Ok(0.0);
    }
    let var = series.iter().map(|a| (a - m).powi(2)).sum::<f64>() / series.len() as f64;
    Ok(var.sqrt() / m)
}

/// Mean absolute difference between consecutive values.
pub fn area_afd(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::TooShort(series.len()));
    }
    Ok(series.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (series.len() - 1) as f64)
}

pub fn nis_aggregate(per_update_nis: &[f64]) -> Result<f64> {
    mean(per_update_nis)
}

/// `J = 10 MAE + CV + AFD + NIS`.
pub fn objective_j(mae: f64, cv: f64, afd: f64, nis: f64) -> f64 {
    10.0 * mae + cv + afd + nis
}

/// One track's area series and the NIS values of its filter updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackSeries {
    pub track_id: u64,
    pub areas: Vec<f64>,
    pub nis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConsistency {
    pub track_id: u64,
    pub n: usize,
    pub mean_area: f64,
    pub mae: f64,
    pub cv: f64,
    pub afd: f64,
    pub nis_mean: Option<f64>,
}

/// Dataset-level consistency: unweighted means over the tracks with at least
/// `min_track_len` observations (per-track averaging).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaConsistencyReport {
    pub format_version: u32,
    pub aggregation: String,
    pub min_track_len: usize,
    pub track_count: usize,
    pub mae: f64,
    pub cv: f64,
    pub afd: f64,
    pub nis_mean: Option<f64>,
    pub per_track: Vec<TrackConsistency>,
}

impl AreaConsistencyReport {
    /// `J` for this report; NIS counts as 0 when no filter ran.
    pub fn objective(&self) -> f64 {
        objective_j(self.mae, self.cv, self.afd, self.nis_mean.unwrap_or(0.0))
    }
}

pub fn area_consistency(tracks: &[TrackSeries], min_track_len: usize) -> Result<AreaConsistencyReport> {
    let min_len = min_track_len.max(2);
    let mut per_track = Vec::new();
    for t in tracks.iter().filter(|t| t.areas.len() >= min_len) {
        let mean_area = mean(&t.areas)?;
        if mean_area <= 0.0 {
            log::warn!("track {} has non-positive mean area; excluded", t.track_id);
            continue;
        }
        per_track.push(TrackConsistency {
            track_id: t.track_id,
            n: t.areas.len(),
            mean_area,
            mae: area_mae(&t.areas)?,
            cv: area_cv(&t.areas)?,
            afd: area_afd(&t.areas)?,
            nis_mean: nis_aggregate(&t.nis).ok(),
        });
    }
    let avg = |f: &dyn Fn(&TrackConsistency) -> f64| -> f64 {
        if per_track.is_empty() {
            0.0
        } else {
            per_track.iter().map(f).sum::<f64>() / per_track.len() as f64
        }
    };
    let nis_vals: Vec<f64> = per_track.iter().filter_map(|t| t.nis_mean).collect();
    Ok(AreaConsistencyReport {
        format_version: crate::io::FORMAT_VERSION,
        aggregation: "per_track_mean".to_string(),
        min_track_len,
        track_count: per_track.len(),
        mae: avg(&|t| t.mae),
        cv: avg(&|t| t.cv),
        afd: avg(&|t| t.afd),
        nis_mean: mean(&nis_vals).ok(),
        per_track,
    })
}

/// Groups `(track_id, area, nis)` observations into per-track series, in
/// observation order.
pub fn group_series(obs: impl IntoIterator<Item = (u64, f64, Option<f64>)>) -> Vec<TrackSeries> {
    let mut map: BTreeMap<u64, TrackSeries> = BTreeMap::new();
    for (id, area, nis) in obs {
        let e = map.entry(id).or_insert_with(|| TrackSeries {
            track_id: id,
            ..Default::default()
        });
        e.areas.push(area);
        if let Some(v) = nis {
            e.nis.push(v);
        }
    }
    map.into_values().collect()
}

/// Corner-point baseline: lifts the box's top-left and bottom-right pixels
/// with their own depths and takes the flat rectangle between them. No
/// ellipse factor is applied.
pub fn corner_point_area(b: &BBox, d: &DepthMap, intr: &CameraIntrinsics) -> Result<f64> {
    let (u0, u1, v0, v1) = b.pixel_span(d.width(), d.height());
    if u0 >= u1 || v0 >= v1 {
        return Err(Error::EmptyRegion);
    }
    let (ur, vb) = (u1 - 1, v1 - 1);
    let z0 = d.get(u0, v0)?.ok_or(Error::NoValidDepth)?;
    let z1 = d.get(ur, vb)?.ok_or(Error::NoValidDepth)?;
    let p0 = backproject(u0 as f64, v0 as f64, z0, intr)?;
    let p1 = backproject(ur as f64, vb as f64, z1, intr)?;
    Ok((p1.x - p0.x).abs() * (p1.y - p0.y).abs())
}
