//! Global camera-motion estimation from keypoint correspondences and box
//! compensation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, MotionTransform};

/// A keypoint seen at `prev` in frame k-1 and at `curr` in frame k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub prev: [f64; 2],
    pub curr: [f64; 2],
}

impl Correspondence {
    pub fn new(prev: [f64; 2], curr: [f64; 2]) -> Self {
        Correspondence { prev, curr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Reprojection error below which a correspondence is an inlier, pixels.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Desired probability of drawing at least one all-inlier sample.
    pub confidence: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            inlier_threshold: 3.0,
            max_iterations: 2000,
            confidence: 0.999,
        }
    }
}

/// Fits a 6-dof affine transform `prev -> curr` by RANSAC and refits it on the
/// inliers with least squares. Falls back to identity below 3 inliers.
pub fn fit_motion_ransac(correspondences: &[Correspondence], seed: u64) -> Result<MotionTransform> {
    fit_motion_ransac_with(correspondences, seed, &RansacConfig::default())
}

pub fn fit_motion_ransac_with(correspondences: &[Correspondence], seed: u64, cfg: &RansacConfig) -> Result<MotionTransform> {
    let n = correspondences.len();
    if n < 3 {
        return Err(Error::TooFewCorrespondences(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, MotionTransform)> = None;
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iterations) {
        iter += 1;
        let idx = sample(&mut rng, n, 3);
        let trio = [correspondences[idx.index(0)], correspondences[idx.index(1)], correspondences[idx.index(2)]];
        let Some(model) = affine_from_three(&trio) else {
            continue;
        };
        let count = count_inliers(correspondences, &model, cfg.inlier_threshold);
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
            let ratio = count as f64 / n as f64;
            needed = required_iterations(ratio, cfg.confidence);
        }
    }
    let Some((count, model)) = best else {
        return Ok(MotionTransform::identity());
    };
    if count < 3 {
        return Ok(MotionTransform::identity());
    }
    // Two refinement passes: refit on the inliers, then re-select inliers.
    let mut model = model;
    for _ in 0..2 {
        let inliers: Vec<Correspondence> = correspondences
            .iter()
            .copied()
            .filter(|c| residual(&model, c) < cfg.inlier_threshold)
            .collect();
        if inliers.len() < 3 {
            break;
        }
        match affine_least_squares(&inliers) {
            Some(refit) => model = refit,
            None => break,
        }
    }
    Ok(model)
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let p_good = inlier_ratio.powi(3);
    if p_good >= 1.0 - 1e-12 {
        return 1;
    }
    if p_good <= 0.0 {
        return usize::MAX;
    }
    ((1.0 - confidence).ln() / (1.0 - p_good).ln()).ceil().max(1.0) as usize
}

fn residual(t: &MotionTransform, c: &Correspondence) -> f64 {
    let (x, y) = t.apply(c.prev[0], c.prev[1]);
    ((x - c.curr[0]).powi(2) + (y - c.curr[1]).powi(2)).sqrt()
}

fn count_inliers(cs: &[Correspondence], t: &MotionTransform, thresh: f64) -> usize {
    cs.iter().filter(|c| residual(t, c) < thresh).count()
}

fn affine_from_three(cs: &[Correspondence; 3]) -> Option<MotionTransform> {
    let a = Matrix3::new(
        cs[0].prev[0], cs[0].prev[1], 1.0, //
        cs[1].prev[0], cs[1].prev[1], 1.0, //
        cs[2].prev[0], cs[2].prev[1], 1.0,
    );
    if a.determinant().abs() < 1e-6 {
        return None;
    }
    let lu = a.lu();
    let rx = lu.solve(&Vector3::new(cs[0].curr[0], cs[1].curr[0], cs[2].curr[0]))?;
    let ry = lu.solve(&Vector3::new(cs[0].curr[1], cs[1].curr[1], cs[2].curr[1]))?;
    let t = MotionTransform::affine([rx[0], rx[1], rx[2], ry[0], ry[1], ry[2]]);
    (t.linear_det().abs() > 1e-9).then_some(t)
}

pub(crate) fn affine_least_squares(cs: &[Correspondence]) -> Option<MotionTransform> {
    let n = cs.len();
    let a = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => cs[r].prev[0],
        1 => cs[r].prev[1],
        _ => 1.0,
    });
    let bx = DVector::from_fn(n, |r, _| cs[r].curr[0]);
    let by = DVector::from_fn(n, |r, _| cs[r].curr[1]);
    let svd = a.svd(true, true);
    let rx = svd.solve(&bx, 1e-12).ok()?;
    let ry = svd.solve(&by, 1e-12).ok()?;
    let t = MotionTransform::affine([rx[0], rx[1], rx[2], ry[0], ry[1], ry[2]]);
    (t.linear_det().abs() > 1e-9).then_some(t)
}

/// Moves the box center through `t⁻¹`; width and height are kept.
pub fn compensate(b: &BBox, t: &MotionTransform) -> Result<BBox> {
    let inv = t.inverse()?;
    let (cx, cy) = b.center();
    let (x, y) = inv.apply(cx, cy);
    Ok(BBox::from_center(x, y, b.w, b.h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pure_translation() {
        let cs: Vec<_> = (0..20)
            .map(|i| {
                let p = [i as f64 * 37.0 % 500.0, i as f64 * 91.0 % 300.0];
                Correspondence::new(p, [p[0] + 5.0, p[1]])
            })
            .collect();
        let t = fit_motion_ransac(&cs, 1).unwrap();
        let p = t.affine_params();
        let expect = [1.0, 0.0, 5.0, 0.0, 1.0, 0.0];
        for k in 0..6 {
            assert!((p[k] - expect[k]).abs() < 1e-9, "{p:?}");
        }
        assert_eq!(count_inliers(&cs, &t, 3.0), cs.len());
    }

    #[test]
    fn recovers_affine_with_outliers() {
        let truth = MotionTransform::affine([1.02, -0.03, 12.0, 0.025, 0.99, -7.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut cs = Vec::new();
        for i in 0..200 {
            let prev = [rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0)];
            let curr = if i % 5 == 0 {
                [rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0)]
            } else {
                let (x, y) = truth.apply(prev[0], prev[1]);
                [x, y]
            };
            cs.push(Correspondence::new(prev, curr));
        }
        let fit = fit_motion_ransac(&cs, 5).unwrap().affine_params();
        let want = truth.affine_params();
        for k in 0..6 {
            assert!((fit[k] - want[k]).abs() < 1e-3, "coef {k}: {} vs {}", fit[k], want[k]);
        }
    }

    #[test]
    fn too_few() {
        let cs = vec![Correspondence::new([0.0, 0.0], [1.0, 1.0]); 2];
        assert!(matches!(fit_motion_ransac(&cs, 0), Err(Error::TooFewCorrespondences(2))));
    }

    #[test]
    fn degenerate_points_fall_back_to_identity() {
        let cs: Vec<_> = (0..10).map(|i| Correspondence::new([i as f64, i as f64], [i as f64 + 2.0, i as f64])).collect();
        assert_eq!(fit_motion_ransac(&cs, 0).unwrap(), MotionTransform::identity());
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cs: Vec<_> = (0..50)
            .map(|_| Correspondence::new([rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)], [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]))
            .collect();
        assert_eq!(fit_motion_ransac(&cs, 11).unwrap(), fit_motion_ransac(&cs, 11).unwrap());
    }

    #[test]
    fn compensate_examples() {
        let b = BBox::from_center(100.0, 100.0, 20.0, 10.0);
        assert_eq!(compensate(&b, &MotionTransform::identity()).unwrap(), b);

        let c = compensate(&b, &MotionTransform::translation(5.0, 0.0)).unwrap();
        assert_eq!(c.center(), (95.0, 100.0));
        assert_eq!((c.w, c.h), (20.0, 10.0));

        let b = BBox::from_center(10.0, 10.0, 4.0, 6.0);
        let scale = MotionTransform::affine([2.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let c = compensate(&b, &scale).unwrap();
        assert!((c.center().0 - 5.0).abs() < 1e-12 && (c.center().1 - 5.0).abs() < 1e-12);
        assert_eq!((c.w, c.h), (4.0, 6.0));

        let singular = MotionTransform::affine([0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(compensate(&b, &singular), Err(Error::SingularTransform)));
    }
}
