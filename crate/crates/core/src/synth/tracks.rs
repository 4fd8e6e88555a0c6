//! Image-plane scenarios for tracker tests: boxes in uniform linear motion,
//! optionally shifted by a sudden camera jump.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{BBox, Detection, MotionTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTrackScenario {
    pub seed: u64,
    pub objects: usize,
    pub frames: usize,
    pub width: f64,
    pub height: f64,
    pub jitter_px: f64,
    /// `(frame, dx, dy)`: from this frame on every box is displaced.
    pub jump: Option<(usize, f64, f64)>,
}

impl Default for LinearTrackScenario {
    fn default() -> Self {
        LinearTrackScenario {
            seed: 0,
            objects: 4,
            frames: 40,
            width: 1920.0,
            height: 1080.0,
            jitter_px: 0.5,
            jump: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSequence {
    /// Per frame, `(true object id, detection)`.
    pub frames: Vec<Vec<(usize, Detection)>>,
    /// Per frame, the camera motion from the previous frame.
    pub motions: Vec<MotionTransform>,
}

/// Objects live in separate grid cells wide enough for their whole path, so
/// boxes never overlap; per-frame displacement stays under 5% of the box size.
pub fn linear_tracks(sc: &LinearTrackScenario) -> TrackSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let jitter = Normal::new(0.0, sc.jitter_px.max(0.0)).expect("finite std");
    let cols = (sc.objects as f64).sqrt().ceil().max(1.0) as usize;
    let rows = sc.objects.div_ceil(cols).max(1);
    let (cw, ch) = (sc.width / cols as f64, sc.height / rows as f64);
    let n = sc.frames.max(1) as f64;

    struct Obj {
        start: (f64, f64),
        vel: (f64, f64),
        size: (f64, f64),
    }
    let objs: Vec<Obj> = (0..sc.objects)
        .map(|k| {
            let (cx0, cy0) = ((k % cols) as f64 * cw, (k / cols) as f64 * ch);
            let size: (f64, f64) = (rng.random_range(50.0..90.0), rng.random_range(50.0..90.0));
            let vmax = (0.05 * size.0.min(size.1))
                .min(0.5 * (cw - size.0).max(0.0) / n)
                .min(0.5 * (ch - size.1).max(0.0) / n);
            let vel = (rng.random_range(-vmax..=vmax), rng.random_range(-vmax..=vmax));
            // start so the whole path stays within the cell
            let span_x = (cw - size.0 - vel.0.abs() * n).max(0.0);
            let span_y = (ch - size.1 - vel.1.abs() * n).max(0.0);
            let sx = cx0 + rng.random_range(0.0..=span_x) + if vel.0 < 0.0 { vel.0.abs() * n } else { 0.0 };
            let sy = cy0 + rng.random_range(0.0..=span_y) + if vel.1 < 0.0 { vel.1.abs() * n } else { 0.0 };
            Obj {
                start: (sx, sy),
                vel,
                size,
            }
        })
        .collect();

    let mut frames = Vec::with_capacity(sc.frames);
    let mut motions = Vec::with_capacity(sc.frames);
    for f in 0..sc.frames {
        let (jx, jy) = match sc.jump {
            Some((j, dx, dy)) if f >= j => (dx, dy),
            _ => (0.0, 0.0),
        };
        motions.push(match sc.jump {
            Some((j, dx, dy)) if f == j => MotionTransform::translation(dx, dy),
            _ => MotionTransform::identity(),
        });
        let dets = objs
            .iter()
            .enumerate()
            .map(|(id, o)| {
                let x = o.start.0 + o.vel.0 * f as f64 + jx + jitter.sample(&mut rng);
                let y = o.start.1 + o.vel.1 * f as f64 + jy + jitter.sample(&mut rng);
                let conf = rng.random_range(0.6..0.95);
                (id, Detection::new(f as u64, 0, BBox::new(x, y, o.size.0, o.size.1), conf).expect("valid box"))
            })
            .collect();
        frames.push(dets);
    }
    TrackSequence { frames, motions }
}
