//! Per-frame latency of the area estimator.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbtp::estimate_area;
use crate::model::{BBox, CameraIntrinsics, DepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub boxes: usize,
    pub box_size: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            width: 1920,
            height: 1080,
            boxes: 5,
            box_size: 200,
            iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// Sum of all estimates, so the work cannot be optimized away.
    pub checksum: f64,
}

/// Times `iters` frames of `boxes` estimates each over a smooth synthetic
/// depth map, after one warm-up frame.
pub fn bench_mbtp(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.iters == 0 || cfg.boxes == 0 || cfg.box_size < 2 || cfg.box_size > cfg.width.min(cfg.height) {
        return Err(Error::InvalidArgument(format!("unusable bench config {cfg:?}")));
    }
    let intr = CameraIntrinsics::centered(cfg.width as f64 * 0.8, cfg.width, cfg.height)?;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let depth = DepthMap::from_fn(cfg.width, cfg.height, |u, v| {
        4.0 + 6.0 * (1.0 - v as f64 / h) + 0.05 * (u as f64 / w * 20.0).sin()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.box_size as f64;
    let boxes: Vec<BBox> = (0..cfg.boxes)
        .map(|_| BBox::new(rng.random_range(0.0..=w - s).floor(), rng.random_range(0.0..=h - s).floor(), s, s))
        .collect();
    let frame = |checksum: &mut f64| -> Result<()> {
        for b in &boxes {
            *checksum += estimate_area(b, &depth, &intr, 0.9)?.area_m2;
        }
        Ok(())
    };
    let mut checksum = 0.0;
    frame(&mut checksum)?;
    let mut times = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let t0 = Instant::now();
        frame(&mut checksum)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let p95_ms = sorted[((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    Ok(BenchReport {
        config: *cfg,
        mean_ms,
        p95_ms,
        min_ms: sorted[0],
        max_ms: sorted[sorted.len() - 1],
        checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_reports_ordered_stats() {
        let r = bench_mbtp(&BenchConfig {
            width: 320,
            height: 240,
            boxes: 2,
            box_size: 40,
            iters: 10,
            seed: 1,
        })
        .unwrap();
        assert!(r.min_ms <= r.mean_ms && r.mean_ms <= r.max_ms);
        assert!(r.min_ms <= r.p95_ms && r.p95_ms <= r.max_ms);
        assert!(r.checksum > 0.0);
    }

    #[test]
    fn rejects_oversized_boxes() {
        let cfg = BenchConfig {
            width: 100,
            height: 100,
            box_size: 200,
            ..Default::default()
        };
        assert!(bench_mbtp(&cfg).is_err());
    }
}
