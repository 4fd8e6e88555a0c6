use std::collections::HashSet;

use pothole_core::bayesopt::{optimize, SearchSpec};
use pothole_core::cdkf::{AreaFilter, CdkfConfig};
use pothole_core::mbtp::estimate_area;
use pothole_core::metrics::{area_afd, area_cv, area_mae, average_precision, evaluate_detections, match_for_eval, EvalImage};
use pothole_core::model::{BBox, CameraIntrinsics, DepthMap, Detection};
use pothole_core::tracker::{associate, Tracker, TrackerConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn intr() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 520.0, 160.0, 120.0, 320, 240).unwrap()
}

fn random_depth(seed: u64, hole_rate: f64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DepthMap::from_fn(320, 240, |_, _| if rng.random::<f64>() < hole_rate { f64::NAN } else { rng.random_range(0.5..30.0) })
}

fn small_box() -> impl Strategy<Value = BBox> {
    (0.0..200.0f64, 0.0..150.0f64, 2.0..120.0f64, 2.0..90.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
}

fn random_images(seed: u64) -> Vec<EvalImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand_box = |rng: &mut ChaCha8Rng| BBox::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0), rng.random_range(10.0..60.0), rng.random_range(10.0..60.0));
    (0..rng.random_range(1..4))
        .map(|_| {
            let gts: Vec<BBox> = (0..rng.random_range(0..5)).map(|_| rand_box(&mut rng)).collect();
            let mut dets = Vec::new();
            for g in &gts {
                if rng.random::<f64>() < 0.8 {
                    let s = rng.random_range(-8.0..8.0);
                    dets.push((BBox::new(g.x + s, g.y - s / 2.0, g.w, g.h), rng.random::<f64>()));
                }
            }
            for _ in 0..rng.random_range(0..3) {
                dets.push((rand_box(&mut rng), rng.random::<f64>()));
            }
            EvalImage { dets, gts }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn area_scales_with_depth_squared(z in 0.2..50.0f64, k in 0.1..10.0f64, b in small_box()) {
        let a1 = estimate_area(&b, &DepthMap::uniform(320, 240, z), &intr(), 0.9).unwrap().area_m2;
        let a2 = estimate_area(&b, &DepthMap::uniform(320, 240, k * z), &intr(), 0.9).unwrap().area_m2;
        prop_assert!((a2 - k * k * a1).abs() <= 1e-9 * a2.max(1e-12));
    }

    #[test]
    fn enlarging_a_box_never_shrinks_the_area(z in 0.5..20.0f64, b in small_box(), grow in (0.0..30.0f64, 0.0..30.0f64, 0.0..30.0f64, 0.0..30.0f64)) {
        let d = DepthMap::uniform(320, 240, z);
        let big = BBox::new(b.x - grow.0, b.y - grow.1, b.w + grow.0 + grow.2, b.h + grow.1 + grow.3);
        let a = estimate_area(&b, &d, &intr(), 0.9).unwrap().area_m2;
        let a_big = estimate_area(&big, &d, &intr(), 0.9).unwrap().area_m2;
        prop_assert!(a_big >= a);
    }

    #[test]
    fn shifting_on_a_plane_keeps_the_area(z in 0.5..20.0f64, size in (250.0..400.0f64, 250.0..400.0f64), x in 0.0..300.0f64, y in 0.0..200.0f64, dx in -200.0..200.0f64, dy in -150.0..150.0f64) {
        // sub-pixel shifts move the covered pixel count by at most one per axis
        let k = CameraIntrinsics::new(900.0, 900.0, 640.0, 480.0, 1280, 960).unwrap();
        let d = DepthMap::uniform(1280, 960, z);
        let b = BBox::new(x + 250.0, y + 200.0, size.0, size.1);
        let moved = BBox::new(b.x + dx, b.y + dy, b.w, b.h);
        let a = estimate_area(&b, &d, &k, 0.9).unwrap().area_m2;
        let m = estimate_area(&moved, &d, &k, 0.9).unwrap().area_m2;
        prop_assert!((a - m).abs() / a < 0.01);
    }

    #[test]
    fn areas_are_finite_and_counts_bounded(seed in any::<u64>(), holes in 0.0..0.6f64, b in small_box()) {
        let d = random_depth(seed, holes);
        if let Ok(e) = estimate_area(&b, &d, &intr(), 0.9) {
            prop_assert!(e.area_m2.is_finite() && e.area_m2 >= 0.0);
            prop_assert!(e.valid_patch_count <= e.total_patch_count);
            prop_assert!((0.0..=1.0).contains(&e.valid_patch_fraction()));
        }
    }

    #[test]
    fn smoothing_lowers_afd_and_cv(seed in any::<u64>(), len in 20usize..80, area in 0.1..2.0f64, rel_noise in 0.02..0.2f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, rel_noise * area).unwrap();
        let mut f = AreaFilter::new(CdkfConfig::default());
        let mut raw = Vec::new();
        let mut smoothed = Vec::new();
        for _ in 0..len {
            let z = (area + noise.sample(&mut rng)).max(1e-3);
            let (a, _) = f.observe(z, rng.random_range(0.3..0.95), rng.random_range(2.0..15.0)).unwrap();
            raw.push(z);
            smoothed.push(a);
        }
        prop_assert!(area_afd(&smoothed).unwrap() < area_afd(&raw).unwrap());
        prop_assert!(area_cv(&smoothed).unwrap() < area_cv(&raw).unwrap());
    }

    #[test]
    fn series_metric_bounds(values in prop::collection::vec(0.01..5.0f64, 1..40)) {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let max_dev = values.iter().map(|v| (v - m).abs()).fold(0.0, f64::max);
        prop_assert!(area_mae(&values).unwrap() <= max_dev + 1e-12);
        let constant = values.iter().all(|v| *v == values[0]);
        prop_assert_eq!(area_cv(&values).unwrap() == 0.0, constant);
        prop_assert_eq!(area_cv(&vec![values[0]; values.len()]).unwrap(), 0.0);
    }

    #[test]
    fn match_counts_partition_inputs(seed in any::<u64>(), thr in 0.1..0.95f64) {
        for im in random_images(seed) {
            let c = match_for_eval(&im.dets, &im.gts, thr);
            prop_assert_eq!(c.tp + c.fn_, im.gts.len());
            prop_assert_eq!(c.tp + c.fp, im.dets.len());
        }
    }

    #[test]
    fn ap_depends_only_on_rank(seed in any::<u64>(), scale in 0.01..0.99f64, power in 0.2..5.0f64) {
        let images = random_images(seed);
        let rescaled: Vec<EvalImage> = images
            .iter()
            .map(|im| EvalImage {
                dets: im.dets.iter().map(|(b, c)| (*b, scale * c.powf(power))).collect(),
                gts: im.gts.clone(),
            })
            .collect();
        let a = evaluate_detections(&images, 0.5);
        let b = evaluate_detections(&rescaled, 0.5);
        prop_assert_eq!(a.ap50, b.ap50);
        prop_assert_eq!(a.ap50_95, b.ap50_95);
    }

    #[test]
    fn detection_scores_are_bounded(seed in any::<u64>()) {
        let r = evaluate_detections(&random_images(seed), 0.7);
        for v in [r.precision, r.recall, r.f1, r.ap50, r.ap50_95] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.ap50_95 <= r.ap50 + 1e-12);
        if r.precision + r.recall == 0.0 {
            prop_assert_eq!(r.f1, 0.0);
        }
    }

    #[test]
    fn ap_of_all_hits_is_one(n in 1usize..30) {
        prop_assert!((average_precision(&vec![true; n], n) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn association_is_one_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rand_box = |rng: &mut ChaCha8Rng| BBox::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), rng.random_range(10.0..50.0), rng.random_range(10.0..50.0));
        let tracks: Vec<BBox> = (0..rng.random_range(0..8)).map(|_| rand_box(&mut rng)).collect();
        let dets: Vec<Detection> = (0..rng.random_range(0..8))
            .map(|_| Detection::new(0, 0, rand_box(&mut rng), rng.random::<f64>()).unwrap())
            .collect();
        let r = associate(&tracks, &dets, &TrackerConfig::default());
        let t: HashSet<usize> = r.matches.iter().map(|m| m.0).chain(r.unmatched_tracks.iter().copied()).collect();
        let d: HashSet<usize> = r.matches.iter().map(|m| m.1).collect();
        prop_assert_eq!(r.matches.len() + r.unmatched_tracks.len(), tracks.len());
        prop_assert_eq!(t.len(), tracks.len());
        prop_assert_eq!(d.len(), r.matches.len());
        prop_assert!(r.unmatched_detections.iter().all(|i| !d.contains(i)));
    }

    #[test]
    fn track_ids_are_never_reused(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = TrackerConfig { max_misses: 2, ..Default::default() };
        let mut t = Tracker::new(cfg).unwrap();
        let mut retired: HashSet<u64> = HashSet::new();
        let mut live: HashSet<u64> = HashSet::new();
        for frame in 0..30u64 {
            let dets: Vec<Detection> = (0..rng.random_range(0..5))
                .map(|_| {
                    let b = BBox::new(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0), 40.0, 40.0);
                    Detection::new(frame, 0, b, rng.random_range(0.05..1.0)).unwrap()
                })
                .collect();
            t.step(frame, &dets, None).unwrap();
            let now: HashSet<u64> = t.tracks().iter().map(|tr| tr.id).collect();
            prop_assert!(now.is_disjoint(&retired));
            retired.extend(live.difference(&now));
            live = now;
        }
    }

    #[test]
    fn optimizer_respects_bounds(seed in any::<u64>(), cx in 0.0..2.0f64, cy in 0.0..2.0f64) {
        let spec = SearchSpec { bounds: [(0.0, 2.0), (0.5, 1.5)], n_init: 3, n_iter: 4, seed };
        let r = optimize(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2), &spec).unwrap();
        prop_assert!(r.history.iter().all(|(p, _)| (0.0..=2.0).contains(&p[0]) && (0.5..=1.5).contains(&p[1])));
        let min = r.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.best_value, min);
    }
}
