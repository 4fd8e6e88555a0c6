use pothole_core::model::CameraIntrinsics;
use pothole_core::pipeline::{run_collect, synth_frames, PipelineConfig};
use pothole_core::synth::{MotionOutput, PotholeSpec, Renderer, SceneSpec};

fn noiseless_sequence() -> SceneSpec {
    let intr = CameraIntrinsics::new(600.0, 600.0, 319.5, 239.5, 640, 480).unwrap();
    let mut spec = SceneSpec::plane(intr, 5.0, 20);
    spec.seed = 3;
    // about 140 px across at 5 m
    spec.potholes.push(PotholeSpec {
        center: [0.1, -0.05],
        semi_axes: [0.58, 0.45],
        depth: 0.03,
        class_id: 0,
    });
    spec.camera.velocity = [0.005, 0.002, 0.0];
    spec.output.motion = MotionOutput::Transform;
    spec
}

#[test]
fn noiseless_sequence_converges_to_true_area() {
    let spec = noiseless_sequence();
    let r = Renderer::new(&spec).unwrap();
    let truth = r.ground_truth().potholes[0].planar_area_m2;
    let (records, summary) = run_collect(synth_frames(&r, MotionOutput::Transform), &spec.intrinsics, &PipelineConfig::default()).unwrap();
    assert_eq!(summary.report.track_count, 1);
    let late: Vec<_> = records.iter().filter(|rec| rec.frame >= 10).collect();
    assert_eq!(late.len(), 10);
    for rec in late {
        let rel = (rec.area_smoothed_m2 - truth).abs() / truth;
        assert!(rel < 0.03, "frame {}: {} vs {truth} ({rel:.4})", rec.frame, rec.area_smoothed_m2);
        assert_eq!(rec.track_id, records[0].track_id);
    }
}

#[test]
fn ablation_smooths_below_raw() {
    let mut spec = noiseless_sequence();
    spec.frames = 30;
    spec.camera.velocity = [0.005, 0.002, -0.05];
    spec.noise.box_jitter_px = 2.0;
    spec.noise.confidence_std = 0.05;
    spec.noise.depth_rel_std = 0.02;
    let r = Renderer::new(&spec).unwrap();
    let cfg = PipelineConfig {
        smoothing: false,
        ..Default::default()
    };
    let (records, _) = run_collect(synth_frames(&r, MotionOutput::Transform), &spec.intrinsics, &cfg).unwrap();
    let rows = pothole_core::pipeline::ablation(&records, &Default::default(), 0.5, 5).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["raw", "confidence_only", "distance_only", "combined"]);
    let afd = |n: &str| rows.iter().find(|r| r.name == n).unwrap().report.afd;
    assert!(afd("combined") < afd("raw"));
}
