//! Synthetic road scenes with known geometry: exact per-pixel depth by ray
//! casting, ground-truth pothole boxes and areas, noisy detections and
//! camera-motion correspondences.
//!
//! The world frame coincides with the first camera pose. The road is a
//! height field `Z = h(X, Y)` in that frame, so a fronto-parallel road is
//! `h = depth`. Potholes are smooth cosine-bump depressions over an ellipse.

pub mod quad;
mod tracks;
mod write;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, CameraIntrinsics, Detection, DepthMap, MotionTransform};
use crate::tracker::motion::affine_least_squares;
use crate::tracker::Correspondence;

pub use tracks::{linear_tracks, LinearTrackScenario, TrackSequence};
pub use write::{write_scene, SceneFiles};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    /// `Z = depth`.
    Plane { depth: f64 },
    /// `Z = depth + tan(pitch) Y`.
    Tilted { depth: f64, pitch_deg: f64 },
    /// `Z = depth + amplitude (sin(2πX/λ) + sin(2πY/λ)) / 2`.
    Undulating { depth: f64, amplitude: f64, wavelength: f64 },
}

impl Surface {
    fn base_depth(&self) -> f64 {
        match *self {
            Surface::Plane { depth } | Surface::Tilted { depth, .. } | Surface::Undulating { depth, .. } => depth,
        }
    }

    fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Surface::Plane { depth } => depth,
            Surface::Tilted { depth, pitch_deg } => depth + pitch_deg.to_radians().tan() * y,
            Surface::Undulating {
                depth,
                amplitude,
                wavelength,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                depth + 0.5 * amplitude * ((k * x).sin() + (k * y).sin())
            }
        }
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Surface::Plane { .. } => (0.0, 0.0),
            Surface::Tilted { pitch_deg, .. } => (0.0, pitch_deg.to_radians().tan()),
            Surface::Undulating { amplitude, wavelength, .. } => {
                let k = std::f64::consts::TAU / wavelength;
                (0.5 * amplitude * k * (k * x).cos(), 0.5 * amplitude * k * (k * y).cos())
            }
        }
    }
}

fn default_class() -> u32 {
    crate::model::CLASS_POTHOLE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotholeSpec {
    /// Ellipse center on the road, world X/Y in meters.
    pub center: [f64; 2],
    /// Semi-axes along X and Y, meters.
    pub semi_axes: [f64; 2],
    /// Depression depth at the center, meters (positive = away from camera).
    #[serde(default)]
    pub depth: f64,
    #[serde(default = "default_class")]
    pub class_id: u32,
}

impl PotholeSpec {
    fn rho(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let dx = (x - self.center[0]) / self.semi_axes[0];
        let dy = (y - self.center[1]) / self.semi_axes[1];
        ((dx * dx + dy * dy).sqrt(), dx, dy)
    }

    fn offset(&self, x: f64, y: f64) -> f64 {
        let (r, _, _) = self.rho(x, y);
        if r >= 1.0 {
            0.0
        } else {
            0.5 * self.depth * (1.0 + (std::f64::consts::PI * r).cos())
        }
    }

    fn offset_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (r, dx, dy) = self.rho(x, y);
        if r >= 1.0 {
            return (0.0, 0.0);
        }
        let pi = std::f64::consts::PI;
        // d/dr of the bump divided by r; finite at the center
        let dh_over_r = if r < 1e-12 {
            -0.5 * self.depth * pi * pi
        } else {
            -0.5 * self.depth * pi * (pi * r).sin() / r
        };
        (dh_over_r * dx / self.semi_axes[0], dh_over_r * dy / self.semi_axes[1])
    }

    pub fn planar_area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes[0] * self.semi_axes[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraPath {
    /// Camera translation per frame, meters.
    pub velocity: [f64; 3],
    /// Rotation per frame as a scaled axis, radians.
    pub angular_velocity: [f64; 3],
    /// Std of an independent per-frame translation jitter, meters.
    pub shake_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Std of the Gaussian jitter added to each box coordinate, pixels.
    pub box_jitter_px: f64,
    pub confidence_c0: f64,
    /// Confidence decay per meter of distance.
    pub confidence_k: f64,
    pub confidence_std: f64,
    /// Relative std of multiplicative depth noise.
    pub depth_rel_std: f64,
    /// Probability that a visible pothole yields no detection.
    pub miss_rate: f64,
    /// Std of keypoint localization noise, pixels.
    pub keypoint_std_px: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            box_jitter_px: 0.0,
            confidence_c0: 0.95,
            confidence_k: 0.02,
            confidence_std: 0.0,
            depth_rel_std: 0.0,
            miss_rate: 0.0,
            keypoint_std_px: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionOutput {
    #[default]
    None,
    /// Ground-truth affine transforms written into the manifest.
    Transform,
    /// Keypoint correspondence files, one per frame after the first.
    Correspondences,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub motion: MotionOutput,
    pub correspondences_per_frame: usize,
    /// Fraction of correspondences replaced by random pairs.
    pub outlier_fraction: f64,
    pub fps: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            motion: MotionOutput::None,
            correspondences_per_frame: 200,
            outlier_fraction: 0.0,
            fps: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub seed: u64,
    pub frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub surface: Surface,
    #[serde(default)]
    pub potholes: Vec<PotholeSpec>,
    #[serde(default)]
    pub camera: CameraPath,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl SceneSpec {
    /// Static camera over a fronto-parallel road, no noise.
    pub fn plane(intrinsics: CameraIntrinsics, depth: f64, frames: usize) -> Self {
        SceneSpec {
            seed: 0,
            frames,
            intrinsics,
            surface: Surface::Plane { depth },
            potholes: Vec::new(),
            camera: CameraPath::default(),
            noise: NoiseSpec::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SceneSpec = toml::from_str(text).map_err(|e| Error::Parse(format!("scene spec: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if !(self.surface.base_depth().is_finite() && self.surface.base_depth() > 0.0) {
            return bad("surface depth must be positive".into());
        }
        if let Surface::Undulating { wavelength, amplitude, .. } = self.surface {
            if !(wavelength > 0.0 && amplitude.is_finite()) {
                return bad("undulation needs a positive wavelength".into());
            }
        }
        if let Surface::Tilted { pitch_deg, .. } = self.surface {
            if pitch_deg.is_nan() || pitch_deg.abs() >= 89.0 {
                return bad(format!("pitch {pitch_deg} deg too steep"));
            }
        }
        for (i, p) in self.potholes.iter().enumerate() {
            if !(p.semi_axes[0] > 0.0 && p.semi_axes[1] > 0.0) {
                return bad(format!("pothole {i}: semi-axes must be positive"));
            }
            if !(p.depth.is_finite() && p.depth >= 0.0) {
                return bad(format!("pothole {i}: depth must be non-negative"));
            }
        }
        let n = &self.noise;
        for (name, v) in [
            ("box_jitter_px", n.box_jitter_px),
            ("confidence_std", n.confidence_std),
            ("depth_rel_std", n.depth_rel_std),
            ("keypoint_std_px", n.keypoint_std_px),
            ("shake_std", self.camera.shake_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&n.miss_rate) || !(0.0..=1.0).contains(&self.output.outlier_fraction) {
            return bad("rates must lie in [0, 1]".into());
        }
        if n.confidence_k.is_nan() || n.confidence_k < 0.0 {
            return bad("confidence must not increase with distance".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    center: Vector3<f64>,
    rotation: Rotation3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub pothole: usize,
    pub class_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtPothole {
    pub id: usize,
    pub class_id: u32,
    /// `π a b`.
    pub planar_area_m2: f64,
    /// Area of the depressed surface inside the rim.
    pub surface_area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    /// Per frame, the boxes of potholes fully inside the image.
    pub boxes: Vec<Vec<GtBox>>,
    pub potholes: Vec<GtPothole>,
    /// Per frame, the affine `[a, b, tx, c, d, ty]` from the previous frame.
    pub motions: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub index: u64,
    pub depth: DepthMap,
    pub detections: Vec<Detection>,
    pub correspondences: Vec<Correspondence>,
    pub motion: MotionTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Vec<SynthFrame>,
    pub gt: GroundTruth,
}

/// Deterministic scene geometry plus per-frame RNG streams.
#[derive(Debug, Clone)]
pub struct Renderer {
    spec: SceneSpec,
    poses: Vec<Pose>,
}

const RIM_SAMPLES: usize = 720;

impl Renderer {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let shake = Normal::new(0.0, spec.camera.shake_std.max(0.0)).expect("finite std");
        let cam = &spec.camera;
        let poses = (0..spec.frames)
            .map(|k| {
                let kf = k as f64;
                let mut jitter = Vector3::zeros();
                if k > 0 && cam.shake_std > 0.0 {
                    jitter = Vector3::new(shake.sample(&mut rng), shake.sample(&mut rng), shake.sample(&mut rng));
                }
                Pose {
                    center: Vector3::from(cam.velocity) * kf + jitter,
                    rotation: Rotation3::from_scaled_axis(Vector3::from(cam.angular_velocity) * kf),
                }
            })
            .collect();
        let r = Renderer { spec: spec.clone(), poses };
        for i in 0..r.spec.potholes.len() {
            if (0..r.spec.frames).all(|k| r.gt_box(i, k).is_none()) {
                return Err(Error::PotholeNeverVisible(i));
            }
        }
        Ok(r)
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn frame_count(&self) -> usize {
        self.spec.frames
    }

    fn height(&self, x: f64, y: f64) -> f64 {
        self.spec.surface.height(x, y) + self.spec.potholes.iter().map(|p| p.offset(x, y)).sum::<f64>()
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut gx, mut gy) = self.spec.surface.gradient(x, y);
        for p in &self.spec.potholes {
            let (a, b) = p.offset_gradient(x, y);
            gx += a;
            gy += b;
        }
        (gx, gy)
    }

    fn ray(&self, pose: &Pose, u: f64, v: f64) -> Vector3<f64> {
        let i = &self.spec.intrinsics;
        pose.rotation * Vector3::new((u - i.p_u) / i.f_u, (v - i.p_v) / i.f_v, 1.0)
    }

    /// Ray parameter of the first surface hit; equals the camera-frame depth
    /// because the ray's camera-frame Z component is 1.
    fn cast(&self, pose: &Pose, d: &Vector3<f64>) -> Option<f64> {
        let c = pose.center;
        let g = |t: f64| c.z + t * d.z - self.height(c.x + t * d.x, c.y + t * d.y);
        let dg = |t: f64| {
            let (hx, hy) = self.gradient(c.x + t * d.x, c.y + t * d.y);
            d.z - hx * d.x - hy * d.y
        };
        if g(0.0) >= 0.0 {
            return None;
        }
        // start from the base surface, exact for planes
        let base = self.spec.surface.base_depth();
        let mut t = match self.spec.surface {
            Surface::Tilted { pitch_deg, .. } => {
                let s = pitch_deg.to_radians().tan();
                (base + s * c.y - c.z) / (d.z - s * d.y)
            }
            _ => (base - c.z) / d.z,
        };
        if t.is_finite() && t > 0.0 {
            for _ in 0..60 {
                let (gv, dv) = (g(t), dg(t));
                if dv <= 0.0 {
                    break;
                }
                let step = gv / dv;
                t -= step;
                if t.is_nan() || t <= 0.0 {
                    break;
                }
                if step.abs() <= 1e-14 * t {
                    return Some(t);
                }
            }
        }
        // bracket then bisect
        let mut hi = (base - c.z).abs().max(1.0);
        let mut tries = 0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 60 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = 0.5 * (lo + hi);
        Some(t)
    }

    fn project(&self, pose: &Pose, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let q = pose.rotation.inverse() * (p - pose.center);
        if q.z <= 0.0 {
            return None;
        }
        let i = &self.spec.intrinsics;
        Some((i.p_u + i.f_u * q.x / q.z, i.p_v + i.f_v * q.y / q.z))
    }

    /// Exact depth at a pixel center, `None` when the ray misses the road.
    pub fn depth_at(&self, frame: usize, u: f64, v: f64) -> Option<f64> {
        let pose = &self.poses[frame];
        self.cast(pose, &self.ray(pose, u, v))
    }

    fn noiseless_depth(&self, frame: usize) -> DepthMap {
        let i = self.spec.intrinsics;
        let pose = self.poses[frame];
        let values: Vec<f64> = (0..i.height)
            .into_par_iter()
            .flat_map_iter(|v| {
                (0..i.width).map(move |u| self.cast(&pose, &self.ray(&pose, u as f64, v as f64)).unwrap_or(f64::NAN))
            })
            .collect();
        DepthMap::new(i.width, i.height, values).expect("sized to intrinsics")
    }

    /// Box of pothole `i` in `frame`: pixel centers from the rounded leftmost
    /// to the rounded rightmost projected rim point. `None` when any part of
    /// the rim is behind the camera or outside the image.
    pub fn gt_box(&self, i: usize, frame: usize) -> Option<BBox> {
        let p = &self.spec.potholes[i];
        let pose = &self.poses[frame];
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..RIM_SAMPLES {
            let phi = std::f64::consts::TAU * k as f64 / RIM_SAMPLES as f64;
            let x = p.center[0] + p.semi_axes[0] * phi.cos();
            let y = p.center[1] + p.semi_axes[1] * phi.sin();
            let (u, v) = self.project(pose, &Vector3::new(x, y, self.height(x, y)))?;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let intr = &self.spec.intrinsics;
        let (u0, u1, v0, v1) = (umin.round(), umax.round(), vmin.round(), vmax.round());
        if u0 < 0.0 || v0 < 0.0 || u1 > (intr.width - 1) as f64 || v1 > (intr.height - 1) as f64 {
            return None;
        }
        Some(BBox::new(u0, v0, u1 - u0 + 1.0, v1 - v0 + 1.0))
    }

    fn pothole_center_distance(&self, i: usize, frame: usize) -> f64 {
        let p = &self.spec.potholes[i];
        let (x, y) = (p.center[0], p.center[1]);
        (Vector3::new(x, y, self.height(x, y)) - self.poses[frame].center).norm()
    }

    /// Best affine fit of the true image motion of static road points from
    /// `frame - 1` to `frame`; identity for the first frame.
    pub fn gt_motion(&self, frame: usize) -> MotionTransform {
        if frame == 0 {
            return MotionTransform::identity();
        }
        let pairs = self.grid_flow(frame, 16, 12);
        if pairs.len() < 3 {
            return MotionTransform::identity();
        }
        affine_least_squares(&pairs).unwrap_or_default()
    }

    fn flow(&self, frame: usize, u: f64, v: f64) -> Option<Correspondence> {
        let prev = &self.poses[frame - 1];
        let d = self.ray(prev, u, v);
        let t = self.cast(prev, &d)?;
        let (uc, vc) = self.project(&self.poses[frame], &(prev.center + d * t))?;
        let i = &self.spec.intrinsics;
        let inside = uc >= 0.0 && vc >= 0.0 && uc <= (i.width - 1) as f64 && vc <= (i.height - 1) as f64;
        inside.then(|| Correspondence::new([u, v], [uc, vc]))
    }

    fn grid_flow(&self, frame: usize, nu: usize, nv: usize) -> Vec<Correspondence> {
        let i = &self.spec.intrinsics;
        let mut out = Vec::new();
        for a in 0..nu {
            for b in 0..nv {
                let u = (a as f64 + 0.5) / nu as f64 * (i.width - 1) as f64;
                let v = (b as f64 + 0.5) / nv as f64 * (i.height - 1) as f64;
                out.extend(self.flow(frame, u, v));
            }
        }
        out
    }

    fn frame_rng(&self, frame: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(frame as u64 + 1);
        rng
    }

    pub fn frame(&self, frame: usize) -> SynthFrame {
        let mut rng = self.frame_rng(frame);
        let noise = &self.spec.noise;
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

        let mut detections = Vec::new();
        for (i, p) in self.spec.potholes.iter().enumerate() {
            let Some(b) = self.gt_box(i, frame) else {
                continue;
            };
            // draw everything first so the stream does not depend on misses
            let jit: [f64; 4] = std::array::from_fn(|_| noise.box_jitter_px * std_normal.sample(&mut rng));
            let conf_noise = noise.confidence_std * std_normal.sample(&mut rng);
            let missed = rng.random::<f64>() < noise.miss_rate;
            if missed {
                continue;
            }
            let bbox = BBox::new(b.x + jit[0], b.y + jit[1], (b.w + jit[2]).max(2.0), (b.h + jit[3]).max(2.0));
            let d = self.pothole_center_distance(i, frame);
            let c = confidence_model(noise.confidence_c0, noise.confidence_k, d, conf_noise);
            detections.push(Detection::new(frame as u64, p.class_id, bbox, c).expect("valid synthetic detection"));
        }

        let mut correspondences = Vec::new();
        if frame > 0 && self.spec.output.correspondences_per_frame > 0 {
            let i = self.spec.intrinsics;
            let target = self.spec.output.correspondences_per_frame;
            let mut attempts = 0;
            while correspondences.len() < target && attempts < target * 20 {
                attempts += 1;
                let u = rng.random_range(0.0..(i.width - 1) as f64);
                let v = rng.random_range(0.0..(i.height - 1) as f64);
                let outlier = rng.random::<f64>() < self.spec.output.outlier_fraction;
                let n: [f64; 2] = std::array::from_fn(|_| noise.keypoint_std_px * std_normal.sample(&mut rng));
                let Some(mut c) = self.flow(frame, u, v) else {
                    continue;
                };
                if outlier {
                    c.curr = [rng.random_range(0.0..(i.width - 1) as f64), rng.random_range(0.0..(i.height - 1) as f64)];
                } else {
                    c.curr = [c.curr[0] + n[0], c.curr[1] + n[1]];
                }
                correspondences.push(c);
            }
        }

        let mut depth = self.noiseless_depth(frame);
        if noise.depth_rel_std > 0.0 {
            for z in depth.values_mut() {
                *z *= 1.0 + noise.depth_rel_std * std_normal.sample(&mut rng);
            }
        }
        SynthFrame {
            index: frame as u64,
            depth,
            detections,
            correspondences,
            motion: self.gt_motion(frame),
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let boxes = (0..self.spec.frames)
            .map(|k| {
                (0..self.spec.potholes.len())
                    .filter_map(|i| {
                        self.gt_box(i, k).map(|bbox| GtBox {
                            pothole: i,
                            class_id: self.spec.potholes[i].class_id,
                            bbox,
                        })
                    })
                    .collect()
            })
            .collect();
        let potholes = self
            .spec
            .potholes
            .iter()
            .enumerate()
            .map(|(id, p)| GtPothole {
                id,
                class_id: p.class_id,
                planar_area_m2: p.planar_area(),
                surface_area_m2: self.pothole_surface_area(id),
            })
            .collect();
        GroundTruth {
            format_version: crate::io::FORMAT_VERSION,
            boxes,
            potholes,
            motions: (0..self.spec.frames).map(|k| self.gt_motion(k).affine_params()).collect(),
        }
    }

    /// Surface area of the road inside pothole `i`'s rim, by quadrature in
    /// elliptic polar coordinates.
    pub fn pothole_surface_area(&self, i: usize) -> f64 {
        let p = self.spec.potholes[i];
        let (a, b) = (p.semi_axes[0], p.semi_axes[1]);
        quad::integrate_2d(
            |r, phi| {
                let (x, y) = (p.center[0] + a * r * phi.cos(), p.center[1] + b * r * phi.sin());
                let (hx, hy) = self.gradient(x, y);
                a * b * r * (1.0 + hx * hx + hy * hy).sqrt()
            },
            (0.0, 1.0),
            (0.0, std::f64::consts::TAU),
            1e-8,
        )
    }

    /// `(∂(X, Y)/∂(u, v) determinant, surface slope factor)` at a pixel.
    fn footprint_density(&self, pose: &Pose, u: f64, v: f64) -> Option<(f64, f64)> {
        let i = &self.spec.intrinsics;
        let d = self.ray(pose, u, v);
        let t = self.cast(pose, &d)?;
        let c = pose.center;
        let (hx, hy) = self.gradient(c.x + t * d.x, c.y + t * d.y);
        let du = pose.rotation * Vector3::new(1.0 / i.f_u, 0.0, 0.0);
        let dv = pose.rotation * Vector3::new(0.0, 1.0 / i.f_v, 0.0);
        let g_t = d.z - hx * d.x - hy * d.y;
        let t_u = -t * (du.z - hx * du.x - hy * du.y) / g_t;
        let t_v = -t * (dv.z - hx * dv.x - hy * dv.y) / g_t;
        let (x_u, y_u) = (t_u * d.x + t * du.x, t_u * d.y + t * du.y);
        let (x_v, y_v) = (t_v * d.x + t * dv.x, t_v * d.y + t * dv.y);
        Some(((x_u * y_v - x_v * y_u).abs(), (1.0 + hx * hx + hy * hy).sqrt()))
    }

    fn rect_integral(&self, frame: usize, b: &BBox, slope: bool) -> f64 {
        let i = &self.spec.intrinsics;
        let (u0, u1, v0, v1) = b.pixel_span(i.width, i.height);
        if u1 < u0 + 2 || v1 < v0 + 2 {
            return 0.0;
        }
        let pose = self.poses[frame];
        quad::integrate_2d(
            |u, v| match self.footprint_density(&pose, u, v) {
                Some((j, s)) => {
                    if slope {
                        j * s
                    } else {
                        j
                    }
                }
                None => 0.0,
            },
            (u0 as f64, (u1 - 1) as f64),
            (v0 as f64, (v1 - 1) as f64),
            1e-7,
        )
    }

    /// XY-projected area of the road seen between the box's first and last
    /// pixel centers.
    pub fn rect_footprint_area(&self, frame: usize, b: &BBox) -> f64 {
        self.rect_integral(frame, b, false)
    }

    /// True 3-D surface area over the same pixel rectangle.
    pub fn rect_surface_area(&self, frame: usize, b: &BBox) -> f64 {
        self.rect_integral(frame, b, true)
    }
}

/// `clamp(c0 − k d + noise, 0.05, 0.99)`.
pub fn confidence_model(c0: f64, k: f64, distance: f64, noise: f64) -> f64 {
    (c0 - k * distance + noise).clamp(0.05, 0.99)
}

pub fn render(spec: &SceneSpec) -> Result<Scene> {
    let r = Renderer::new(spec)?;
    let frames = (0..spec.frames).map(|k| r.frame(k)).collect();
    Ok(Scene {
        frames,
        gt: r.ground_truth(),
    })
}

/// Footprint of `b` in `frame` of `spec`; see [`Renderer::rect_footprint_area`].
pub fn analytic_rect_footprint_area(spec: &SceneSpec, frame: usize, b: &BBox) -> Result<f64> {
    Ok(Renderer::new(spec)?.rect_footprint_area(frame, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbtp::estimate_area;
    use std::f64::consts::FRAC_PI_4;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::centered(500.0, 320, 240).unwrap()
    }

    fn pothole(x: f64, y: f64) -> PotholeSpec {
        PotholeSpec {
            center: [x, y],
            semi_axes: [0.3, 0.2],
            depth: 0.05,
            class_id: 0,
        }
    }

    #[test]
    fn plane_depth_is_constant_along_optical_axis() {
        let spec = SceneSpec::plane(intr(), 5.0, 1);
        let f = render(&spec).unwrap().frames.remove(0);
        assert_eq!(f.depth.get(160, 120).unwrap(), Some(5.0));
        assert!(f.depth.values().iter().all(|&z| (z - 5.0).abs() < 1e-12));
    }

    #[test]
    fn ellipse_area() {
        assert!((pothole(0.0, 0.0).planar_area() - 0.188_495_559_2).abs() < 1e-9);
    }

    #[test]
    fn flat_pothole_surface_area_is_planar_area() {
        let mut spec = SceneSpec::plane(intr(), 5.0, 1);
        spec.potholes.push(PotholeSpec { depth: 0.0, ..pothole(0.0, 0.0) });
        let r = Renderer::new(&spec).unwrap();
        assert!((r.pothole_surface_area(0) - spec.potholes[0].planar_area()).abs() < 1e-8);
        spec.potholes[0].depth = 0.1;
        let r = Renderer::new(&spec).unwrap();
        assert!(r.pothole_surface_area(0) > spec.potholes[0].planar_area());
    }

    #[test]
    fn deterministic() {
        let mut spec = SceneSpec::plane(intr(), 4.0, 3);
        spec.seed = 9;
        spec.potholes.push(pothole(0.1, 0.0));
        spec.noise.box_jitter_px = 1.0;
        spec.noise.confidence_std = 0.05;
        spec.noise.depth_rel_std = 0.01;
        spec.camera.shake_std = 0.01;
        let a = render(&spec).unwrap();
        let b = render(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |s: &Scene| s.frames[2].depth.values().iter().map(|z| z.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn never_visible() {
        let mut spec = SceneSpec::plane(intr(), 5.0, 2);
        spec.potholes.push(pothole(50.0, 0.0));
        assert!(matches!(Renderer::new(&spec), Err(Error::PotholeNeverVisible(0))));
    }

    #[test]
    fn gt_box_contains_rim() {
        let mut spec = SceneSpec::plane(intr(), 5.0, 1);
        spec.surface = Surface::Tilted { depth: 5.0, pitch_deg: 25.0 };
        spec.potholes.push(pothole(0.2, 0.1));
        let r = Renderer::new(&spec).unwrap();
        let b = r.gt_box(0, 0).unwrap();
        for k in 0..360 {
            let phi = std::f64::consts::TAU * k as f64 / 360.0;
            let (x, y) = (0.2 + 0.3 * phi.cos(), 0.1 + 0.2 * phi.sin());
            let (u, v) = r.project(&r.poses[0], &Vector3::new(x, y, r.height(x, y))).unwrap();
            assert!(u >= b.x - 0.5 && u <= b.right() - 0.5 && v >= b.y - 0.5 && v <= b.bottom() - 0.5);
        }
    }

    #[test]
    fn fronto_parallel_footprint_closed_form() {
        let spec = SceneSpec::plane(intr(), 5.0, 1);
        let b = BBox::new(100.0, 60.0, 40.0, 30.0);
        let area = analytic_rect_footprint_area(&spec, 0, &b).unwrap();
        let expect = 39.0 * 29.0 * 25.0 / (500.0 * 500.0);
        assert!((area - expect).abs() / expect < 1e-9, "{area} vs {expect}");
    }

    #[test]
    fn tilted_surface_is_footprint_over_cos() {
        let alpha: f64 = 30.0;
        let mut spec = SceneSpec::plane(intr(), 5.0, 1);
        spec.surface = Surface::Tilted { depth: 5.0, pitch_deg: alpha };
        let r = Renderer::new(&spec).unwrap();
        let b = BBox::new(90.0, 80.0, 60.0, 50.0);
        let fp = r.rect_footprint_area(0, &b);
        let sa = r.rect_surface_area(0, &b);
        assert!((sa - fp / alpha.to_radians().cos()).abs() / sa < 1e-4);
    }

    #[test]
    fn mbtp_matches_oracle_on_rendered_frames() {
        let mut spec = SceneSpec::plane(intr(), 4.0, 1);
        spec.surface = Surface::Undulating {
            depth: 4.0,
            amplitude: 0.05,
            wavelength: 1.5,
        };
        let r = Renderer::new(&spec).unwrap();
        let f = r.frame(0);
        let b = BBox::new(120.0, 80.0, 60.0, 45.0);
        let est = estimate_area(&b, &f.depth, &spec.intrinsics, 0.9).unwrap();
        let oracle = r.rect_footprint_area(0, &b) * FRAC_PI_4;
        assert!((est.area_m2 - oracle).abs() / oracle < 0.02, "{} vs {}", est.area_m2, oracle);
    }

    #[test]
    fn gt_motion_for_lateral_translation() {
        let mut spec = SceneSpec::plane(intr(), 5.0, 2);
        spec.camera.velocity = [0.1, 0.0, 0.0];
        let r = Renderer::new(&spec).unwrap();
        let p = r.gt_motion(1).affine_params();
        // camera moves +0.1 m in X, so the scene shifts by -f * 0.1 / 5 px
        let expect = [1.0, 0.0, -10.0, 0.0, 1.0, 0.0];
        for k in 0..6 {
            assert!((p[k] - expect[k]).abs() < 1e-9, "{p:?}");
        }
        let f = r.frame(1);
        assert_eq!(f.correspondences.len(), 200);
        for c in &f.correspondences {
            assert!((c.curr[0] - (c.prev[0] - 10.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn confidence_monotone_in_distance() {
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let c = confidence_model(0.95, 0.02, k as f64 * 0.5, 0.0);
            assert!(c <= last && (0.05..=0.99).contains(&c));
            last = c;
        }
    }

    #[test]
    fn spec_toml() {
        let text = r#"
seed = 3
frames = 4

[intrinsics]
f_u = 500.0
f_v = 500.0
p_u = 160.0
p_v = 120.0
width = 320
height = 240

[surface]
kind = "tilted"
depth = 5.0
pitch_deg = 10.0

[[potholes]]
center = [0.0, 0.0]
semi_axes = [0.3, 0.2]
depth = 0.04

[noise]
box_jitter_px = 1.5

[output]
motion = "correspondences"
"#;
        let s = SceneSpec::from_toml(text).unwrap();
        assert_eq!(s.potholes.len(), 1);
        assert_eq!(s.noise.confidence_c0, 0.95);
        assert_eq!(s.output.motion, MotionOutput::Correspondences);
        assert!(SceneSpec::from_toml(&text.replace("[0.3, 0.2]", "[0.0, 0.2]")).is_err());
    }
}
