//! Domain types shared by every stage: camera intrinsics, depth maps, boxes,
//! detections and 2D motion transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels, plus the image size they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub f_u: f64,
    pub f_v: f64,
    pub p_u: f64,
    pub p_v: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(f_u: f64, f_v: f64, p_u: f64, p_v: f64, width: usize, height: usize) -> Result<Self> {
        let intr = CameraIntrinsics {
            f_u,
            f_v,
            p_u,
            p_v,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Centered principal point, square pixels.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_u > 0.0 && self.f_v > 0.0 && self.f_u.is_finite() && self.f_v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got ({}, {})",
                self.f_u, self.f_v
            )));
        }
        let pu_ok = self.p_u >= 0.0 && self.p_u < self.width as f64;
        let pv_ok = self.p_v >= 0.0 && self.p_v < self.height as f64;
        if !(pu_ok && pv_ok) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.p_u, self.p_v, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Dense row-major metric depth, meters. Non-finite or non-positive entries
/// are depth holes and are reported as invalid by [`DepthMap::get`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} depth values for a {}x{} map",
                values.len(),
                width,
                height
            )));
        }
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn uniform(width: usize, height: usize, depth: f64) -> Self {
        DepthMap {
            width,
            height,
            values: vec![depth; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                values.push(f(u, v));
            }
        }
        DepthMap {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Unchecked raw value; callers must have bounds-checked `(u, v)`.
    #[inline]
    pub(crate) fn raw(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    /// Nearest-pixel depth lookup. `Ok(None)` marks a depth hole.
    pub fn get(&self, u: usize, v: usize) -> Result<Option<f64>> {
        if u >= self.width || v >= self.height {
            return Err(Error::PixelOutOfRange {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        let z = self.raw(u, v);
        Ok(is_valid_depth(z).then_some(z))
    }
}

#[inline]
pub fn is_valid_depth(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// See [`DepthMap::get`].
pub fn depth_at(d: &DepthMap, u: usize, v: usize) -> Result<Option<f64>> {
    d.get(u, v)
}

/// Axis-aligned box in continuous pixel coordinates, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w >= 0.0 && self.h >= 0.0 && self.w.is_finite() && self.h.is_finite()
    }

    /// Integer pixel ranges `[u0, u1) x [v0, v1)` covered by the box:
    /// floor of left/top, ceil of right/bottom, clipped to the image.
    pub fn pixel_span(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let clamp = |a: f64, hi: usize| -> usize {
            if a.is_nan() || a <= 0.0 {
                0
            } else {
                (a as usize).min(hi)
            }
        };
        let u0 = clamp(self.x.floor(), width);
        let u1 = clamp(self.right().ceil(), width);
        let v0 = clamp(self.y.floor(), height);
        let v1 = clamp(self.bottom().ceil(), height);
        (u0, u1.max(u0), v0, v1.max(v0))
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Intersects `b` with `[0, width-1] x [0, height-1]`. A box entirely outside
/// collapses to zero size at the nearest image point.
pub fn clip_to_image(b: &BBox, intr: &CameraIntrinsics) -> BBox {
    let max_x = intr.width.saturating_sub(1) as f64;
    let max_y = intr.height.saturating_sub(1) as f64;
    let x0 = b.x.clamp(0.0, max_x);
    let y0 = b.y.clamp(0.0, max_y);
    let x1 = b.right().clamp(0.0, max_x);
    let y1 = b.bottom().clamp(0.0, max_y);
    BBox::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
}

pub const CLASS_POTHOLE: u32 = 0;
pub const CLASS_MANHOLE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: u32,
    pub frame: u64,
}

impl Detection {
    pub fn new(frame: u64, class_id: u32, bbox: BBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!("confidence {confidence} outside [0, 1]")));
        }
        if !bbox.is_valid() {
            return Err(Error::InvalidArgument(format!("invalid box {bbox:?}")));
        }
        Ok(Detection {
            bbox,
            confidence,
            class_id,
            frame,
        })
    }

    pub fn is_pothole(&self) -> bool {
        self.class_id == CLASS_POTHOLE
    }
}

/// Homogeneous 3x3 image-plane transform mapping previous-frame pixels to
/// current-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionTransform {
    pub m: [[f64; 3]; 3],
}

impl Default for MotionTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl MotionTransform {
    pub const fn identity() -> Self {
        MotionTransform {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        MotionTransform {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Affine transform from its six coefficients `[a, b, tx, c, d, ty]`:
    /// `x' = a x + b y + tx`, `y' = c x + d y + ty`.
    pub const fn affine(p: [f64; 6]) -> Self {
        MotionTransform {
            m: [[p[0], p[1], p[2]], [p[3], p[4], p[5]], [0.0, 0.0, 1.0]],
        }
    }

    pub fn affine_params(&self) -> [f64; 6] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    pub fn linear_det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_affine(&self) -> bool {
        self.m[2] == [0.0, 0.0, 1.0]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let xh = m[0][0] * x + m[0][1] * y + m[0][2];
        let yh = m[1][0] * x + m[1][1] * y + m[1][2];
        let wh = m[2][0] * x + m[2][1] * y + m[2][2];
        (xh / wh, yh / wh)
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.linear_det().abs() <= 1e-9 {
            return Err(Error::SingularTransform);
        }
        let m = nalgebra::Matrix3::from_row_slice(&[
            self.m[0][0], self.m[0][1], self.m[0][2], //
            self.m[1][0], self.m[1][1], self.m[1][2], //
            self.m[2][0], self.m[2][1], self.m[2][2],
        ]);
        let inv = m.try_inverse().ok_or(Error::SingularTransform)?;
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = inv[(r, c)];
            }
        }
        Ok(MotionTransform { m: out })
    }

    pub fn compose(&self, other: &MotionTransform) -> MotionTransform {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[r][k] * other.m[k][c]).sum();
            }
        }
        MotionTransform { m: out }
    }
}
