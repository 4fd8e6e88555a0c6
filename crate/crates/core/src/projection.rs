//! Pinhole back-projection and pothole-to-camera distance.

use crate::error::{Error, Result};
use crate::model::{BBox, CameraIntrinsics, DepthMap};

/// Camera-frame point, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Lifts pixel `(u, v)` at depth `z` into the camera frame.
pub fn backproject(u: f64, v: f64, z: f64, intr: &CameraIntrinsics) -> Result<Point3> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidDepth(z));
    }
    Ok(backproject_unchecked(u, v, z, intr))
}

#[inline]
pub(crate) fn backproject_unchecked(u: f64, v: f64, z: f64, intr: &CameraIntrinsics) -> Point3 {
    Point3 {
        x: (u - intr.p_u) / intr.f_u * z,
        y: (v - intr.p_v) / intr.f_v * z,
        z,
    }
}

/// Forward pinhole projection, the inverse of [`backproject`].
pub fn project(p: &Point3, intr: &CameraIntrinsics) -> (f64, f64) {
    (intr.f_u * p.x / p.z + intr.p_u, intr.f_v * p.y / p.z + intr.p_v)
}

/// Distance from the camera to the point seen at the box center. Falls back
/// to the median valid depth inside the box when the center pixel is a hole.
pub fn center_distance(b: &BBox, d: &DepthMap, intr: &CameraIntrinsics) -> Result<f64> {
    let (u0, u1, v0, v1) = b.pixel_span(d.width(), d.height());
    if u0 >= u1 || v0 >= v1 {
        return Err(Error::EmptyRegion);
    }
    let (cx, cy) = b.center();
    let u = (cx.round().max(0.0) as usize).clamp(u0, u1 - 1);
    let v = (cy.round().max(0.0) as usize).clamp(v0, v1 - 1);
    let z = match d.get(u, v)? {
        Some(z) => z,
        None => median_valid_depth(d, u0, u1, v0, v1).ok_or(Error::NoValidDepth)?,
    };
    Ok(backproject_unchecked(u as f64, v as f64, z, intr).norm())
}

fn median_valid_depth(d: &DepthMap, u0: usize, u1: usize, v0: usize, v1: usize) -> Option<f64> {
    let mut vals: Vec<f64> = (v0..v1)
        .flat_map(|v| (u0..u1).map(move |u| (u, v)))
        .map(|(u, v)| d.raw(u, v))
        .filter(|z| crate::model::is_valid_depth(*z))
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let n = vals.len();
    let mid = if n % 2 == 1 {
        vals[n / 2]
    } else {
        (vals[n / 2 - 1] + vals[n / 2]) / 2.0
    };
    Some(mid)
}
