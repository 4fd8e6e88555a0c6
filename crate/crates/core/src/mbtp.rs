//! Minimum bounding triangulated pixel (MBTP) area estimation.
//!
//! Every pixel of the detection box is lifted into the camera frame with its
//! metric depth. The lifted points are bounded by an axis-aligned rectangle in
//! the camera XY plane, each 2x2 pixel group inside that rectangle is split
//! into two triangles whose XY areas are summed, and the total is scaled by
//! pi/4 to approximate an elliptical pothole inscribed in the box.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::model::{is_valid_depth, BBox, CameraIntrinsics, DepthMap};
use crate::projection::{backproject_unchecked, center_distance, Point3};

/// Axis-aligned rectangle in the camera XY plane, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectXY {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl RectXY {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }
}

/// Lifted pixel grid of a clipped detection box. Grid point `(i, j)` is image
/// pixel `(u0 + i, v0 + j)`.
#[derive(Debug, Clone)]
pub struct ProjectedRegion {
    pub source: BBox,
    pub u0: usize,
    pub v0: usize,
    pub cols: usize,
    pub rows: usize,
    points: Vec<Point3>,
    valid: Vec<bool>,
}

impl ProjectedRegion {
    /// `None` marks a pixel without valid depth.
    pub fn point(&self, i: usize, j: usize) -> Option<Point3> {
        let k = j * self.cols + i;
        self.valid[k].then(|| self.points[k])
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn valid_points(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter().zip(&self.valid).filter(|(_, v)| **v).map(|(p, _)| p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaEstimate {
    pub area_m2: f64,
    pub valid_patch_count: usize,
    pub total_patch_count: usize,
    pub distance_m: f64,
    pub confidence: f64,
    pub frame: u64,
    pub track_id: Option<u64>,
}

impl AreaEstimate {
    pub fn valid_patch_fraction(&self) -> f64 {
        if self.total_patch_count == 0 {
            0.0
        } else {
            self.valid_patch_count as f64 / self.total_patch_count as f64
        }
    }
}

/// Lifts every pixel of the clipped box into the camera frame.
pub fn project_region(b: &BBox, d: &DepthMap, intr: &CameraIntrinsics) -> Result<ProjectedRegion> {
    let (u0, u1, v0, v1) = b.pixel_span(d.width(), d.height());
    if u0 >= u1 || v0 >= v1 {
        return Err(Error::EmptyRegion);
    }
    let (cols, rows) = (u1 - u0, v1 - v0);
    let mut points = Vec::with_capacity(cols * rows);
    let mut valid = Vec::with_capacity(cols * rows);
    for v in v0..v1 {
        for u in u0..u1 {
            let z = d.raw(u, v);
            if is_valid_depth(z) {
                points.push(backproject_unchecked(u as f64, v as f64, z, intr));
                valid.push(true);
            } else {
                points.push(Point3::default());
                valid.push(false);
            }
        }
    }
    Ok(ProjectedRegion {
        source: *b,
        u0,
        v0,
        cols,
        rows,
        points,
        valid,
    })
}

/// Tightest XY rectangle around the valid lifted points.
pub fn bounding_rect(r: &ProjectedRegion) -> Result<RectXY> {
    let mut it = r.valid_points();
    let first = it.next().ok_or(Error::NoValidPoints)?;
    let init = RectXY {
        min_x: first.x,
        max_x: first.x,
        min_y: first.y,
        max_y: first.y,
    };
    Ok(it.fold(init, |acc, p| RectXY {
        min_x: acc.min_x.min(p.x),
        max_x: acc.max_x.max(p.x),
        min_y: acc.min_y.min(p.y),
        max_y: acc.max_y.max(p.y),
    }))
}

/// Half the absolute cross product of the two edge vectors.
#[inline]
pub fn triangle_area(p1: Point2, p2: Point2, p3: Point2) -> f64 {
    0.5 * ((p2.x - p1.x) * (p3.y - p1.y) - (p2.y - p1.y) * (p3.x - p1.x)).abs()
}

/// XY area of the 2x2 pixel group anchored at grid point `(i, j)`:
/// `Area(P0, P1, P2) + Area(P0, P2, P3)` with `P0 = (i, j)`, `P1 = (i+1, j)`,
/// `P2 = (i, j+1)`, `P3 = (i+1, j+1)`. `None` when any corner lacks depth.
pub fn patch_area(r: &ProjectedRegion, i: usize, j: usize) -> Option<f64> {
    patch_corners(r, i, j).map(|[p0, p1, p2, p3]| triangle_area(p0, p1, p2) + triangle_area(p0, p2, p3))
}

#[inline]
fn patch_corners(r: &ProjectedRegion, i: usize, j: usize) -> Option<[Point2; 4]> {
    if i + 1 >= r.cols || j + 1 >= r.rows {
        return None;
    }
    let k0 = j * r.cols + i;
    let k2 = k0 + r.cols;
    if !(r.valid[k0] && r.valid[k0 + 1] && r.valid[k2] && r.valid[k2 + 1]) {
        return None;
    }
    let xy = |k: usize| Point2::new(r.points[k].x, r.points[k].y);
    Some([xy(k0), xy(k0 + 1), xy(k2), xy(k2 + 1)])
}

/// Sum of patch areas whose corners all lie inside `rect`, with the number of
/// patches that contributed.
pub fn rect_patch_sum(r: &ProjectedRegion, rect: &RectXY) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for j in 0..r.rows.saturating_sub(1) {
        for i in 0..r.cols.saturating_sub(1) {
            let Some(c) = patch_corners(r, i, j) else {
                continue;
            };
            if c.iter().all(|p| rect.contains(p.x, p.y)) {
                sum += triangle_area(c[0], c[1], c[2]) + triangle_area(c[0], c[2], c[3]);
                count += 1;
            }
        }
    }
    (sum, count)
}

/// Full MBTP estimate for one detection box.
///
/// Streams two rows of lifted XY points instead of materializing the region.
/// The bounding rectangle of the valid points contains every valid point, so
/// the sum equals [`rect_patch_sum`] over [`bounding_rect`].
pub fn estimate_area(b: &BBox, d: &DepthMap, intr: &CameraIntrinsics, conf: f64) -> Result<AreaEstimate> {
    let (u0, u1, v0, v1) = b.pixel_span(d.width(), d.height());
    if u0 >= u1 || v0 >= v1 {
        return Err(Error::EmptyRegion);
    }
    let distance_m = center_distance(b, d, intr)?;
    let (cols, rows) = (u1 - u0, v1 - v0);
    let (inv_fu, inv_fv) = (1.0 / intr.f_u, 1.0 / intr.f_v);
    let ray_x: Vec<f64> = (u0..u1).map(|u| (u as f64 - intr.p_u) * inv_fu).collect();
    let mut prev = vec![(f64::NAN, f64::NAN); cols];
    let mut cur = vec![(f64::NAN, f64::NAN); cols];
    let mut sum = 0.0;
    let mut valid_patch_count = 0;
    for (j, v) in (v0..v1).enumerate() {
        let ry = (v as f64 - intr.p_v) * inv_fv;
        let row = &d.values()[v * d.width() + u0..v * d.width() + u1];
        for ((c, &z), &rx) in cur.iter_mut().zip(row).zip(&ray_x) {
            *c = if is_valid_depth(z) { (rx * z, ry * z) } else { (f64::NAN, f64::NAN) };
        }
        if j > 0 {
            for i in 0..cols - 1 {
                let (p0, p1, p2, p3) = (prev[i], prev[i + 1], cur[i], cur[i + 1]);
                if p0.0.is_nan() || p1.0.is_nan() || p2.0.is_nan() || p3.0.is_nan() {
                    continue;
                }
                let (ax, ay) = (p1.0 - p0.0, p1.1 - p0.1);
                let (bx, by) = (p2.0 - p0.0, p2.1 - p0.1);
                let (cx, cy) = (p3.0 - p0.0, p3.1 - p0.1);
                sum += 0.5 * ((ax * by - ay * bx).abs() + (bx * cy - by * cx).abs());
                valid_patch_count += 1;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(AreaEstimate {
        area_m2: sum * FRAC_PI_4,
        valid_patch_count,
        total_patch_count: cols.saturating_sub(1) * rows.saturating_sub(1),
        distance_m,
        confidence: conf,
        frame: 0,
        track_id: None,
    })
}
