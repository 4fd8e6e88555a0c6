//! Constant-velocity Kalman filter over `(x, y, w, h, vx, vy, vw, vh)`, box
//! center and size in pixels, velocities in pixels per frame.

use nalgebra::{SMatrix, SVector};

use crate::model::{BBox, MotionTransform};

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
type Matrix4x8 = SMatrix<f64, 4, 8>;
type Matrix4 = SMatrix<f64, 4, 4>;
type Vector4 = SVector<f64, 4>;

/// Noise standard deviations as fractions of the box size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxNoise {
    pub position: f64,
    pub velocity: f64,
    pub measurement: f64,
}

impl Default for BoxNoise {
    fn default() -> Self {
        BoxNoise {
            position: 0.05,
            velocity: 0.0125,
            measurement: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: Vector8,
    pub covariance: Matrix8,
}

impl TrackState {
    /// New track at rest; the velocity prior is deliberately wide.
    pub fn initiate(b: &BBox, noise: &BoxNoise) -> Self {
        let (cx, cy) = b.center();
        let mean = Vector8::from_column_slice(&[cx, cy, b.w, b.h, 0.0, 0.0, 0.0, 0.0]);
        let (p, v) = (2.0 * noise.position, 10.0 * noise.velocity);
        let std = [p * b.w, p * b.h, p * b.w, p * b.h, v * b.w, v * b.h, v * b.w, v * b.h];
        TrackState {
            mean,
            covariance: Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s))),
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_center(self.mean[0], self.mean[1], self.mean[2].max(0.0), self.mean[3].max(0.0))
    }

    /// Symmetric within 1e-9 and non-negative on the diagonal.
    pub fn covariance_is_sane(&self) -> bool {
        let c = &self.covariance;
        let scale = c.amax().max(1.0);
        (0..8).all(|i| c[(i, i)] >= 0.0) && (0..8).all(|i| (0..8).all(|j| (c[(i, j)] - c[(j, i)]).abs() <= 1e-9 * scale))
    }

    /// Re-expresses the state in the next frame's coordinates when the camera
    /// moved by `t` (previous-frame pixels to current-frame pixels).
    pub fn warp(&mut self, t: &MotionTransform) {
        let (x, y) = t.apply(self.mean[0], self.mean[1]);
        let a = [[t.m[0][0], t.m[0][1]], [t.m[1][0], t.m[1][1]]];
        let (vx, vy) = (self.mean[4], self.mean[5]);
        self.mean[0] = x;
        self.mean[1] = y;
        self.mean[4] = a[0][0] * vx + a[0][1] * vy;
        self.mean[5] = a[1][0] * vx + a[1][1] * vy;
        let mut m = Matrix8::identity();
        for (off, _) in [(0usize, ()), (4usize, ())] {
            for r in 0..2 {
                for c in 0..2 {
                    m[(off + r, off + c)] = a[r][c];
                }
            }
        }
        self.covariance = symmetrize(m * self.covariance * m.transpose());
    }
}

fn transition() -> Matrix8 {
    let mut f = Matrix8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> Matrix4x8 {
    let mut h = Matrix4x8::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(m: Matrix8) -> Matrix8 {
    (m + m.transpose()) * 0.5
}

/// One constant-velocity step: `x <- F x`, `P <- F P Fᵀ + Q`.
pub fn predict(s: &TrackState, noise: &BoxNoise) -> TrackState {
    let f = transition();
    let (w, h) = (s.mean[2].abs(), s.mean[3].abs());
    let (p, v) = (noise.position, noise.velocity);
    let std = [p * w, p * h, p * w, p * h, v * w, v * h, v * w, v * h];
    let q = Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s)));
    TrackState {
        mean: f * s.mean,
        covariance: symmetrize(f * s.covariance * f.transpose() + q),
    }
}

/// Linear Kalman update with a measured box `(x, y, w, h)`.
pub fn kf_update(s: &TrackState, z: &BBox, noise: &BoxNoise) -> TrackState {
    let h = observation();
    let (cx, cy) = z.center();
    let meas = Vector4::new(cx, cy, z.w, z.h);
    let (w, hh) = (s.mean[2].abs(), s.mean[3].abs());
    let m = noise.measurement;
    let r = Matrix4::from_diagonal(&Vector4::new((m * w).powi(2), (m * hh).powi(2), (m * w).powi(2), (m * hh).powi(2)));
    let innovation_cov = h * s.covariance * h.transpose() + r;
    let Some(chol) = innovation_cov.cholesky() else {
        return s.clone();
    };
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
    let gain = chol.solve(&(h * s.covariance)).transpose();
    let innovation = meas - h * s.mean;
    let mean = s.mean + gain * innovation;
    // Joseph form keeps the covariance symmetric PSD.
    let ikh = Matrix8::identity() - gain * h;
    let covariance = symmetrize(ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose());
    TrackState { mean, covariance }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain-array Kalman filter used as an independent reference.
    struct Reference {
        x: [f64; 8],
        p: [[f64; 8]; 8],
    }

    #[allow(clippy::needless_range_loop)]
    impl Reference {
        fn predict(&mut self, q: [f64; 8]) {
            let mut x = self.x;
            for i in 0..4 {
                x[i] += self.x[i + 4];
            }
            // F P Fᵀ with F = [[I, I], [0, I]]
            let f = |r: usize, c: usize| -> f64 { if r == c || (r < 4 && c == r + 4) { 1.0 } else { 0.0 } };
            let mut fp = [[0.0; 8]; 8];
            for r in 0..8 {
                for c in 0..8 {
                    fp[r][c] = (0..8).map(|k| f(r, k) * self.p[k][c]).sum();
                }
            }
            let mut p = [[0.0; 8]; 8];
            for r in 0..8 {
                for c in 0..8 {
                    p[r][c] = (0..8).map(|k| fp[r][k] * f(c, k)).sum::<f64>() + if r == c { q[r] } else { 0.0 };
                }
            }
            self.x = x;
            self.p = p;
        }

        /// Sequential scalar updates; equivalent to the joint update for a
        /// diagonal measurement covariance.
        fn update(&mut self, z: [f64; 4], r: [f64; 4]) {
            for m in 0..4 {
                let s = self.p[m][m] + r[m];
                let k: Vec<f64> = (0..8).map(|i| self.p[i][m] / s).collect();
                let nu = z[m] - self.x[m];
                for i in 0..8 {
                    self.x[i] += k[i] * nu;
                }
                let row_m = self.p[m];
                for i in 0..8 {
                    for j in 0..8 {
                        self.p[i][j] -= k[i] * row_m[j];
                    }
                }
            }
        }
    }

    fn trace(m: &Matrix8) -> f64 {
        (0..8).map(|i| m[(i, i)]).sum()
    }

    #[test]
    fn zero_velocity_predict() {
        let noise = BoxNoise::default();
        let s = TrackState::initiate(&BBox::from_center(50.0, 60.0, 40.0, 20.0), &noise);
        let p = predict(&s, &noise);
        assert_eq!(p.mean.rows(0, 4), s.mean.rows(0, 4));
        // no velocity-position coupling yet, so only Q and the velocity variance add up
        let q0 = (0.05f64 * 40.0).powi(2);
        assert!((p.covariance[(0, 0)] - (s.covariance[(0, 0)] + s.covariance[(4, 4)] + q0)).abs() < 1e-9);
        let q4 = (0.0125f64 * 40.0).powi(2);
        assert!((p.covariance[(4, 4)] - (s.covariance[(4, 4)] + q4)).abs() < 1e-9);
    }

    #[test]
    fn one_euler_step() {
        let noise = BoxNoise::default();
        let mut s = TrackState::initiate(&BBox::from_center(0.0, 0.0, 10.0, 10.0), &noise);
        s.mean[4] = 10.0;
        assert_eq!(predict(&s, &noise).mean[0], 10.0);
    }

    #[test]
    fn long_run_covariance_stays_sane() {
        let noise = BoxNoise::default();
        let mut s = TrackState::initiate(&BBox::from_center(300.0, 200.0, 80.0, 60.0), &noise);
        s.mean[6] = 0.01;
        for _ in 0..1000 {
            s = predict(&s, &noise);
            assert!(s.covariance_is_sane());
        }
        assert!(s.covariance.symmetric_eigenvalues().iter().all(|&e| e >= -1e-6 * s.covariance.amax()));
    }

    #[test]
    fn update_with_zero_innovation_keeps_mean() {
        let noise = BoxNoise::default();
        let b = BBox::from_center(120.0, 80.0, 30.0, 30.0);
        let s = predict(&TrackState::initiate(&b, &noise), &noise);
        let u = kf_update(&s, &s.bbox(), &noise);
        for i in 0..8 {
            assert!((u.mean[i] - s.mean[i]).abs() < 1e-9);
        }
        assert!(trace(&u.covariance) <= trace(&s.covariance));
    }

    #[test]
    fn tiny_measurement_noise_snaps_to_measurement() {
        let noise = BoxNoise {
            measurement: 1e-9,
            ..Default::default()
        };
        let s = predict(&TrackState::initiate(&BBox::from_center(100.0, 100.0, 50.0, 50.0), &noise), &noise);
        let z = BBox::from_center(107.0, 95.0, 52.0, 49.0);
        let u = kf_update(&s, &z, &noise);
        assert!((u.mean[0] - 107.0).abs() < 1e-6);
        assert!((u.mean[1] - 95.0).abs() < 1e-6);
    }

    #[test]
    fn constant_velocity_sequence_matches_reference() {
        let noise = BoxNoise {
            measurement: 1e-3,
            ..Default::default()
        };
        let (w, h) = (40.0, 40.0);
        let mut s = TrackState::initiate(&BBox::from_center(0.0, 0.0, w, h), &noise);
        let mut reference = Reference {
            x: s.mean.as_slice().try_into().unwrap(),
            p: std::array::from_fn(|r| std::array::from_fn(|c| s.covariance[(r, c)])),
        };
        let qstd = [0.05 * w, 0.05 * h, 0.05 * w, 0.05 * h, 0.0125 * w, 0.0125 * h, 0.0125 * w, 0.0125 * h];
        let q = qstd.map(|v| v * v);
        let r = [(1e-3 * w).powi(2), (1e-3 * h).powi(2), (1e-3 * w).powi(2), (1e-3 * h).powi(2)];
        for x in [10.0, 20.0] {
            s = kf_update(&predict(&s, &noise), &BBox::from_center(x, 0.0, w, h), &noise);
            reference.predict(q);
            reference.update([x, 0.0, w, h], r);
        }
        let next = predict(&s, &noise);
        reference.predict(q);
        assert!((next.mean[0] - reference.x[0]).abs() < 1e-6, "{} vs {}", next.mean[0], reference.x[0]);
        assert!((28.0..=32.0).contains(&next.mean[0]), "predicted x {}", next.mean[0]);
    }

    #[test]
    fn warp_translation_moves_center_only() {
        let noise = BoxNoise::default();
        let mut s = TrackState::initiate(&BBox::from_center(100.0, 50.0, 20.0, 20.0), &noise);
        s.mean[4] = 3.0;
        s.warp(&MotionTransform::translation(40.0, -5.0));
        assert_eq!((s.mean[0], s.mean[1]), (140.0, 45.0));
        assert_eq!((s.mean[2], s.mean[3], s.mean[4]), (20.0, 20.0, 3.0));
    }
}
