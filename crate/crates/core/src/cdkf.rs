//! Scalar Kalman smoothing of a track's area with measurement noise driven by
//! detection confidence and pothole distance.
//!
//! Units: area in m², so the variances `P`, `Q` and `R` are in m⁴.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    ConfidenceOnly,
    DistanceOnly,
    #[default]
    Combined,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence_only" | "confidence" => Ok(NoiseMode::ConfidenceOnly),
            "distance_only" | "distance" => Ok(NoiseMode::DistanceOnly),
            "combined" => Ok(NoiseMode::Combined),
            other => Err(Error::InvalidArgument(format!("unknown noise mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseMode::ConfidenceOnly => "confidence_only",
            NoiseMode::DistanceOnly => "distance_only",
            NoiseMode::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdkfConfig {
    /// Confidence weight.
    pub lambda: f64,
    /// Distance weight, per meter.
    pub theta: f64,
    /// Trusted distance, meters: closer potholes are all treated as at `d0`.
    pub d0: f64,
    /// Process noise variance.
    pub q: f64,
    pub mode: NoiseMode,
}

impl Default for CdkfConfig {
    fn default() -> Self {
        CdkfConfig {
            lambda: 1.026,
            theta: 0.7179,
            d0: 5.0,
            q: 1e-3,
            mode: NoiseMode::Combined,
        }
    }
}

impl CdkfConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0 && self.theta >= 0.0 && self.d0 > 0.0 && self.q > 0.0;
        if !ok || !(self.lambda.is_finite() && self.theta.is_finite() && self.d0.is_finite() && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid CDKF config {self:?}")));
        }
        Ok(())
    }
}

/// `R = lambda / c + theta * max(d, d0)`, or one of its two terms in the
/// single-factor modes.
pub fn measurement_noise(c: f64, d: f64, cfg: &CdkfConfig) -> Result<f64> {
    if c <= 0.0 || c.is_nan() {
        return Err(Error::ZeroConfidence(c));
    }
    let conf_term = cfg.lambda / c;
    let dist_term = cfg.theta * d.max(cfg.d0);
    Ok(match cfg.mode {
        NoiseMode::Combined => conf_term + dist_term,
        NoiseMode::ConfidenceOnly => conf_term,
        NoiseMode::DistanceOnly => dist_term,
    })
}

/// Area estimate `a` with variance `p`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CdkfState {
    pub a: f64,
    pub p: f64,
    pub last_nis: Option<f64>,
    pub updates: u64,
}

impl CdkfState {
    pub fn is_initialized(&self) -> bool {
        self.updates > 0
    }
}

/// Constant-state prediction: the area carries over, its variance grows by `q`.
pub fn predict(s: &CdkfState, cfg: &CdkfConfig) -> Result<CdkfState> {
    if !s.is_initialized() {
        return Err(Error::Uninitialized);
    }
    Ok(CdkfState { p: s.p + cfg.q, ..*s })
}

/// Measurement update with area `z` observed at confidence `c` and distance
/// `d`. The first measurement initializes the state to `(z, R)`.
pub fn update(s: &CdkfState, z: f64, c: f64, d: f64, cfg: &CdkfConfig) -> Result<CdkfState> {
    let r = measurement_noise(c, d, cfg)?;
    Ok(update_with_noise(s, z, r))
}

pub(crate) fn update_with_noise(s: &CdkfState, z: f64, r: f64) -> CdkfState {
    if !s.is_initialized() {
        return CdkfState {
            a: z,
            p: r,
            last_nis: None,
            updates: 1,
        };
    }
    let innovation = z - s.a;
    let s_var = s.p + r;
    let (gain, nis) = if r.is_infinite() {
        (0.0, 0.0)
    } else {
        (s.p / s_var, innovation * innovation / s_var)
    };
    CdkfState {
        a: s.a + gain * innovation,
        p: (1.0 - gain) * s.p,
        last_nis: Some(nis),
        updates: s.updates + 1,
    }
}

/// Per-track filter: one predict/update per observation.
#[derive(Debug, Clone, Default)]
pub struct AreaFilter {
    pub cfg: CdkfConfig,
    pub state: CdkfState,
    /// Frame of the latest update, for [`AreaFilter::observe_at`].
    pub last_frame: Option<u64>,
}

impl AreaFilter {
    pub fn new(cfg: CdkfConfig) -> Self {
        AreaFilter {
            cfg,
            state: CdkfState::default(),
            last_frame: None,
        }
    }

    /// Like [`AreaFilter::observe`], but first coasts over the frames skipped
    /// since the previous update so that `P` grows by `q` per frame.
    pub fn observe_at(&mut self, frame: u64, z: f64, c: f64, d: f64) -> Result<(f64, Option<f64>)> {
        if let Some(last) = self.last_frame {
            for _ in 1..frame.saturating_sub(last) {
                self.coast();
            }
        }
        let out = self.observe(z, c, d)?;
        self.last_frame = Some(frame);
        Ok(out)
    }

    /// Predicts (when initialized) and incorporates one measurement. Returns
    /// the smoothed area and the NIS of this update, if any.
    pub fn observe(&mut self, z: f64, c: f64, d: f64) -> Result<(f64, Option<f64>)> {
        let prior = if self.state.is_initialized() {
            predict(&self.state, &self.cfg)?
        } else {
            self.state
        };
        self.state = update(&prior, z, c, d, &self.cfg)?;
        Ok((self.state.a, self.state.last_nis))
    }

    /// Time passes without a usable measurement.
    pub fn coast(&mut self) {
        if let Ok(s) = predict(&self.state, &self.cfg) {
            self.state = s;
        }
    }
}
