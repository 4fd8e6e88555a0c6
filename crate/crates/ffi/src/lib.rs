//! C ABI over `pothole-core`.
//!
//! Every function returns a [`PotholeStatus`]. On failure the message is kept
//! per thread and read back with [`pothole_last_error`]. Handles are opaque
//! and must be released with their matching `*_free` function. Panics never
//! cross the boundary; they surface as [`PotholeStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pothole_core::cdkf::{AreaFilter, CdkfConfig, NoiseMode};
use pothole_core::io::read_pfm;
use pothole_core::mbtp::estimate_area;
use pothole_core::model::{BBox, CameraIntrinsics, DepthMap, Detection, MotionTransform};
use pothole_core::tracker::{Tracker, TrackerConfig};
use pothole_core::Error;

/// Track id written for detections that no track claimed.
pub const POTHOLE_NO_TRACK: u64 = 0;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotholeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoValidDepth = 3,
    EmptyRegion = 4,
    Io = 5,
    Format = 6,
    OutOfOrder = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub enum PotholeNoiseMode {
    ConfidenceOnly = 0,
    DistanceOnly = 1,
    Combined = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PotholeIntrinsics {
    pub f_u: f64,
    pub f_v: f64,
    pub p_u: f64,
    pub p_v: f64,
    pub width: usize,
    pub height: usize,
}

/// Corner-form box in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PotholeBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PotholeDetection {
    pub class_id: u32,
    pub bbox: PotholeBox,
    pub confidence: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PotholeAreaEstimate {
    pub area_m2: f64,
    pub distance_m: f64,
    pub valid_patch_fraction: f64,
    pub valid_patch_count: usize,
    pub total_patch_count: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PotholeCdkfConfig {
    pub lambda: f64,
    pub theta: f64,
    pub d0: f64,
    pub q: f64,
    pub mode: PotholeNoiseMode,
}

/// Metric depth map.
pub struct PotholeDepthMap(DepthMap);

/// Confidence and distance aware area smoother for one track.
pub struct PotholeAreaFilter(AreaFilter);

/// Multi-object tracker with default settings.
pub struct PotholeTracker(Tracker);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PotholeStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidDepth(_) | Error::ZeroConfidence(_) | Error::PixelOutOfRange { .. } => {
            PotholeStatus::InvalidArgument
        }
        Error::NoValidDepth | Error::NoValidPoints => PotholeStatus::NoValidDepth,
        Error::EmptyRegion => PotholeStatus::EmptyRegion,
        Error::Io { .. } => PotholeStatus::Io,
        Error::BadMagic(_)
        | Error::DimensionMismatch(_)
        | Error::TruncatedPayload { .. }
        | Error::MalformedLine { .. }
        | Error::UnsupportedVersion(_)
        | Error::Parse(_) => PotholeStatus::Format,
        Error::OutOfOrderFrame { .. } => PotholeStatus::OutOfOrder,
        Error::Frame { source, .. } => status_of(source),
        _ => PotholeStatus::Internal,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PotholeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PotholeStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("{name} is null"));
            PotholeStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            PotholeStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

fn to_intrinsics(k: &PotholeIntrinsics) -> Result<CameraIntrinsics, Failure> {
    Ok(CameraIntrinsics::new(k.f_u, k.f_v, k.p_u, k.p_v, k.width, k.height)?)
}

fn to_bbox(b: &PotholeBox) -> BBox {
    BBox::new(b.x, b.y, b.w, b.h)
}

fn cdkf_config(c: &PotholeCdkfConfig) -> CdkfConfig {
    CdkfConfig {
        lambda: c.lambda,
        theta: c.theta,
        d0: c.d0,
        q: c.q,
        mode: match c.mode {
            PotholeNoiseMode::ConfidenceOnly => NoiseMode::ConfidenceOnly,
            PotholeNoiseMode::DistanceOnly => NoiseMode::DistanceOnly,
            PotholeNoiseMode::Combined => NoiseMode::Combined,
        },
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pothole_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pothole_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `width * height` row-major depths in meters. Zero and non-finite
/// values mark holes.
///
/// # Safety
/// `values` must point to `width * height` readable doubles and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn pothole_depth_new(width: usize, height: usize, values: *const f64, out: *mut *mut PotholeDepthMap) -> PotholeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidArgument(format!("depth map {width}x{height} is too large")))?;
        let d = DepthMap::new(width, height, std::slice::from_raw_parts(values, n).to_vec())?;
        *out = Box::into_raw(Box::new(PotholeDepthMap(d)));
        Ok(())
    })
}

/// Reads a grayscale PFM depth file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn pothole_depth_read_pfm(path: *const c_char, out: *mut *mut PotholeDepthMap) -> PotholeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
        *out = Box::into_raw(Box::new(PotholeDepthMap(read_pfm(Path::new(p))?)));
        Ok(())
    })
}

/// # Safety
/// `depth` must be a live handle; `width` and `height` may be null.
#[no_mangle]
pub unsafe extern "C" fn pothole_depth_size(depth: *const PotholeDepthMap, width: *mut usize, height: *mut usize) -> PotholeStatus {
    guard(|| {
        let d = &deref(depth, "depth")?.0;
        if let Some(w) = width.as_mut() {
            *w = d.width();
        }
        if let Some(h) = height.as_mut() {
            *h = d.height();
        }
        Ok(())
    })
}

/// # Safety
/// `depth` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pothole_depth_free(depth: *mut PotholeDepthMap) {
    if !depth.is_null() {
        drop(Box::from_raw(depth));
    }
}

/// Metric area of the region inside one detection box.
///
/// # Safety
/// All pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pothole_estimate_area(
    depth: *const PotholeDepthMap,
    intrinsics: *const PotholeIntrinsics,
    bbox: *const PotholeBox,
    confidence: f64,
    out: *mut PotholeAreaEstimate,
) -> PotholeStatus {
    guard(|| {
        let d = &deref(depth, "depth")?.0;
        let k = to_intrinsics(deref(intrinsics, "intrinsics")?)?;
        let b = to_bbox(deref(bbox, "bbox")?);
        let out = deref_mut(out, "out")?;
        let e = estimate_area(&b, d, &k, confidence)?;
        *out = PotholeAreaEstimate {
            area_m2: e.area_m2,
            distance_m: e.distance_m,
            valid_patch_fraction: e.valid_patch_fraction(),
            valid_patch_count: e.valid_patch_count,
            total_patch_count: e.total_patch_count,
        };
        Ok(())
    })
}

/// Default smoother settings.
#[no_mangle]
pub extern "C" fn pothole_cdkf_config_default() -> PotholeCdkfConfig {
    let c = CdkfConfig::default();
    PotholeCdkfConfig {
        lambda: c.lambda,
        theta: c.theta,
        d0: c.d0,
        q: c.q,
        mode: PotholeNoiseMode::Combined,
    }
}

/// # Safety
/// `config` must be readable and `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn pothole_area_filter_new(config: *const PotholeCdkfConfig, out: *mut *mut PotholeAreaFilter) -> PotholeStatus {
    guard(|| {
        let cfg = cdkf_config(deref(config, "config")?);
        let out = deref_mut(out, "out")?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(PotholeAreaFilter(AreaFilter::new(cfg))));
        Ok(())
    })
}

/// Feeds one area measurement with its confidence and distance. Writes the
/// smoothed area and the normalized innovation squared, which is NaN on the
/// first measurement.
///
/// # Safety
/// `filter` must be a live handle; `smoothed` and `nis` may be null.
#[no_mangle]
pub unsafe extern "C" fn pothole_area_filter_observe(
    filter: *mut PotholeAreaFilter,
    area_m2: f64,
    confidence: f64,
    distance_m: f64,
    smoothed: *mut f64,
    nis: *mut f64,
) -> PotholeStatus {
    guard(|| {
        let f = &mut deref_mut(filter, "filter")?.0;
        let (a, n) = f.observe(area_m2, confidence, distance_m)?;
        if let Some(s) = smoothed.as_mut() {
            *s = a;
        }
        if let Some(p) = nis.as_mut() {
            *p = n.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// # Safety
/// `filter` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pothole_area_filter_free(filter: *mut PotholeAreaFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// # Safety
/// `out` must be a writable slot.
#[no_mangle]
pub unsafe extern "C" fn pothole_tracker_new(out: *mut *mut PotholeTracker) -> PotholeStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(PotholeTracker(Tracker::new(TrackerConfig::default())?)));
        Ok(())
    })
}

/// Advances the tracker by one frame. `motion` is an optional row-major 3x3
/// transform from the previous frame to this one. `track_ids` receives one id
/// per detection, [`POTHOLE_NO_TRACK`] where none was assigned.
///
/// # Safety
/// `dets` must hold `n` readable detections (or be null when `n` is 0),
/// `motion` must be null or hold 9 doubles, and `track_ids` must hold `n`
/// writable slots.
#[no_mangle]
pub unsafe extern "C" fn pothole_tracker_step(
    tracker: *mut PotholeTracker,
    frame: u64,
    dets: *const PotholeDetection,
    n: usize,
    motion: *const f64,
    track_ids: *mut u64,
) -> PotholeStatus {
    guard(|| {
        let t = &mut deref_mut(tracker, "tracker")?.0;
        if n > 0 && dets.is_null() {
            return Err(Failure::Null("dets"));
        }
        if n > 0 && track_ids.is_null() {
            return Err(Failure::Null("track_ids"));
        }
        let raw = if n == 0 { &[][..] } else { std::slice::from_raw_parts(dets, n) };
        let dets = raw
            .iter()
            .map(|d| Detection::new(frame, d.class_id, to_bbox(&d.bbox), d.confidence))
            .collect::<pothole_core::Result<Vec<_>>>()?;
        let motion = (!motion.is_null()).then(|| {
            let m = std::slice::from_raw_parts(motion, 9);
            MotionTransform {
                m: [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]],
            }
        });
        let assigned = t.step_indexed(frame, &dets, motion.as_ref())?;
        if n > 0 {
            let ids = std::slice::from_raw_parts_mut(track_ids, n);
            ids.fill(POTHOLE_NO_TRACK);
            for (id, k) in assigned {
                ids[k] = id;
            }
        }
        Ok(())
    })
}

/// Number of live tracks, tentative ones included.
///
/// # Safety
/// `tracker` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn pothole_tracker_track_count(tracker: *const PotholeTracker, count: *mut usize) -> PotholeStatus {
    guard(|| {
        let t = &deref(tracker, "tracker")?.0;
        *deref_mut(count, "count")? = t.tracks().len();
        Ok(())
    })
}

/// # Safety
/// `tracker` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pothole_tracker_free(tracker: *mut PotholeTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}
