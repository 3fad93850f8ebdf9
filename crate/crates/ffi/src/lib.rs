//! C ABI over the tracking engine.
//!
//! A tracker is an opaque `HmotTracker*` created by `hmot_tracker_new` and
//! released by `hmot_tracker_free`. Every fallible call returns an
//! [`HmotStatus`]; on failure `hmot_last_error` describes the cause for the
//! calling thread. Enumerations cross the boundary as `uint32_t` constants so
//! that no foreign value can form an invalid Rust enum.
//!
//! A handle may be moved between threads but must not be used by two threads
//! at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hmot::metrics::{bev_iou, gauss_center_dist, iou_2d};
use hmot::{
    BoundingBox, Box2D, Box3D, Camera, ConfigFile, Detection, Embedding, Error, Mode, ObjectClass, Tracker,
    TrackerConfig,
};

pub const HMOT_MODE_2D: u32 = 2;
pub const HMOT_MODE_3D: u32 = 3;

pub const HMOT_CAMERA_NONE: u32 = 0;
pub const HMOT_CAMERA_FRONT: u32 = 1;
pub const HMOT_CAMERA_FRONT_LEFT: u32 = 2;
pub const HMOT_CAMERA_FRONT_RIGHT: u32 = 3;
pub const HMOT_CAMERA_SIDE_LEFT: u32 = 4;
pub const HMOT_CAMERA_SIDE_RIGHT: u32 = 5;

pub const HMOT_CLASS_VEHICLE: u32 = 0;
pub const HMOT_CLASS_PEDESTRIAN: u32 = 1;
pub const HMOT_CLASS_CYCLIST: u32 = 2;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NumericFailure = 4,
    Panic = 5,
}

/// One input detection. `values` holds `cx, cy, w, h` in 2D (the remaining
/// entries are ignored) or `cx, cy, cz, h, w, l, theta` in 3D. `embedding`
/// may be null when `embedding_len` is 0; it must be unit-norm otherwise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HmotDetection {
    pub values: [f64; 7],
    pub score: f64,
    pub class_id: u32,
    pub embedding: *const f64,
    pub embedding_len: usize,
}

/// One emitted track; `values` follows the layout of [`HmotDetection`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmotTrackOutput {
    pub track_id: u64,
    pub values: [f64; 7],
    pub score: f64,
    pub class_id: u32,
}

/// Opaque tracker handle.
pub struct HmotTracker {
    inner: Tracker,
    outputs: Vec<HmotTrackOutput>,
    stage_matches: [usize; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HmotStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } => HmotStatus::Config,
        Error::NumericFailure(_) => HmotStatus::NumericFailure,
        _ => HmotStatus::InvalidArgument,
    }
}

/// Runs `f`, records any error message and converts panics.
fn guarded(f: impl FnOnce() -> Result<(), (HmotStatus, String)>) -> HmotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HmotStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HmotStatus::Panic
        }
    }
}

fn fail(e: Error) -> (HmotStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HmotStatus, String) {
    (HmotStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> (HmotStatus, String) {
    (HmotStatus::InvalidArgument, msg.into())
}

fn mode_from(v: u32) -> Option<Mode> {
    match v {
        HMOT_MODE_2D => Some(Mode::D2),
        HMOT_MODE_3D => Some(Mode::D3),
        _ => None,
    }
}

fn camera_from(v: u32) -> Option<Option<Camera>> {
    Some(match v {
        HMOT_CAMERA_NONE => None,
        HMOT_CAMERA_FRONT => Some(Camera::Front),
        HMOT_CAMERA_FRONT_LEFT => Some(Camera::FrontLeft),
        HMOT_CAMERA_FRONT_RIGHT => Some(Camera::FrontRight),
        HMOT_CAMERA_SIDE_LEFT => Some(Camera::SideLeft),
        HMOT_CAMERA_SIDE_RIGHT => Some(Camera::SideRight),
        _ => return None,
    })
}

fn class_from(v: u32) -> Option<ObjectClass> {
    ObjectClass::ALL.get(v as usize).copied()
}

fn class_id(c: ObjectClass) -> u32 {
    c.index() as u32
}

fn values_of(b: &BoundingBox) -> [f64; 7] {
    let mut out = [0.0; 7];
    for (o, v) in out.iter_mut().zip(b.values()) {
        *o = v;
    }
    out
}

/// Reads one foreign detection.
///
/// # Safety
/// A non-null `embedding` must point to `embedding_len` readable values.
unsafe fn detection_from(d: &HmotDetection, mode: Mode, camera: Option<Camera>) -> Result<Detection, (HmotStatus, String)> {
    let class = class_from(d.class_id).ok_or_else(|| bad(format!("unknown class id {}", d.class_id)))?;
    let v = d.values;
    let bbox = match mode {
        Mode::D2 => BoundingBox::D2(Box2D::new(v[0], v[1], v[2], v[3]).map_err(fail)?),
        Mode::D3 => BoundingBox::D3(Box3D::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]).map_err(fail)?),
    };
    let embedding = match (d.embedding.is_null(), d.embedding_len) {
        (_, 0) => None,
        (true, _) => return Err(null("embedding")),
        (false, n) => {
            // SAFETY: guaranteed by the caller.
            let slice = unsafe { std::slice::from_raw_parts(d.embedding, n) };
            Some(Embedding::new(slice.to_vec()).map_err(fail)?)
        }
    };
    Detection::new(bbox, d.score, class, camera, embedding).map_err(fail)
}

/// Creates a tracker. `mode` is `HMOT_MODE_2D` or `HMOT_MODE_3D`; a 2D
/// tracker needs a camera other than `HMOT_CAMERA_NONE`, a 3D tracker takes
/// `HMOT_CAMERA_NONE`. `config_json` may be null for the tuned defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmot_tracker_new(
    mode: u32,
    camera: u32,
    config_json: *const c_char,
    out: *mut *mut HmotTracker,
) -> HmotStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null above.
        unsafe { *out = ptr::null_mut() };
        let mode = mode_from(mode).ok_or_else(|| bad(format!("unknown mode {mode}")))?;
        let camera = camera_from(camera).ok_or_else(|| bad(format!("unknown camera {camera}")))?;
        let config: TrackerConfig = if config_json.is_null() {
            TrackerConfig::new(mode)
        } else {
            // SAFETY: the caller passes a NUL-terminated string.
            let text = unsafe { CStr::from_ptr(config_json) }
                .to_str()
                .map_err(|_| bad("config is not UTF-8"))?;
            ConfigFile::from_json(text).and_then(|f| f.resolve(mode)).map_err(fail)?
        };
        let inner = Tracker::new(config, camera).map_err(fail)?;
        let handle = Box::new(HmotTracker {
            inner,
            outputs: Vec::new(),
            stage_matches: [0; 3],
        });
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Releases a tracker; null is ignored.
///
/// # Safety
/// `tracker` must come from `hmot_tracker_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hmot_tracker_free(tracker: *mut HmotTracker) {
    if !tracker.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(tracker) });
    }
}

/// Processes one frame. On success `*out_tracks` points to `*out_len` emitted
/// tracks owned by the handle and valid until the next step or free.
///
/// # Safety
/// `dets` must point to `n` detections (or be null with `n == 0`); the out
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmot_tracker_step(
    tracker: *mut HmotTracker,
    dets: *const HmotDetection,
    n: usize,
    out_tracks: *mut *const HmotTrackOutput,
    out_len: *mut usize,
) -> HmotStatus {
    guarded(|| {
        if tracker.is_null() {
            return Err(null("tracker"));
        }
        if out_tracks.is_null() || out_len.is_null() {
            return Err(null("output pointer"));
        }
        if dets.is_null() && n > 0 {
            return Err(null("dets"));
        }
        // SAFETY: non-null and exclusively borrowed per the contract.
        let t = unsafe { &mut *tracker };
        let mode = t.inner.config().mode;
        let camera = t.inner.camera();
        let raw = if n == 0 {
            &[][..]
        } else {
            // SAFETY: the caller provides n readable detections.
            unsafe { std::slice::from_raw_parts(dets, n) }
        };
        let detections = raw
            .iter()
            // SAFETY: embedding pointers are the caller's responsibility.
            .map(|d| unsafe { detection_from(d, mode, camera) })
            .collect::<Result<Vec<_>, _>>()?;
        let res = t.inner.step(&detections).map_err(fail)?;
        t.stage_matches = res.stage_matches;
        t.outputs = res
            .tracks
            .iter()
            .map(|o| HmotTrackOutput {
                track_id: o.id,
                values: values_of(&o.bbox),
                score: o.score,
                class_id: class_id(o.class),
            })
            .collect();
        // SAFETY: both checked non-null above.
        unsafe {
            *out_tracks = t.outputs.as_ptr();
            *out_len = t.outputs.len();
        }
        Ok(())
    })
}

/// Matches per association stage in the last frame.
///
/// # Safety
/// `tracker` must be a live handle and `out` must point to three values.
#[no_mangle]
pub unsafe extern "C" fn hmot_tracker_stage_matches(tracker: *const HmotTracker, out: *mut usize) -> HmotStatus {
    guarded(|| {
        if tracker.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        // SAFETY: valid per the contract.
        let t = unsafe { &*tracker };
        for (i, v) in t.stage_matches.iter().enumerate() {
            // SAFETY: out holds three values.
            unsafe { *out.add(i) = *v };
        }
        Ok(())
    })
}

/// Number of live tracks, or 0 for a null handle.
///
/// # Safety
/// `tracker` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmot_tracker_live_tracks(tracker: *const HmotTracker) -> usize {
    if tracker.is_null() {
        return 0;
    }
    // SAFETY: live per the contract.
    unsafe { &*tracker }.inner.tracks().len()
}

/// IoU of two `cx, cy, w, h` boxes.
///
/// # Safety
/// `a` and `b` must point to four values, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn hmot_iou_2d(a: *const f64, b: *const f64, out: *mut f64) -> HmotStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let read = |p: *const f64| {
            // SAFETY: four readable values per the contract.
            let v = unsafe { std::slice::from_raw_parts(p, 4) };
            Box2D::new(v[0], v[1], v[2], v[3]).map_err(fail)
        };
        let v = iou_2d(&read(a)?, &read(b)?);
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

fn read_3d(p: *const f64) -> Result<Box3D, (HmotStatus, String)> {
    // SAFETY: callers guarantee seven readable values.
    let v = unsafe { std::slice::from_raw_parts(p, 7) };
    Box3D::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6]).map_err(fail)
}

/// Bird's-eye-view IoU of two `cx, cy, cz, h, w, l, theta` boxes.
///
/// # Safety
/// `a` and `b` must point to seven values, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn hmot_bev_iou(a: *const f64, b: *const f64, out: *mut f64) -> HmotStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let v = bev_iou(&read_3d(a)?, &read_3d(b)?);
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

/// Gaussian-kernel center distance of two 3D boxes.
///
/// # Safety
/// `a` and `b` must point to seven values, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn hmot_gauss_center_dist(a: *const f64, b: *const f64, sigma: f64, out: *mut f64) -> HmotStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(bad("sigma must be positive"));
        }
        let v = gauss_center_dist(&read_3d(a)?, &read_3d(b)?, sigma);
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The string stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hmot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hmot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
