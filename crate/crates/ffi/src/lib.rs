//! C ABI over `usc-core`.
//!
//! Every function returns a [`UscStatus`] and writes results through out
//! pointers. On failure, [`usc_last_error_message`] describes the error for
//! the calling thread. Handles returned by `*_load`, `*_default` and
//! `usc_evaluate` are owned by the caller and released with the matching
//! `*_free` function; strings are released with [`usc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use usc_core::evaluation::{evaluate, FrameRecord, MetricsReport, Summary};
use usc_core::geometry::{iogt3d, iou3d, Box3D, Point3};
use usc_core::io::{load_config, load_dataset, report_to_json, Config};
use usc_core::loss::{safety_loss, LossConfig};
use usc_core::usc;
use usc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The score is undefined for this pair, e.g. a box behind the vehicle.
    Undefined = 3,
    ParseError = 4,
    SchemaError = 5,
    IoError = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Box in the vehicle frame: x right, y down, z forward, meters and radians.
/// `length` runs along x, `height` along y and `width` along z at zero yaw.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UscBox {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub length: f64,
    pub height: f64,
    pub width: f64,
    pub yaw: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UscScore {
    pub pv_constraint: bool,
    pub bev_constraint: bool,
    pub verdict: bool,
    pub iogt_pv: f64,
    pub adr: f64,
    pub usc: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UscLossConfig {
    pub lambda: f64,
    pub smooth_l1_beta: f64,
    pub wrap_yaw: bool,
}

/// Summary scores; NaN marks a value undefined for lack of data.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UscSummary {
    pub mean_ap: f64,
    pub nds: f64,
    pub mausc: f64,
    pub usc_nds: f64,
}

/// Opaque dataset handle.
pub struct UscDataset {
    frames: Vec<FrameRecord>,
}

/// Opaque evaluation and loss configuration.
pub struct UscConfig {
    config: Config,
}

/// Opaque metrics report.
pub struct UscReport {
    report: MetricsReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> UscStatus {
    match err {
        Error::InvalidBox(_) | Error::InvalidPolygon(_) | Error::Config(_) => {
            UscStatus::InvalidArgument
        }
        Error::BehindCamera { .. }
        | Error::DegenerateGroundTruth
        | Error::BehindVehicle { .. }
        | Error::OriginInside
        | Error::GroundTruthAtOrigin
        | Error::ZeroVariance
        | Error::SeriesLength(..) => UscStatus::Undefined,
        Error::MissingAnnotationField { .. } | Error::Schema { .. } => UscStatus::SchemaError,
        Error::Parse { .. } => UscStatus::ParseError,
        Error::Io { .. } => UscStatus::IoError,
        Error::Frame { source, .. } => status_of(source),
    }
}

struct Failure(UscStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(UscStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            UscStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            UscStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(UscStatus::InvalidArgument, "path is not UTF-8".into()))
}

fn to_box(b: &UscBox) -> Result<Box3D, Failure> {
    Ok(Box3D::new(
        Point3::new(b.x, b.y, b.z),
        b.length,
        b.height,
        b.width,
        b.yaw,
    )?)
}

fn to_c_summary(s: &Summary) -> UscSummary {
    let v = |x: Option<f64>| x.unwrap_or(f64::NAN);
    UscSummary {
        mean_ap: v(s.mean_ap),
        nds: v(s.nds),
        mausc: v(s.mausc),
        usc_nds: v(s.usc_nds),
    }
}

/// Message for the last failed call on this thread, or NULL after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn usc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// 3D intersection over union.
///
/// # Safety
/// `p` and `g` must point to valid boxes and `result` to writable memory.
#[no_mangle]
pub unsafe extern "C" fn usc_iou3d(
    p: *const UscBox,
    g: *const UscBox,
    result: *mut f64,
) -> UscStatus {
    guard(|| {
        let (p, g) = (to_box(deref(p, "p")?)?, to_box(deref(g, "g")?)?);
        *out(result, "result")? = iou3d(&p, &g);
        Ok(())
    })
}

/// 3D intersection over the ground-truth volume.
///
/// # Safety
/// As for [`usc_iou3d`].
#[no_mangle]
pub unsafe extern "C" fn usc_iogt3d(
    p: *const UscBox,
    g: *const UscBox,
    result: *mut f64,
) -> UscStatus {
    guard(|| {
        let (p, g) = (to_box(deref(p, "p")?)?, to_box(deref(g, "g")?)?);
        *out(result, "result")? = iogt3d(&p, &g);
        Ok(())
    })
}

/// Constraint verdicts and USC score of prediction `p` against `g`.
///
/// # Safety
/// As for [`usc_iou3d`].
#[no_mangle]
pub unsafe extern "C" fn usc_score(
    p: *const UscBox,
    g: *const UscBox,
    focal: f64,
    result: *mut UscScore,
) -> UscStatus {
    guard(|| {
        let (p, g) = (to_box(deref(p, "p")?)?, to_box(deref(g, "g")?)?);
        let b = usc::usc_score(&p, &g, focal)?;
        *out(result, "result")? = UscScore {
            pv_constraint: b.pv_constraint,
            bev_constraint: b.bev_constraint,
            verdict: b.verdict,
            iogt_pv: b.iogt_pv,
            adr: b.adr,
            usc: b.usc,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn usc_loss_config_default() -> UscLossConfig {
    let d = LossConfig::default();
    UscLossConfig {
        lambda: d.lambda,
        smooth_l1_beta: d.smooth_l1_beta,
        wrap_yaw: d.wrap_yaw,
    }
}

/// Blended SmoothL1 and IoGT loss. A NULL `config` selects the defaults.
///
/// # Safety
/// As for [`usc_iou3d`]; `config` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn usc_safety_loss(
    p: *const UscBox,
    g: *const UscBox,
    config: *const UscLossConfig,
    result: *mut f64,
) -> UscStatus {
    guard(|| {
        let (p, g) = (to_box(deref(p, "p")?)?, to_box(deref(g, "g")?)?);
        let cfg = match config.as_ref() {
            None => LossConfig::default(),
            Some(c) => LossConfig::new(c.lambda, c.smooth_l1_beta, c.wrap_yaw)?,
        };
        *out(result, "result")? = safety_loss(&p, &g, &cfg);
        Ok(())
    })
}

/// Loads a JSON-lines dataset.
///
/// # Safety
/// `path` must be a nul-terminated string and `dataset` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_dataset_load(
    path: *const c_char,
    dataset: *mut *mut UscDataset,
) -> UscStatus {
    guard(|| {
        let slot = out(dataset, "dataset")?;
        *slot = ptr::null_mut();
        let frames = load_dataset(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(UscDataset { frames }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_dataset_frame_count(
    dataset: *const UscDataset,
    count: *mut usize,
) -> UscStatus {
    guard(|| {
        *out(count, "count")? = deref(dataset, "dataset")?.frames.len();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn usc_dataset_free(dataset: *mut UscDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn usc_config_default(config: *mut *mut UscConfig) -> UscStatus {
    guard(|| {
        *out(config, "config")? = Box::into_raw(Box::new(UscConfig {
            config: Config::default(),
        }));
        Ok(())
    })
}

/// Loads a JSON config; absent fields take their defaults.
///
/// # Safety
/// `path` must be a nul-terminated string and `config` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_config_load(
    path: *const c_char,
    config: *mut *mut UscConfig,
) -> UscStatus {
    guard(|| {
        let slot = out(config, "config")?;
        *slot = ptr::null_mut();
        let config = load_config(path_arg(path)?)?;
        *slot = Box::into_raw(Box::new(UscConfig { config }));
        Ok(())
    })
}

/// Loss settings held by a config handle.
///
/// # Safety
/// `config` must be a live handle and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_config_loss(
    config: *const UscConfig,
    result: *mut UscLossConfig,
) -> UscStatus {
    guard(|| {
        let l = deref(config, "config")?.config.loss;
        *out(result, "result")? = UscLossConfig {
            lambda: l.lambda,
            smooth_l1_beta: l.smooth_l1_beta,
            wrap_yaw: l.wrap_yaw,
        };
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn usc_config_free(config: *mut UscConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Evaluates `dataset`. A NULL `config` selects the defaults.
///
/// # Safety
/// `dataset` must be a live handle, `config` NULL or live, `report` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_evaluate(
    dataset: *const UscDataset,
    config: *const UscConfig,
    report: *mut *mut UscReport,
) -> UscStatus {
    guard(|| {
        let slot = out(report, "report")?;
        *slot = ptr::null_mut();
        let dataset = deref(dataset, "dataset")?;
        let default = Config::default();
        let cfg = config.as_ref().map_or(&default, |c| &c.config);
        let report = evaluate(&dataset.frames, &cfg.protocol)?;
        *slot = Box::into_raw(Box::new(UscReport { report }));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_report_bucket_count(
    report: *const UscReport,
    count: *mut usize,
) -> UscStatus {
    guard(|| {
        *out(count, "count")? = deref(report, "report")?.report.buckets.len();
        Ok(())
    })
}

/// Summary of bucket `index`, in config order.
///
/// # Safety
/// `report` must be a live handle and `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_report_bucket_summary(
    report: *const UscReport,
    index: usize,
    summary: *mut UscSummary,
) -> UscStatus {
    guard(|| {
        let buckets = &deref(report, "report")?.report.buckets;
        let bucket = buckets.get(index).ok_or_else(|| {
            Failure(
                UscStatus::OutOfRange,
                format!("bucket {index} of {}", buckets.len()),
            )
        })?;
        *out(summary, "summary")? = to_c_summary(&bucket.summary);
        Ok(())
    })
}

/// Mean of the bucket summaries.
///
/// # Safety
/// `report` must be a live handle and `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_report_overall(
    report: *const UscReport,
    summary: *mut UscSummary,
) -> UscStatus {
    guard(|| {
        *out(summary, "summary")? = to_c_summary(&deref(report, "report")?.report.overall);
        Ok(())
    })
}

/// Full report as JSON; free the string with [`usc_string_free`].
///
/// # Safety
/// `report` must be a live handle and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn usc_report_to_json(
    report: *const UscReport,
    json: *mut *mut c_char,
) -> UscStatus {
    guard(|| {
        let slot = out(json, "json")?;
        *slot = ptr::null_mut();
        let text = report_to_json(&deref(report, "report")?.report);
        *slot = CString::new(text)
            .expect("JSON has no nul bytes")
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn usc_report_free(report: *mut UscReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn usc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
