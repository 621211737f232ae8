//! C ABI for the tool-motion pipeline: opaque handles, integer status codes
//! (0 ok, 2 input/schema, 3 empty result, 4 numeric failure), and a
//! thread-local last-error message. The committed header lives in
//! `include/toolmotion.h`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::path::Path;
use std::ptr;

use toolmotion::acquisition::{parse_trial, pivot_calibration, Trial};
use toolmotion::commands::{exit_code, CliError};
use toolmotion::geometry::{RigidTransform, UnitQuaternion, Vec3};
use toolmotion::pipeline::{process_trial, PipelineConfig, TrialResult};

pub const TM_OK: c_int = 0;
pub const TM_ERR_INPUT: c_int = 2;
pub const TM_ERR_EMPTY: c_int = 3;
pub const TM_ERR_NUMERIC: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_of(err: &CliError) -> c_int {
    set_error(&err.to_string());
    exit_code(err) as c_int
}

/// Opaque trial handle.
pub struct TmTrial(Trial);
/// Opaque processed-trial handle.
pub struct TmResult(TrialResult);

/// Message describing the most recent error on this thread. Valid until the
/// next failing call on the same thread; never NULL.
#[no_mangle]
pub extern "C" fn tm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a trial bundle directory. Returns NULL on failure (see
/// `tm_last_error`).
///
/// # Safety
/// `path` must be a valid NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn tm_trial_open(path: *const c_char) -> *mut TmTrial {
    if path.is_null() {
        set_error("path is NULL");
        return ptr::null_mut();
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return ptr::null_mut();
        }
    };
    match parse_trial(Path::new(path)) {
        Ok(t) => Box::into_raw(Box::new(TmTrial(t))),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Release a trial handle. NULL is a no-op.
///
/// # Safety
/// `trial` must come from `tm_trial_open` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tm_trial_free(trial: *mut TmTrial) {
    if !trial.is_null() {
        drop(Box::from_raw(trial));
    }
}

/// Run the full pipeline (calibration, registration, head compensation,
/// strokes, features) with default configuration and the given seed.
/// Returns NULL on failure.
///
/// # Safety
/// `trial` must be a live handle from `tm_trial_open`.
#[no_mangle]
pub unsafe extern "C" fn tm_process(trial: *const TmTrial, seed: u64) -> *mut TmResult {
    if trial.is_null() {
        set_error("trial is NULL");
        return ptr::null_mut();
    }
    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    match process_trial(&(*trial).0, &cfg) {
        Ok(r) => Box::into_raw(Box::new(TmResult(r))),
        Err(e) => {
            let _ = code_of(&CliError::Pipeline(e));
            ptr::null_mut()
        }
    }
}

/// Release a result handle. NULL is a no-op.
///
/// # Safety
/// `result` must come from `tm_process` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tm_result_free(result: *mut TmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of operators summarized in a result.
///
/// # Safety
/// `result` must be a live handle from `tm_process`.
#[no_mangle]
pub unsafe extern "C" fn tm_result_operator_count(result: *const TmResult) -> c_int {
    if result.is_null() {
        set_error("result is NULL");
        return -1;
    }
    (*result).0.operators.len() as c_int
}

/// Copy operator `index`'s id into `buf` (NUL-terminated, truncated to
/// `buf_len`). Returns the full id length in bytes, or -1 on error.
///
/// # Safety
/// `result` must be live; `buf` must point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tm_result_operator_id(
    result: *const TmResult,
    index: c_int,
    buf: *mut c_char,
    buf_len: usize,
) -> c_int {
    if result.is_null() || buf.is_null() {
        set_error("NULL argument");
        return -1;
    }
    let ops = &(*result).0.operators;
    let Some(op) = ops.get(index as usize) else {
        set_error("operator index out of range");
        return -1;
    };
    let bytes = op.operator_id.as_bytes();
    if buf_len > 0 {
        let n = bytes.len().min(buf_len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len() as c_int
}

/// Fetch operator `index`'s feature vector. `out` receives
/// [scc, sdc, cr, n_strokes]. Returns TM_OK, TM_ERR_EMPTY when every
/// sub-trial of that operator was excluded, or TM_ERR_INPUT.
///
/// # Safety
/// `result` must be live; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tm_result_features(
    result: *const TmResult,
    index: c_int,
    out: *mut c_double,
) -> c_int {
    if result.is_null() || out.is_null() {
        set_error("NULL argument");
        return TM_ERR_INPUT;
    }
    let ops = &(*result).0.operators;
    let Some(op) = ops.get(index as usize) else {
        set_error("operator index out of range");
        return TM_ERR_INPUT;
    };
    match op.features {
        Some(f) => {
            *out.add(0) = f.scc;
            *out.add(1) = f.sdc;
            *out.add(2) = f.cr;
            *out.add(3) = f.n_strokes as c_double;
            TM_OK
        }
        None => {
            set_error("all sub-trials excluded for this operator");
            TM_ERR_EMPTY
        }
    }
}

/// Pivot calibration from `n` poses given as scalar-first quaternions
/// (`quats_wxyz`, 4n doubles) and translations (`trans_xyz`, 3n doubles, mm).
/// Writes the tip offset into `out_offset` (3 doubles). Returns TM_OK,
/// TM_ERR_INPUT, or TM_ERR_NUMERIC for degenerate motion.
///
/// # Safety
/// The arrays must hold at least 4n / 3n / 3 readable or writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tm_pivot_calibrate(
    n: usize,
    quats_wxyz: *const c_double,
    trans_xyz: *const c_double,
    out_offset: *mut c_double,
) -> c_int {
    if quats_wxyz.is_null() || trans_xyz.is_null() || out_offset.is_null() {
        set_error("NULL argument");
        return TM_ERR_INPUT;
    }
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        let q = std::slice::from_raw_parts(quats_wxyz.add(4 * i), 4);
        let t = std::slice::from_raw_parts(trans_xyz.add(3 * i), 3);
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if !norm.is_finite() || norm <= 1e-12 {
            set_error(&format!("pose {i}: quaternion is zero or non-finite"));
            return TM_ERR_INPUT;
        }
        let rot = UnitQuaternion::new(q[0], q[1], q[2], q[3]);
        poses.push(RigidTransform::new(rot, Vec3::new(t[0], t[1], t[2])));
    }
    match pivot_calibration(&poses) {
        Ok(cal) => {
            *out_offset.add(0) = cal.tip_offset.x;
            *out_offset.add(1) = cal.tip_offset.y;
            *out_offset.add(2) = cal.tip_offset.z;
            TM_OK
        }
        Err(e) => code_of(&CliError::Acquisition(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use toolmotion::acquisition::OperatorClass;
    use toolmotion::commands::cmd_simulate;
    use toolmotion::synth::{DatasetPlan, HeadMotion};

    #[test]
    fn round_trip_through_the_c_surface() {
        let tmp = tempfile::tempdir().unwrap();
        let plan = DatasetPlan {
            n_experts: 1,
            n_novices: 0,
            trials_per_surgeon: 1,
            ..DatasetPlan::default()
        };
        let bundle = cmd_simulate(&plan, HeadMotion::None, 8, tmp.path()).unwrap().remove(0);
        let cpath = CString::new(bundle.to_str().unwrap()).unwrap();
        unsafe {
            let trial = tm_trial_open(cpath.as_ptr());
            assert!(!trial.is_null());
            let result = tm_process(trial, 0);
            assert!(!result.is_null());
            assert_eq!(tm_result_operator_count(result), 1);
            let mut buf = [0 as c_char; 64];
            let len = tm_result_operator_id(result, 0, buf.as_mut_ptr(), buf.len());
            assert!(len > 0);
            let id = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
            assert!(id.starts_with("expert"));
            let mut feats = [0.0; 4];
            assert_eq!(tm_result_features(result, 0, feats.as_mut_ptr()), TM_OK);
            assert!(feats[2] > 0.0 && feats[3] >= 7.0);
            assert_eq!(tm_result_features(result, 5, feats.as_mut_ptr()), TM_ERR_INPUT);
            tm_result_free(result);
            tm_trial_free(trial);
        }
    }

    #[test]
    fn open_missing_bundle_reports_error() {
        let cpath = CString::new("/nonexistent/bundle").unwrap();
        unsafe {
            let trial = tm_trial_open(cpath.as_ptr());
            assert!(trial.is_null());
            let msg = CStr::from_ptr(tm_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());
        }
    }

    #[test]
    fn pivot_calibration_over_the_c_surface() {
        // poses pivoting about a fixed point with a known offset
        let offset = Vec3::new(5.0, -2.0, 40.0);
        let pivot = Vec3::new(10.0, 20.0, 30.0);
        let mut quats = Vec::new();
        let mut trans = Vec::new();
        for k in 0..60 {
            let axis = Vec3::new((k as f64).sin() + 0.2, (1.3 * k as f64).cos(), 0.7);
            let q = UnitQuaternion::from_axis_angle(axis, 0.3 + 0.04 * k as f64);
            let t = pivot - q.rotate(offset);
            quats.extend_from_slice(&[q.w, q.x, q.y, q.z]);
            trans.extend_from_slice(&[t.x, t.y, t.z]);
        }
        let mut out = [0.0; 3];
        let code = unsafe {
            tm_pivot_calibrate(60, quats.as_ptr(), trans.as_ptr(), out.as_mut_ptr())
        };
        assert_eq!(code, TM_OK);
        let err = (Vec3::new(out[0], out[1], out[2]) - offset).norm();
        assert!(err < 1e-9, "offset error {err}");
        let _ = OperatorClass::Expert;
    }
}
