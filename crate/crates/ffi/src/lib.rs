//! C ABI over the test runner and the register codec.
//!
//! Handles are opaque and owned by the caller once returned; each has a
//! matching `_free`. Every entry point returns an [`AvStatus`] or a plain
//! value, never unwinds, and records a message for [`av_last_error`] on
//! failure. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use accelvip::codec::{pack_reg, unpack_reg, PackedBits, RegPacket, REG_PACKED_WIDTH};
use accelvip::runner::{configure_for, run_test, RunConfig, RunError, RunOutcome};

/// Bytes in a packed register transaction: 105 bits, MSB first, low pad
/// bits zero.
pub const AV_REG_PACKED_BYTES: usize = 14;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvStatus {
    AvOk = 0,
    /// A required pointer argument was null.
    AvErrNull = 1,
    /// Bad key, value, or topology.
    AvErrConfig = 2,
    AvErrUnknownTest = 3,
    AvErrLink = 4,
    /// A field or packed vector is out of range.
    AvErrCodec = 5,
    /// The run aborted; functional failures are reported on the outcome.
    AvErrRun = 6,
    AvErrPanic = 7,
}

/// Register transaction in record form. Booleans are 0 or 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AvRegPacket {
    pub req: u8,
    pub eop: u8,
    pub addr: u32,
    pub data: u32,
    /// 4 bits; 0 marks a read.
    pub be: u8,
    pub r_req: u8,
    pub r_data: u32,
    /// 2 bits.
    pub r_opc: u8,
}

/// Run configuration handle.
pub struct AvRunConfig(RunConfig);

/// Result of one run.
pub struct AvOutcome(RunOutcome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("NULs replaced"));
}

struct Fail(AvStatus, String);

impl From<RunError> for Fail {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Config(_) | RunError::Unsupported(_) => AvStatus::AvErrConfig,
            RunError::UnknownTest(_) => AvStatus::AvErrUnknownTest,
            RunError::Link(_) => AvStatus::AvErrLink,
            _ => AvStatus::AvErrRun,
        };
        Fail(code, e.to_string())
    }
}

impl From<accelvip::codec::CodecError> for Fail {
    fn from(e: accelvip::codec::CodecError) -> Self {
        Fail(AvStatus::AvErrCodec, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AvStatus::AvErrNull, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AvStatus::AvOk,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            AvStatus::AvErrPanic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AvStatus::AvErrConfig, format!("`{what}` is not UTF-8")))
}

/// Copies `s` into `buf` truncated to `len - 1` bytes plus NUL. Returns the
/// full length excluding the NUL, so a caller can size a retry.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    s.len()
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn av_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies this thread's last error message into `buf`. Returns its full
/// length; 0 means no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn av_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_out(e.borrow().to_str().unwrap_or(""), buf, len))
}

/// Creates a configuration for a built-in test with its default topology.
///
/// # Safety
/// `test` must be a valid string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn av_run_config_new(
    test: *const c_char,
    out: *mut *mut AvRunConfig,
) -> AvStatus {
    guard(|| {
        let test = str_arg(test, "test")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut r = RunConfig::new(test);
        configure_for(&mut r);
        *out = Box::into_raw(Box::new(AvRunConfig(r)));
        Ok(())
    })
}

/// Sets one key with the same names and syntax as a flat config file.
///
/// # Safety
/// `cfg` must come from [`av_run_config_new`]; `key` and `value` must be
/// valid strings.
#[no_mangle]
pub unsafe extern "C" fn av_run_config_set(
    cfg: *mut AvRunConfig,
    key: *const c_char,
    value: *const c_char,
) -> AvStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        if key.contains(['=', '\n']) || value.contains('\n') {
            return Err(Fail(AvStatus::AvErrConfig, format!("bad key `{key}`")));
        }
        cfg.0.apply_flat(&format!("{key}={value}"))?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from [`av_run_config_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn av_run_config_free(cfg: *mut AvRunConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured test to completion. A functional failure still
/// returns `AvOk`; inspect the outcome.
///
/// # Safety
/// `cfg` must come from [`av_run_config_new`] and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn av_run(cfg: *const AvRunConfig, out: *mut *mut AvOutcome) -> AvStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = run_test(&cfg.0)?;
        *out = Box::into_raw(Box::new(AvOutcome(o)));
        Ok(())
    })
}

/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_passed(o: *const AvOutcome) -> bool {
    o.as_ref().is_some_and(|o| o.0.passed())
}

/// 0 clean, 1 mismatch; 2 for a null handle.
///
/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_exit_code(o: *const AvOutcome) -> i32 {
    o.as_ref().map_or(2, |o| o.0.exit_code())
}

/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_cycles(o: *const AvOutcome) -> u64 {
    o.as_ref().map_or(0, |o| o.0.summary.cycles)
}

/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_transactions(o: *const AvOutcome) -> u64 {
    o.as_ref().map_or(0, |o| o.0.summary.transactions)
}

/// Percentage of coverage bins hit, 0 to 100.
///
/// # Safety
/// `o` must be null or a live outcome.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_coverage_percent(o: *const AvOutcome) -> f64 {
    o.as_ref().map_or(0.0, |o| o.0.coverage.percent())
}

/// Copies the verdict line into `buf`; returns its full length.
///
/// # Safety
/// `o` must be null or a live outcome; `buf` must be null or point to `len`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_verdict(
    o: *const AvOutcome,
    buf: *mut c_char,
    len: usize,
) -> usize {
    match o.as_ref() {
        Some(o) => copy_out(&o.0.verdict(), buf, len),
        None => copy_out("", buf, len),
    }
}

/// # Safety
/// `o` must be null or a live outcome, freed once.
#[no_mangle]
pub unsafe extern "C" fn av_outcome_free(o: *mut AvOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Packs a record into [`AV_REG_PACKED_BYTES`] bytes.
///
/// # Safety
/// `p` must be valid and `out` must point to `AV_REG_PACKED_BYTES` bytes.
#[no_mangle]
pub unsafe extern "C" fn av_reg_pack(p: *const AvRegPacket, out: *mut u8) -> AvStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("p"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if p.req > 1 || p.eop > 1 || p.r_req > 1 {
            return Err(Fail(
                AvStatus::AvErrCodec,
                "flag field is not 0 or 1".into(),
            ));
        }
        let bits = pack_reg(&RegPacket {
            req: p.req != 0,
            eop: p.eop != 0,
            addr: p.addr,
            data: p.data,
            be: p.be,
            r_req: p.r_req != 0,
            r_data: p.r_data,
            r_opc: p.r_opc,
        })?;
        ptr::copy_nonoverlapping(bits.as_bytes().as_ptr(), out, AV_REG_PACKED_BYTES);
        Ok(())
    })
}

/// Unpacks [`AV_REG_PACKED_BYTES`] bytes. Nonzero pad bits are an error.
///
/// # Safety
/// `bytes` must point to `AV_REG_PACKED_BYTES` bytes and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn av_reg_unpack(bytes: *const u8, out: *mut AvRegPacket) -> AvStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let raw = std::slice::from_raw_parts(bytes, AV_REG_PACKED_BYTES).to_vec();
        let p = unpack_reg(&PackedBits::from_bytes(REG_PACKED_WIDTH, raw)?)?;
        *out = AvRegPacket {
            req: p.req as u8,
            eop: p.eop as u8,
            addr: p.addr,
            data: p.data,
            be: p.be,
            r_req: p.r_req as u8,
            r_data: p.r_data,
            r_opc: p.r_opc,
        };
        Ok(())
    })
}
