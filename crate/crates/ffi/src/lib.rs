//! C ABI over `coreset-core`.
//!
//! Objects are opaque heap handles created by `*_new`/`*_build` style calls
//! and released with the matching `*_free`. Every fallible call returns a
//! [`CsStatus`]; on failure the message is kept per thread and can be copied
//! out with [`cs_last_error_message`]. Outputs are written through pointers
//! only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coreset_core::assignment::optimal_assignment;
use coreset_core::constraints::{ConstraintFamily, ConstraintSpec};
use coreset_core::coreset::{build_movement_coreset, merge, verify_certificate, Coreset};
use coreset_core::geometry::{CenterSet, MetricConfig, Point, PointSet, WeightedColoredPoint};
use coreset_core::solver::{solve_with_transfer, Ingestion, SolveOptions};
use coreset_core::stream::{StreamConfig, StreamState};
use coreset_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    CapExceeded = 4,
    Parse = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

pub struct CsPointSet {
    inner: PointSet,
}

pub struct CsCoreset {
    inner: Coreset,
}

pub struct CsStream {
    inner: StreamState,
}

pub struct CsFamily {
    inner: ConstraintFamily,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::Infeasible(_) => CsStatus::Infeasible,
        Error::CapExceeded { .. } => CsStatus::CapExceeded,
        Error::Parse { .. } => CsStatus::Parse,
        Error::Io(_) => CsStatus::Io,
        _ => CsStatus::InvalidArgument,
    }
}

struct Null;

enum Failure {
    Null,
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<Null> for Failure {
    fn from(_: Null) -> Self {
        Failure::Null
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(Failure::Null)) => {
            set_error("null pointer argument".into());
            CsStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal error".into());
            CsStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Null> {
    // SAFETY: caller passes a handle from this library or null.
    unsafe { p.as_ref() }.ok_or(Null)
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Null> {
    // SAFETY: as above, with exclusive access.
    unsafe { p.as_mut() }.ok_or(Null)
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Null> {
    if p.is_null() {
        return Err(Null);
    }
    // SAFETY: caller guarantees `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Null> {
    if out.is_null() {
        return Err(Null);
    }
    // SAFETY: non-null, caller guarantees it is writable.
    unsafe { out.write(value) };
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `boxed` and is freed once.
        drop(unsafe { Box::from_raw(p) });
    }
}

unsafe fn centers_from(coords: *const f64, count: usize, dim: usize) -> Result<CenterSet, Failure> {
    let flat = unsafe { slice(coords, count * dim)? };
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()).into());
    }
    let pts = flat
        .chunks(dim)
        .map(|c| Point::new(c.to_vec()))
        .collect::<coreset_core::Result<Vec<_>>>()?;
    Ok(CenterSet::new(pts)?)
}

fn entry(coords: &[f64], color: u32, weight: u64) -> Result<WeightedColoredPoint, Failure> {
    Ok(WeightedColoredPoint::new(Point::new(coords.to_vec())?, weight, color))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: `buf` has room for `len` bytes.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty point set of dimension `dim`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_pointset_new(dim: usize, out: *mut *mut CsPointSet) -> CsStatus {
    guard(|| {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()).into());
        }
        unsafe { write(out, boxed(CsPointSet { inner: PointSet::new(dim) }))? };
        Ok(())
    })
}

/// Appends one point with `dim` coordinates, a color and a positive weight.
///
/// # Safety
/// `set` must be a live handle and `coords` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_pointset_push(
    set: *mut CsPointSet,
    coords: *const f64,
    dim: usize,
    color: u32,
    weight: u64,
) -> CsStatus {
    guard(|| {
        let set = unsafe { deref_mut(set)? };
        let e = entry(unsafe { slice(coords, dim)? }, color, weight)?;
        set.inner.push(e)?;
        Ok(())
    })
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_pointset_len(set: *const CsPointSet) -> usize {
    unsafe { set.as_ref() }.map_or(0, |s| s.inner.len())
}

/// # Safety
/// `set` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_pointset_free(set: *mut CsPointSet) {
    unsafe { release(set) }
}

/// Builds a certified movement coreset. `m` is 1 (k-median) or 2 (k-means).
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_build(
    set: *const CsPointSet,
    k: usize,
    eps: f64,
    m: u32,
    seed: u64,
    out: *mut *mut CsCoreset,
) -> CsStatus {
    guard(|| {
        let set = unsafe { deref(set)? };
        let c = build_movement_coreset(&set.inner, k, eps, MetricConfig::new(m)?, seed)?;
        unsafe { write(out, boxed(CsCoreset { inner: c }))? };
        Ok(())
    })
}

/// Number of weighted entries, or 0 for a null handle.
///
/// # Safety
/// `coreset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_len(coreset: *const CsCoreset) -> usize {
    unsafe { coreset.as_ref() }.map_or(0, |c| c.inner.len())
}

/// Copies entry `index`: `dim` coordinates, its color and its weight.
///
/// # Safety
/// `coreset` must be a live handle, `coords` must have room for `dim`
/// doubles, `color` and `weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_entry(
    coreset: *const CsCoreset,
    index: usize,
    coords: *mut f64,
    dim: usize,
    color: *mut u32,
    weight: *mut u64,
) -> CsStatus {
    guard(|| {
        let c = unsafe { deref(coreset)? };
        let e = c
            .inner
            .points
            .entries()
            .get(index)
            .ok_or_else(|| Error::InvalidParameter(format!("entry {index} out of range")))?;
        if dim != e.point.dim() {
            return Err(Error::DimensionMismatch {
                expected: e.point.dim(),
                got: dim,
            }
            .into());
        }
        if coords.is_null() {
            return Err(Null.into());
        }
        // SAFETY: room for `dim` doubles.
        unsafe { ptr::copy_nonoverlapping(e.point.coords().as_ptr(), coords, dim) };
        unsafe {
            write(color, e.color)?;
            write(weight, e.weight)?;
        }
        Ok(())
    })
}

/// Checks the coreset's movement certificate against the original points;
/// `ok` receives 1 when every check passes.
///
/// # Safety
/// Both handles must be live and `ok` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_verify(set: *const CsPointSet, coreset: *const CsCoreset, ok: *mut i32) -> CsStatus {
    guard(|| {
        let (set, c) = unsafe { (deref(set)?, deref(coreset)?) };
        let v = verify_certificate(&set.inner, &c.inner)?;
        unsafe { write(ok, i32::from(v.ok()))? };
        Ok(())
    })
}

/// Union of two coresets with summed certificates.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_merge(a: *const CsCoreset, b: *const CsCoreset, out: *mut *mut CsCoreset) -> CsStatus {
    guard(|| {
        let (a, b) = unsafe { (deref(a)?, deref(b)?) };
        let c = merge(&a.inner, &b.inner)?;
        unsafe { write(out, boxed(CsCoreset { inner: c }))? };
        Ok(())
    })
}

/// # Safety
/// `coreset` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_free(coreset: *mut CsCoreset) {
    unsafe { release(coreset) }
}

/// Starts a merge-and-reduce stream.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_stream_new(
    block: usize,
    k: usize,
    eps: f64,
    m: u32,
    seed: u64,
    out: *mut *mut CsStream,
) -> CsStatus {
    guard(|| {
        let config = StreamConfig::new(block, k, eps, MetricConfig::new(m)?, seed)?;
        unsafe { write(out, boxed(CsStream { inner: StreamState::new(config) }))? };
        Ok(())
    })
}

/// Feeds one point to the stream.
///
/// # Safety
/// `stream` must be a live handle and `coords` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_stream_push(
    stream: *mut CsStream,
    coords: *const f64,
    dim: usize,
    color: u32,
    weight: u64,
) -> CsStatus {
    guard(|| {
        let s = unsafe { deref_mut(stream)? };
        let e = entry(unsafe { slice(coords, dim)? }, color, weight)?;
        s.inner.push(e)?;
        Ok(())
    })
}

/// Summary of everything pushed so far; the stream keeps running.
///
/// # Safety
/// `stream` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_stream_snapshot(stream: *const CsStream, out: *mut *mut CsCoreset) -> CsStatus {
    guard(|| {
        let s = unsafe { deref(stream)? };
        let c = s.inner.snapshot()?;
        unsafe { write(out, boxed(CsCoreset { inner: c }))? };
        Ok(())
    })
}

/// # Safety
/// `stream` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_stream_free(stream: *mut CsStream) {
    unsafe { release(stream) }
}

/// Parses a constraint description such as `kind=lower_bounds; bounds=4,4`
/// and binds it to `k` regular clusters and the points in `set`. Link
/// constraints recolor `set` in place.
///
/// # Safety
/// `spec` must be a NUL-terminated string, `set` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_family_parse(
    spec: *const c_char,
    k: usize,
    set: *mut CsPointSet,
    out: *mut *mut CsFamily,
) -> CsStatus {
    guard(|| {
        if spec.is_null() {
            return Err(Null.into());
        }
        // SAFETY: NUL-terminated per contract.
        let text = unsafe { CStr::from_ptr(spec) }
            .to_str()
            .map_err(|_| Error::InvalidParameter("constraint text is not UTF-8".into()))?;
        let set = unsafe { deref_mut(set)? };
        let (points, family) = text.parse::<ConstraintSpec>()?.instantiate(k, &set.inner)?;
        set.inner = points;
        unsafe { write(out, boxed(CsFamily { inner: family }))? };
        Ok(())
    })
}

/// Number of centers the family expects, outlier slots included.
///
/// # Safety
/// `family` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_family_clusters(family: *const CsFamily) -> usize {
    unsafe { family.as_ref() }.map_or(0, |f| f.inner.clusters())
}

/// # Safety
/// `family` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_family_free(family: *mut CsFamily) {
    unsafe { release(family) }
}

fn family_or_unconstrained(family: Option<&CsFamily>, points: &PointSet, k: usize) -> coreset_core::Result<ConstraintFamily> {
    match family {
        Some(f) => Ok(f.inner.clone()),
        None => ConstraintFamily::unconstrained(k, points.color_masses()),
    }
}

unsafe fn evaluate(
    points: &PointSet,
    family: *const CsFamily,
    centers: *const f64,
    count: usize,
    dim: usize,
    m: u32,
    cost: *mut f64,
) -> Result<(), Failure> {
    let centers = unsafe { centers_from(centers, count, dim)? };
    let family = family_or_unconstrained(unsafe { family.as_ref() }, points, count)?;
    let centers = family.pad_centers(&centers)?;
    let a = optimal_assignment(points, &centers, &family, MetricConfig::new(m)?)?;
    unsafe { write(cost, a.objective)? };
    Ok(())
}

/// Optimal constrained cost of `count` centers (row-major, `dim` each) on
/// the points. A null `family` means unconstrained; for outlier families
/// only the regular centers are passed.
///
/// # Safety
/// `set` must be live, `family` null or live, `centers` must hold
/// `count * dim` doubles and `cost` be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_eval(
    set: *const CsPointSet,
    family: *const CsFamily,
    centers: *const f64,
    count: usize,
    dim: usize,
    m: u32,
    cost: *mut f64,
) -> CsStatus {
    guard(|| unsafe { evaluate(&deref(set)?.inner, family, centers, count, dim, m, cost) })
}

/// As [`cs_eval`], on a coreset's weighted entries.
///
/// # Safety
/// As [`cs_eval`].
#[no_mangle]
pub unsafe extern "C" fn cs_coreset_eval(
    coreset: *const CsCoreset,
    family: *const CsFamily,
    centers: *const f64,
    count: usize,
    dim: usize,
    m: u32,
    cost: *mut f64,
) -> CsStatus {
    guard(|| unsafe { evaluate(&deref(coreset)?.inner.points, family, centers, count, dim, m, cost) })
}

/// Summarizes the points at `eps / 3`, solves the summary and evaluates the
/// result on the points. `centers_out` receives `clusters * dim` doubles
/// where `clusters` is [`cs_family_clusters`] (or `k` for a null family);
/// `capacity` is its length in doubles.
///
/// # Safety
/// `set` live, `family` null or live, `centers_out` holds `capacity`
/// doubles, `cost` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cs_solve(
    set: *const CsPointSet,
    family: *const CsFamily,
    k: usize,
    eps: f64,
    m: u32,
    seed: u64,
    centers_out: *mut f64,
    capacity: usize,
    cost: *mut f64,
) -> CsStatus {
    guard(|| {
        let set = unsafe { deref(set)? };
        let family = family_or_unconstrained(unsafe { family.as_ref() }, &set.inner, k)?;
        let r = solve_with_transfer(
            &set.inner,
            &family,
            eps,
            MetricConfig::new(m)?,
            Ingestion::Offline,
            seed,
            &SolveOptions::default(),
        )?;
        let flat: Vec<f64> = r.centers.iter().flat_map(|c| c.coords().iter().copied()).collect();
        if flat.len() > capacity {
            return Err(Error::InvalidParameter(format!("centers need {} doubles, capacity is {capacity}", flat.len())).into());
        }
        if centers_out.is_null() {
            return Err(Null.into());
        }
        // SAFETY: capacity checked above.
        unsafe { ptr::copy_nonoverlapping(flat.as_ptr(), centers_out, flat.len()) };
        unsafe { write(cost, r.original_cost.unwrap_or(r.coreset_cost))? };
        Ok(())
    })
}
