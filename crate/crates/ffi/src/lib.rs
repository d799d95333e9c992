//! C interface to the fieldpipe engine.
//!
//! All functions return an [`FpStatus`]. On failure the message of the most
//! recent error on the calling thread is available from
//! [`fp_last_error_message`]. Handles are opaque and must be released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fieldpipe::io::{self, InputData};
use fieldpipe::mesh::EntityKind;
use fieldpipe::pipeline::Pipeline;
use fieldpipe::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Xml = 3,
    Validation = 4,
    Mesh = 5,
    Format = 6,
    Io = 7,
    Filter = 8,
    Numeric = 9,
    NotFound = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Where a quantity is stored.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpEntity {
    Node = 0,
    Cell = 1,
}

/// Shape of one quantity in a container.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpQuantityInfo {
    pub defined_on: FpEntity,
    /// 1 or 3.
    pub components: usize,
    /// Non-zero for complex (frequency-domain) data stored as (re, im) pairs.
    pub is_complex: i32,
    /// Doubles per step over all regions of the quantity.
    pub values_per_step: usize,
    /// Number of steps holding data.
    pub num_steps: usize,
}

/// A validated pipeline ready to run.
pub struct FpPipeline {
    inner: Pipeline,
}

/// An opened native container.
pub struct FpContainer {
    data: InputData,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FpStatus {
    match e {
        Error::Xml { .. } => FpStatus::Xml,
        Error::Validation(_) => FpStatus::Validation,
        Error::Mesh(_) => FpStatus::Mesh,
        Error::Format { .. } => FpStatus::Format,
        Error::Io { .. } => FpStatus::Io,
        Error::Filter { .. } => FpStatus::Filter,
        Error::Numeric(_) => FpStatus::Numeric,
    }
}

struct Failure(FpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: FpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, records any error or panic and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            FpStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(FpStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(FpStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(FpStatus::NullArgument, format!("{what} is null")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn fp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates the pipeline document at `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_pipeline_load(path: *const c_char, out: *mut *mut FpPipeline) -> FpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = Pipeline::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FpPipeline { inner }));
        Ok(())
    })
}

/// Number of schedule entries the pipeline will process.
///
/// # Safety
/// `pipeline` must be null or a handle from [`fp_pipeline_load`].
#[no_mangle]
pub unsafe extern "C" fn fp_pipeline_num_steps(pipeline: *const FpPipeline) -> usize {
    pipeline.as_ref().map_or(0, |p| p.inner.num_entries())
}

/// Executes the pipeline with `threads` workers (0 selects the default).
/// A pipeline can be run more than once; each run rewrites its outputs.
///
/// # Safety
/// `pipeline` must be a handle from [`fp_pipeline_load`].
#[no_mangle]
pub unsafe extern "C" fn fp_pipeline_run(pipeline: *mut FpPipeline, threads: usize) -> FpStatus {
    guard(|| {
        let p = pipeline
            .as_mut()
            .ok_or_else(|| fail(FpStatus::NullArgument, "pipeline is null"))?;
        p.inner.run(Some(threads))?;
        Ok(())
    })
}

/// Releases a pipeline handle. Null is ignored.
///
/// # Safety
/// `pipeline` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_pipeline_free(pipeline: *mut FpPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Validates a pipeline document without keeping a handle.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fp_validate(path: *const c_char) -> FpStatus {
    guard(|| {
        Pipeline::load(&path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Writes the geometry of `input` (container or Ensight case) to a new
/// container at `output`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fp_strip_mesh(input: *const c_char, output: *const c_char) -> FpStatus {
    guard(|| {
        io::strip_mesh(&path_arg(input, "input")?, &path_arg(output, "output")?)?;
        Ok(())
    })
}

/// Opens a native container for reading.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_container_open(path: *const c_char, out: *mut *mut FpContainer) -> FpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let data = io::read_native(&path_arg(path, "path")?)?;
        let names = data
            .manifest
            .quantities
            .iter()
            .map(|q| CString::new(q.name.as_str()).map_err(|_| fail(FpStatus::Format, "quantity name contains NUL")))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(FpContainer { data, names }));
        Ok(())
    })
}

/// Releases a container handle. Null is ignored.
///
/// # Safety
/// `container` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fp_container_free(container: *mut FpContainer) {
    if !container.is_null() {
        drop(Box::from_raw(container));
    }
}

/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_container_num_nodes(container: *const FpContainer) -> usize {
    container.as_ref().map_or(0, |c| c.data.mesh.num_nodes())
}

/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_container_num_steps(container: *const FpContainer) -> usize {
    container.as_ref().map_or(0, |c| c.data.manifest.steps.len())
}

/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_container_num_quantities(container: *const FpContainer) -> usize {
    container.as_ref().map_or(0, |c| c.names.len())
}

/// Step index and value of the `position`-th step.
///
/// # Safety
/// `container` must be a live handle; `index` and `value` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fp_container_step(
    container: *const FpContainer,
    position: usize,
    index: *mut usize,
    value: *mut f64,
) -> FpStatus {
    guard(|| {
        let c = handle(container, "container")?;
        let s = c
            .data
            .manifest
            .steps
            .get(position)
            .ok_or_else(|| fail(FpStatus::NotFound, format!("no step at position {position}")))?;
        *out_arg(index, "index")? = s.index;
        *out_arg(value, "value")? = s.value;
        Ok(())
    })
}

/// Name of the `i`-th quantity. The string is owned by the container.
///
/// # Safety
/// `container` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_container_quantity_name(container: *const FpContainer, i: usize) -> *const c_char {
    container
        .as_ref()
        .and_then(|c| c.names.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Shape of quantity `name`.
///
/// # Safety
/// `container` must be a live handle, `name` a NUL-terminated string and
/// `info` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_container_quantity_info(
    container: *const FpContainer,
    name: *const c_char,
    info: *mut FpQuantityInfo,
) -> FpStatus {
    guard(|| {
        let c = handle(container, "container")?;
        let name = str_arg(name, "name")?;
        let q = c
            .data
            .manifest
            .quantity(name)
            .ok_or_else(|| fail(FpStatus::NotFound, format!("no quantity '{name}'")))?;
        let complex = q.value_kind == fieldpipe::mesh::ValueKind::Complex;
        let width = q.components * if complex { 2 } else { 1 };
        *out_arg(info, "info")? = FpQuantityInfo {
            defined_on: match q.defined_on {
                EntityKind::Node => FpEntity::Node,
                EntityKind::Cell => FpEntity::Cell,
            },
            components: q.components,
            is_complex: complex as i32,
            values_per_step: q.regions.iter().map(|r| r.entity_count).sum::<usize>() * width,
            num_steps: q.steps.len(),
        };
        Ok(())
    })
}

/// Copies quantity `name` at step index `step_index` into `buffer`, regions
/// concatenated in the order of the quantity's region list. `written`
/// receives the number of doubles required; if `capacity` is smaller,
/// nothing is copied and the buffer-too-small status is returned.
///
/// # Safety
/// `container` must be a live handle, `name` a NUL-terminated string,
/// `buffer` valid for `capacity` doubles (may be null if `capacity` is 0)
/// and `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_container_read_step(
    container: *const FpContainer,
    name: *const c_char,
    step_index: usize,
    buffer: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> FpStatus {
    guard(|| {
        let c = handle(container, "container")?;
        let name = str_arg(name, "name")?;
        let written = out_arg(written, "written")?;
        *written = 0;
        if c.data.manifest.quantity(name).is_none() {
            return Err(fail(FpStatus::NotFound, format!("no quantity '{name}'")));
        }
        let step = c.data.steps.read_step(name, step_index)?;
        let total: usize = step.values.iter().map(|r| r.data.len()).sum();
        *written = total;
        if capacity < total {
            return Err(fail(
                FpStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, {total} needed"),
            ));
        }
        if buffer.is_null() && total > 0 {
            return Err(fail(FpStatus::NullArgument, "buffer is null"));
        }
        let mut at = 0;
        for r in &step.values {
            ptr::copy_nonoverlapping(r.data.as_ptr(), buffer.add(at), r.data.len());
            at += r.data.len();
        }
        Ok(())
    })
}
