//! C ABI over the pdnflow pipeline.
//!
//! Conventions: every fallible call returns a [`PdnStatus`] and writes
//! its result through an out-pointer. Handles are opaque and must be
//! released with their matching `_free` function. On any non-OK status
//! a thread-local message is retrievable via `pdn_last_error_message`.

use pdnflow::layout::{self, GenSpec, StripLayout};
use pdnflow::model::{ModelConfig, ModelParams};
use pdnflow::oracle::{simulate_dynamic, IrDropMap};
use pdnflow::pdngraph::{build_graph, tile_grid};
use pdnflow::train::Sample;
use pdnflow::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdnStatus {
    PdnOk = 0,
    PdnInvalidArgument = 1,
    PdnParseError = 2,
    PdnValidationError = 3,
    PdnSolveError = 4,
    PdnIoError = 5,
    PdnInternalError = 6,
}

/// Opaque layout handle.
pub struct PdnLayout {
    inner: layout::Layout,
}

/// Opaque voltage-drop map handle (row-major, row 0 at y = 0).
pub struct PdnIrMap {
    inner: IrDropMap,
}

/// Opaque PDN graph handle.
pub struct PdnGraph {
    inner: pdnflow::pdngraph::PdnGraph,
}

/// Opaque trained-model handle.
pub struct PdnModel {
    config: ModelConfig,
    params: ModelParams,
}

/// Generator request mirrored across the ABI. When `strip_pitch_um`
/// is positive it wins; otherwise `strips`/`n_strips` supply explicit
/// strip x positions.
#[repr(C)]
pub struct PdnGenSpec {
    pub width_um: f64,
    pub height_um: f64,
    pub n_cells: usize,
    pub strip_pitch_um: f64,
    pub strips: *const f64,
    pub n_strips: usize,
    pub power_scale_w: f64,
    pub t_sim: usize,
    pub rng_seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> PdnStatus {
    match err {
        Error::Parse { .. } => PdnStatus::PdnParseError,
        Error::Invalid(_) => PdnStatus::PdnValidationError,
        Error::NoConverge { .. } => PdnStatus::PdnSolveError,
        Error::Shape(_) => PdnStatus::PdnInvalidArgument,
        Error::NanLoss { .. } => PdnStatus::PdnInternalError,
        Error::Format { .. } | Error::Io(_) => PdnStatus::PdnIoError,
    }
}

fn fail(err: Error) -> PdnStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn guard<F: FnOnce() -> PdnStatus>(body: F) -> PdnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PdnStatus::PdnInternalError
        }
    }
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pdn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Version tag of the checkpoint container format.
#[no_mangle]
pub extern "C" fn pdn_checkpoint_format_version() -> *const c_char {
    c"PDNF1".as_ptr()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a pdnflow function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn pdn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- layout ------------------------------------------------------------

/// Parse a layout file's contents.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn pdn_layout_parse(
    text: *const c_char,
    out: *mut *mut PdnLayout,
) -> PdnStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let text = match unsafe { CStr::from_ptr(text) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("layout text is not valid UTF-8");
                return PdnStatus::PdnInvalidArgument;
            }
        };
        match layout::parse_layout(text) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(PdnLayout { inner })) };
                PdnStatus::PdnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Generate a synthetic layout from `spec`.
///
/// # Safety
/// `spec` and `out` must be valid pointers; when `strip_pitch_um <= 0`,
/// `strips` must point to `n_strips` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pdn_layout_generate(
    spec: *const PdnGenSpec,
    out: *mut *mut PdnLayout,
) -> PdnStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let spec = unsafe { &*spec };
        let strips = if spec.strip_pitch_um > 0.0 {
            StripLayout::Pitch(spec.strip_pitch_um)
        } else {
            if spec.strips.is_null() || spec.n_strips == 0 {
                set_error("explicit strip list required when pitch is not positive");
                return PdnStatus::PdnInvalidArgument;
            }
            let xs = unsafe { std::slice::from_raw_parts(spec.strips, spec.n_strips) };
            StripLayout::Explicit(xs.to_vec())
        };
        let gen_spec = GenSpec {
            width_um: spec.width_um,
            height_um: spec.height_um,
            n_cells: spec.n_cells,
            strips,
            power_scale_w: spec.power_scale_w,
            t_sim: spec.t_sim,
            rng_seed: spec.rng_seed,
        };
        match layout::generate_synthetic(&gen_spec) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(PdnLayout { inner })) };
                PdnStatus::PdnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Serialize a layout to its canonical text form. The returned string
/// must be released with `pdn_string_free`.
///
/// # Safety
/// `layout` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pdn_layout_serialize(
    layout: *const PdnLayout,
    out: *mut *mut c_char,
) -> PdnStatus {
    guard(|| {
        if layout.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let text = layout::serialize(unsafe { &(*layout).inner });
        match CString::new(text) {
            Ok(c) => {
                unsafe { *out = c.into_raw() };
                PdnStatus::PdnOk
            }
            Err(_) => {
                set_error("serialized layout contained an interior NUL");
                PdnStatus::PdnInternalError
            }
        }
    })
}

/// Number of placed cells.
///
/// # Safety
/// `layout` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdn_layout_cell_count(layout: *const PdnLayout) -> usize {
    if layout.is_null() {
        return 0;
    }
    unsafe { &*layout }.inner.cells.len()
}

/// # Safety
/// `layout` must be a live handle or null; double free is undefined.
#[no_mangle]
pub unsafe extern "C" fn pdn_layout_free(layout: *mut PdnLayout) {
    if !layout.is_null() {
        drop(unsafe { Box::from_raw(layout) });
    }
}

// ---- oracle --------------------------------------------------------------

/// Solve the dynamic IR drop for `layout` on a dx-by-dy tile grid and
/// return the peak-over-frames map.
///
/// # Safety
/// `layout` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pdn_simulate_peak(
    layout: *const PdnLayout,
    dx_um: f64,
    dy_um: f64,
    out: *mut *mut PdnIrMap,
) -> PdnStatus {
    guard(|| {
        if layout.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let layout = unsafe { &(*layout).inner };
        let result = tile_grid(layout, dx_um, dy_um)
            .and_then(|grid| simulate_dynamic(layout, &grid).map(|(_, peak)| peak));
        match result {
            Ok(peak) => {
                unsafe { *out = Box::into_raw(Box::new(PdnIrMap { inner: peak })) };
                PdnStatus::PdnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdn_irmap_rows(map: *const PdnIrMap) -> usize {
    if map.is_null() {
        return 0;
    }
    unsafe { &*map }.inner.n_h
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdn_irmap_cols(map: *const PdnIrMap) -> usize {
    if map.is_null() {
        return 0;
    }
    unsafe { &*map }.inner.n_w
}

/// Copy the row-major drop values (volts) into `buf`.
///
/// # Safety
/// `map` must be a live handle and `buf` must point to `len` writable
/// doubles with `len` = rows * cols.
#[no_mangle]
pub unsafe extern "C" fn pdn_irmap_copy(
    map: *const PdnIrMap,
    buf: *mut f64,
    len: usize,
) -> PdnStatus {
    guard(|| {
        if map.is_null() || buf.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let values = &unsafe { &*map }.inner.drop_v;
        if len != values.len() {
            set_error("buffer length does not match map size");
            return PdnStatus::PdnInvalidArgument;
        }
        unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, len) };
        PdnStatus::PdnOk
    })
}

/// # Safety
/// `map` must be a live handle or null; double free is undefined.
#[no_mangle]
pub unsafe extern "C" fn pdn_irmap_free(map: *mut PdnIrMap) {
    if !map.is_null() {
        drop(unsafe { Box::from_raw(map) });
    }
}

// ---- graph -----------------------------------------------------------------

/// Build the directed PDN graph for `layout` on a dx-by-dy tile grid.
///
/// # Safety
/// `layout` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_build(
    layout: *const PdnLayout,
    dx_um: f64,
    dy_um: f64,
    out: *mut *mut PdnGraph,
) -> PdnStatus {
    guard(|| {
        if layout.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let layout = unsafe { &(*layout).inner };
        match tile_grid(layout, dx_um, dy_um) {
            Ok(grid) => {
                let inner = build_graph(&grid, layout);
                unsafe { *out = Box::into_raw(Box::new(PdnGraph { inner })) };
                PdnStatus::PdnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_num_nodes(graph: *const PdnGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    unsafe { &*graph }.inner.n_nodes()
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_num_edges(graph: *const PdnGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    unsafe { &*graph }.inner.edges.len()
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_num_channels(graph: *const PdnGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    unsafe { &*graph }.inner.n_channels
}

/// Copy the row-major node-feature matrix (num_nodes * num_channels).
///
/// # Safety
/// `graph` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_copy_features(
    graph: *const PdnGraph,
    buf: *mut f64,
    len: usize,
) -> PdnStatus {
    guard(|| {
        if graph.is_null() || buf.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let features = &unsafe { &*graph }.inner.features;
        if len != features.len() {
            set_error("buffer length does not match feature matrix");
            return PdnStatus::PdnInvalidArgument;
        }
        unsafe { ptr::copy_nonoverlapping(features.as_ptr(), buf, len) };
        PdnStatus::PdnOk
    })
}

/// Copy directed edges as (src, dst) pairs; `len` counts u32 slots and
/// must equal 2 * num_edges.
///
/// # Safety
/// `graph` must be a live handle; `buf` must hold `len` u32 values.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_copy_edges(
    graph: *const PdnGraph,
    buf: *mut u32,
    len: usize,
) -> PdnStatus {
    guard(|| {
        if graph.is_null() || buf.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let edges = &unsafe { &*graph }.inner.edges;
        if len != edges.len() * 2 {
            set_error("buffer length must be 2 * num_edges");
            return PdnStatus::PdnInvalidArgument;
        }
        for (i, &(s, d)) in edges.iter().enumerate() {
            unsafe {
                *buf.add(2 * i) = s as u32;
                *buf.add(2 * i + 1) = d as u32;
            }
        }
        PdnStatus::PdnOk
    })
}

/// # Safety
/// `graph` must be a live handle or null; double free is undefined.
#[no_mangle]
pub unsafe extern "C" fn pdn_graph_free(graph: *mut PdnGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

// ---- model -----------------------------------------------------------------

/// Load a trained checkpoint (PDNF1 container).
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pdn_model_load(
    path: *const c_char,
    out: *mut *mut PdnModel,
) -> PdnStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(_) => {
                set_error("path is not valid UTF-8");
                return PdnStatus::PdnInvalidArgument;
            }
        };
        let result = pdnflow::autodiff::load_checkpoint(std::path::Path::new(path))
            .and_then(|entries| ModelParams::from_checkpoint(&entries));
        match result {
            Ok((config, params)) => {
                unsafe { *out = Box::into_raw(Box::new(PdnModel { config, params })) };
                PdnStatus::PdnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Predict the normalized IR drop map for a layout. The result map has
/// the tile-grid shape and unitless [0,1]-scale values.
///
/// # Safety
/// `model` and `layout` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pdn_model_predict(
    model: *const PdnModel,
    layout: *const PdnLayout,
    dx_um: f64,
    dy_um: f64,
    out: *mut *mut PdnIrMap,
) -> PdnStatus {
    guard(|| {
        if model.is_null() || layout.is_null() || out.is_null() {
            set_error("null pointer argument");
            return PdnStatus::PdnInvalidArgument;
        }
        let model = unsafe { &*model };
        let layout = unsafe { &(*layout).inner };
        let result = (|| {
            let grid = tile_grid(layout, dx_um, dy_um)?;
            let graph = build_graph(&grid, layout);
            let n = graph.n_nodes();
            let (n_h, n_w) = (graph.n_h, graph.n_w);
            let sample = Sample::from_parts("ffi".into(), graph, grid, &vec![0.0; n])?;
            let pred = pdnflow::train::predict(&model.params, &model.config, &sample)?;
            Ok::<IrDropMap, Error>(IrDropMap {
                n_h,
                n_w,
                drop_v: pred,
                frame: pdnflow::oracle::FrameTag::Peak,
            })
        })();
        match result {
            Ok(map) => {
                unsafe { *out = Box::into_raw(Box::new(PdnIrMap { inner: map })) };
                PdnStatus::PdnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be a live handle or null; double free is undefined.
#[no_mangle]
pub unsafe extern "C" fn pdn_model_free(model: *mut PdnModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
