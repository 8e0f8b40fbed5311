//! C interface to the adagraph engine.
//!
//! Every function returns an [`AgStatus`]; on failure the message is kept per
//! thread and read with [`ag_last_error`]. Handles are opaque and owned by the
//! caller until passed to the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use adagraph::algorithms::{bfs, pagerank, Algorithm, ExecContext, PageRankParams};
use adagraph::contention::{predict_latency, MachineModel};
use adagraph::graph::{generate_rmat, Graph, RmatParams};
use adagraph::harness::Dataset;
use adagraph::scheduler::SharedPool;
use adagraph::Error;

/// A loaded graph.
pub struct AgGraph {
    graph: Graph,
}

/// A calibrated machine profile.
pub struct AgMachine {
    model: MachineModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfRange = 5,
    MissingProfile = 6,
    Precondition = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgMode {
    Sequential = 0,
    /// Fixed degree of parallelism for every iteration.
    Simple = 1,
    /// Cost-model driven; needs a machine profile.
    Scheduler = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgPageRankVariant {
    Push = 0,
    Pull = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgGraphStats {
    pub vertex_count: u64,
    pub edge_count: u64,
    pub reachable_count: u64,
    pub max_out_degree: u64,
    pub mean_out_degree: f64,
}

/// Execution settings shared by the algorithm entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AgExecOptions {
    pub mode: AgMode,
    /// Hardware threads for the query; 0 means all.
    pub threads: u32,
    /// Required for `AG_MODE_SCHEDULER`, ignored otherwise.
    pub machine: *const AgMachine,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgPageRankParams {
    pub damping: f64,
    pub epsilon: f64,
    pub max_iterations: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn status_of(error: &Error) -> AgStatus {
    match error {
        Error::Parse { .. } | Error::EmptyInput | Error::Profile { .. } | Error::Csv(_) => {
            AgStatus::Parse
        }
        Error::VertexOutOfRange { .. } | Error::BeyondMainMemory { .. } => AgStatus::OutOfRange,
        Error::InvalidParameter(_) | Error::Overflow(_) | Error::TooManyThreads { .. } => {
            AgStatus::InvalidArgument
        }
        Error::Precondition(_) => AgStatus::Precondition,
        Error::MissingProfile(_) => AgStatus::MissingProfile,
        Error::Io(_) => AgStatus::Io,
    }
}

fn fail(status: AgStatus, message: impl Into<String>) -> AgStatus {
    set_error(message.into());
    status
}

/// Runs `body`, mapping library errors and panics to status codes.
fn guard(body: impl FnOnce() -> Result<(), AgStatus>) -> AgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AgStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(AgStatus::Panic, "internal panic"),
    }
}

fn lib<T>(result: adagraph::Result<T>) -> Result<T, AgStatus> {
    result.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, AgStatus> {
    if path.is_null() {
        return Err(fail(AgStatus::NullPointer, "path is null"));
    }
    let text = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail(AgStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(Path::new(text))
}

unsafe fn out_arg<'a, T>(out: *mut T) -> Result<&'a mut T, AgStatus> {
    out.as_mut()
        .ok_or_else(|| fail(AgStatus::NullPointer, "output pointer is null"))
}

unsafe fn graph_arg<'a>(graph: *const AgGraph) -> Result<&'a Graph, AgStatus> {
    graph
        .as_ref()
        .map(|g| &g.graph)
        .ok_or_else(|| fail(AgStatus::NullPointer, "graph is null"))
}

unsafe fn output_slice<'a, T>(
    buffer: *mut T,
    capacity: usize,
    needed: usize,
) -> Result<&'a mut [T], AgStatus> {
    if buffer.is_null() {
        return Err(fail(AgStatus::NullPointer, "output buffer is null"));
    }
    if capacity < needed {
        return Err(fail(
            AgStatus::BufferTooSmall,
            format!("output buffer holds {capacity} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(buffer, needed))
}

fn into_handle<T>(value: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a whitespace-separated edge list (`#` starts a comment).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_graph_load(path: *const c_char, out: *mut *mut AgGraph) -> AgStatus {
    guard(|| {
        let out = out_arg(out)?;
        let path = path_arg(path)?;
        let graph = lib(Dataset::File(path.to_path_buf()).load())?;
        into_handle(AgGraph { graph }, out);
        Ok(())
    })
}

/// Generates an RMAT graph with `2^scale` vertices.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_graph_rmat(
    scale: u32,
    edge_factor: f64,
    seed: u64,
    out: *mut *mut AgGraph,
) -> AgStatus {
    guard(|| {
        let out = out_arg(out)?;
        let graph = lib(generate_rmat(&RmatParams::new(scale, edge_factor, seed)))?;
        into_handle(AgGraph { graph }, out);
        Ok(())
    })
}

/// # Safety
/// `graph` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ag_graph_free(graph: *mut AgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_graph_stats(graph: *const AgGraph, out: *mut AgGraphStats) -> AgStatus {
    guard(|| {
        let graph = graph_arg(graph)?;
        let out = out_arg(out)?;
        let s = graph.stats();
        *out = AgGraphStats {
            vertex_count: s.vertex_count as u64,
            edge_count: s.edge_count as u64,
            reachable_count: s.reachable_count as u64,
            max_out_degree: s.max_out_degree as u64,
            mean_out_degree: s.mean_out_degree,
        };
        Ok(())
    })
}

/// Loads a machine profile written by `adagraph calibrate`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_machine_load(
    path: *const c_char,
    out: *mut *mut AgMachine,
) -> AgStatus {
    guard(|| {
        let out = out_arg(out)?;
        let path = path_arg(path)?;
        let model = lib(MachineModel::load(path))?;
        into_handle(AgMachine { model }, out);
        Ok(())
    })
}

/// # Safety
/// `machine` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ag_machine_free(machine: *mut AgMachine) {
    if !machine.is_null() {
        drop(Box::from_raw(machine));
    }
}

/// Predicted atomic update latency in nanoseconds for `bytes` of touched
/// memory shared by `threads` threads.
///
/// # Safety
/// `machine` must be a live handle and `out_ns` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_machine_predict_latency(
    machine: *const AgMachine,
    bytes: u64,
    threads: u32,
    out_ns: *mut f64,
) -> AgStatus {
    guard(|| {
        let machine = machine
            .as_ref()
            .ok_or_else(|| fail(AgStatus::NullPointer, "machine is null"))?;
        let out = out_arg(out_ns)?;
        *out = lib(predict_latency(
            &machine.model.table,
            bytes,
            threads as usize,
            &machine.model.options,
        ))?;
        Ok(())
    })
}

fn hardware_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Builds the execution context for `options` and hands it to `body`.
unsafe fn with_context<R>(
    options: &AgExecOptions,
    body: impl FnOnce(&ExecContext) -> Result<R, AgStatus>,
) -> Result<R, AgStatus> {
    let threads = match options.threads as usize {
        0 => hardware_threads(),
        t => t,
    };
    match options.mode {
        AgMode::Sequential => body(&ExecContext::sequential()),
        AgMode::Simple => body(&ExecContext::simple(threads)),
        AgMode::Scheduler => {
            let machine = options.machine.as_ref().ok_or_else(|| {
                fail(
                    AgStatus::MissingProfile,
                    "scheduler mode needs a machine profile",
                )
            })?;
            let pool = SharedPool::new(threads);
            let _session = pool.enter_session();
            let mut ctx = ExecContext::scheduler(&machine.model, &pool, threads);
            ctx.cost.max_threads = threads;
            body(&ctx)
        }
    }
}

/// Breadth-first search from `source`. Writes one level per vertex into
/// `levels` (`UINT32_MAX` for unreached vertices); `capacity` must be at
/// least the vertex count.
///
/// # Safety
/// `graph` must be a live handle, `options` valid, and `levels` must point to
/// `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn ag_bfs(
    graph: *const AgGraph,
    source: u32,
    options: *const AgExecOptions,
    levels: *mut u32,
    capacity: usize,
) -> AgStatus {
    guard(|| {
        let graph = graph_arg(graph)?;
        let options = options
            .as_ref()
            .ok_or_else(|| fail(AgStatus::NullPointer, "options are null"))?;
        let out = output_slice(levels, capacity, graph.vertex_count())?;
        let result = with_context(options, |ctx| lib(bfs(graph, source, ctx)))?;
        out.copy_from_slice(&result.levels);
        Ok(())
    })
}

/// Default PageRank parameters.
#[no_mangle]
pub extern "C" fn ag_pagerank_default_params() -> AgPageRankParams {
    let p = PageRankParams::default();
    AgPageRankParams {
        damping: p.damping,
        epsilon: p.epsilon,
        max_iterations: p.max_iterations as u32,
    }
}

/// PageRank. Writes one rank per vertex into `ranks`; `iterations` may be
/// NULL.
///
/// # Safety
/// `graph` must be a live handle, `params` and `options` valid, and `ranks`
/// must point to `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn ag_pagerank(
    graph: *const AgGraph,
    variant: AgPageRankVariant,
    params: *const AgPageRankParams,
    options: *const AgExecOptions,
    ranks: *mut f64,
    capacity: usize,
    iterations: *mut u32,
) -> AgStatus {
    guard(|| {
        let graph = graph_arg(graph)?;
        let params = params
            .as_ref()
            .ok_or_else(|| fail(AgStatus::NullPointer, "params are null"))?;
        let options = options
            .as_ref()
            .ok_or_else(|| fail(AgStatus::NullPointer, "options are null"))?;
        let out = output_slice(ranks, capacity, graph.vertex_count())?;
        let params = PageRankParams {
            damping: params.damping,
            epsilon: params.epsilon,
            max_iterations: params.max_iterations as usize,
        };
        let algorithm = match variant {
            AgPageRankVariant::Push => Algorithm::PrPush,
            AgPageRankVariant::Pull => Algorithm::PrPull,
        };
        let result = with_context(options, |ctx| lib(pagerank(graph, algorithm, &params, ctx)))?;
        out.copy_from_slice(&result.ranks);
        if let Some(it) = iterations.as_mut() {
            *it = result.iterations as u32;
        }
        Ok(())
    })
}
