//! C ABI over the socioscope core.
//!
//! Every fallible function returns an [`SsStatus`]. On failure the message is
//! kept per thread and read back with [`ss_last_error`]. Graphs live behind the
//! opaque [`SsGraph`] handle and are released with [`ss_graph_free`]. Panics
//! never cross the boundary; they surface as [`SsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use socioscope::catnet::louvain;
use socioscope::graph::SocialGraph;
use socioscope::nullmodel::{rewire, RewirePlan};
use socioscope::socio::{hill_estimate, lorenz_gini_sorted, partition_classes, AmpTable};
use socioscope::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientData = 3,
    Io = 4,
    Parse = 5,
    Infeasible = 6,
    Internal = 7,
    Panic = 8,
}

/// Undirected simple graph on nodes `0..node_count`.
pub struct SsGraph {
    inner: SocialGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> SsStatus {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) | Error::EmptyClass { .. } => SsStatus::InvalidArgument,
        Error::InsufficientData(_) => SsStatus::InsufficientData,
        Error::Io { .. } | Error::MissingInput(_) => SsStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => SsStatus::Parse,
        Error::Infeasible(_) => SsStatus::Infeasible,
        _ => SsStatus::Internal,
    }
}

struct Failure(SsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SsStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SsStatus::Panic
        }
    }
}

/// Borrows `len` elements at `data`; a null pointer is accepted only when `len` is 0.
unsafe fn input<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure(SsStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn output<'a, T>(data: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(Failure(SsStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(slice::from_raw_parts_mut(data, len))
}

fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure(SsStatus::NullPointer, format!("`{name}` is null")))
}

fn graph_ref<'a>(g: *const SsGraph) -> Result<&'a SsGraph, Failure> {
    unsafe { g.as_ref() }.ok_or_else(|| Failure(SsStatus::NullPointer, "graph handle is null".into()))
}

fn checked_values(values: &[f64], name: &str) -> Result<(), Failure> {
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(i) => Err(invalid(format!(
            "{name}[{i}] = {} is not a finite non-negative number",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn amp_table(values: &[f64]) -> AmpTable {
    let width = values.len().max(1).to_string().len();
    AmpTable::from_values(values.iter().enumerate().map(|(i, &v)| (format!("{i:0width$}"), v)))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a graph on `node_count` nodes from `edge_count` pairs `(src[i], dst[i])`.
/// Self-loops and repeated pairs are dropped. The handle in `out` must be
/// released with `ss_graph_free`.
///
/// # Safety
/// `src` and `dst` must point to `edge_count` readable elements and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_new(
    node_count: usize,
    src: *const u32,
    dst: *const u32,
    edge_count: usize,
    out: *mut *mut SsGraph,
) -> SsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let (src, dst) = (input(src, edge_count, "src")?, input(dst, edge_count, "dst")?);
        if node_count > u32::MAX as usize {
            return Err(invalid("node_count exceeds the 32-bit node range"));
        }
        let mut edges = Vec::with_capacity(edge_count);
        for (i, (&a, &b)) in src.iter().zip(dst).enumerate() {
            if a as usize >= node_count || b as usize >= node_count {
                return Err(invalid(format!(
                    "edge {i} ({a}, {b}) names a node outside 0..{node_count}"
                )));
            }
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let width = node_count.max(1).to_string().len();
        let labels = (0..node_count).map(|i| format!("{i:0width$}")).collect();
        let inner = SocialGraph::from_index_edges(labels, edges)?;
        *out = Box::into_raw(Box::new(SsGraph { inner }));
        Ok(())
    })
}

/// Releases a graph handle; null is ignored.
///
/// # Safety
/// `graph` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_free(graph: *mut SsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_node_count(graph: *const SsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.node_count())
}

/// Edge count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_edge_count(graph: *const SsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.edge_count())
}

/// Writes the degree of each node into `degrees`, which holds `len` slots;
/// `len` must equal the node count.
///
/// # Safety
/// `graph` must be a live handle and `degrees` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_degrees(graph: *const SsGraph, degrees: *mut usize, len: usize) -> SsStatus {
    guard(|| {
        let g = graph_ref(graph)?;
        if len != g.inner.node_count() {
            return Err(invalid(format!(
                "buffer holds {len} degrees, graph has {} nodes",
                g.inner.node_count()
            )));
        }
        output(degrees, len, "degrees")?.copy_from_slice(&g.inner.degrees());
        Ok(())
    })
}

/// Copies the edges as `(src[i], dst[i])` with `src[i] < dst[i]`, sorted;
/// both buffers hold `len` slots and `len` must equal the edge count.
///
/// # Safety
/// `graph` must be a live handle and `src`, `dst` must point to `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_edges(graph: *const SsGraph, src: *mut u32, dst: *mut u32, len: usize) -> SsStatus {
    guard(|| {
        let g = graph_ref(graph)?;
        if len != g.inner.edge_count() {
            return Err(invalid(format!(
                "buffers hold {len} edges, graph has {}",
                g.inner.edge_count()
            )));
        }
        let (src, dst) = (output(src, len, "src")?, output(dst, len, "dst")?);
        for (i, &(a, b)) in g.inner.edges().iter().enumerate() {
            src[i] = a;
            dst[i] = b;
        }
        Ok(())
    })
}

/// Degree-preserving randomization with `swaps_factor × edges` swap attempts.
/// The result is a new handle in `out`.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ss_graph_rewire(
    graph: *const SsGraph,
    swaps_factor: f64,
    seed: u64,
    out: *mut *mut SsGraph,
) -> SsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let g = graph_ref(graph)?;
        let plan = RewirePlan {
            swaps_factor,
            ensemble_size: 1,
            seed,
        };
        plan.validate()?;
        *out = Box::into_raw(Box::new(SsGraph {
            inner: rewire(&g.inner, &plan),
        }));
        Ok(())
    })
}

/// Gini coefficient of `n` non-negative values from the trapezoidal Lorenz area.
///
/// # Safety
/// `values` must point to `n` readable elements and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ss_gini(values: *const f64, n: usize, out: *mut f64) -> SsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let values = input(values, n, "values")?;
        if values.is_empty() {
            return Err(Failure(
                SsStatus::InsufficientData,
                "Gini needs at least one value".into(),
            ));
        }
        checked_values(values, "values")?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("values sum to zero"));
        }
        *out = lorenz_gini_sorted(&sorted).0;
        Ok(())
    })
}

/// Hill estimate of the Pareto exponent over the largest `tail_fraction` of the values.
///
/// # Safety
/// `values` must point to `n` readable elements and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ss_pareto_alpha(values: *const f64, n: usize, tail_fraction: f64, out: *mut f64) -> SsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let values = input(values, n, "values")?;
        checked_values(values, "values")?;
        *out = hill_estimate(values, tail_fraction)?;
        Ok(())
    })
}

/// Splits the values into `n_classes` AMP-ranked classes of equal cumulative
/// value and writes the 1-based class of each input position to `classes`.
///
/// # Safety
/// `values` must point to `n` readable elements and `classes` to `n` writable elements.
#[no_mangle]
pub unsafe extern "C" fn ss_partition_classes(
    values: *const f64,
    n: usize,
    n_classes: usize,
    classes: *mut u32,
) -> SsStatus {
    guard(|| {
        let values = input(values, n, "values")?;
        checked_values(values, "values")?;
        let classes = output(classes, n, "classes")?;
        let table = amp_table(values);
        let partition = partition_classes(&table, n_classes)?;
        for (user, class, _) in partition.iter() {
            let idx: usize = user
                .parse()
                .map_err(|_| Failure(SsStatus::Internal, format!("bad user key {user}")))?;
            classes[idx] = class as u32;
        }
        Ok(())
    })
}

/// Louvain communities of a weighted undirected graph on `node_count` nodes.
/// Writes a community index per node to `labels` and the modularity to
/// `modularity`; returns the number of communities through `count`.
///
/// # Safety
/// `src`, `dst` and `weight` must point to `edge_count` readable elements,
/// `labels` to `node_count` writable elements, and `count`, `modularity` to writable slots.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ss_louvain(
    node_count: usize,
    src: *const u32,
    dst: *const u32,
    weight: *const f64,
    edge_count: usize,
    seed: u64,
    labels: *mut u32,
    count: *mut usize,
    modularity: *mut f64,
) -> SsStatus {
    guard(|| {
        let (count, modularity) = (out_ptr(count, "count")?, out_ptr(modularity, "modularity")?);
        let src = input(src, edge_count, "src")?;
        let dst = input(dst, edge_count, "dst")?;
        let weight = input(weight, edge_count, "weight")?;
        let labels = output(labels, node_count, "labels")?;
        let mut edges = Vec::with_capacity(edge_count);
        for i in 0..edge_count {
            let (a, b, w) = (src[i] as usize, dst[i] as usize, weight[i]);
            if a >= node_count || b >= node_count {
                return Err(invalid(format!(
                    "edge {i} ({a}, {b}) names a node outside 0..{node_count}"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(invalid(format!("edge {i} has weight {w}; weights must be positive")));
            }
            edges.push((a, b, w));
        }
        let c = louvain(node_count, &edges, seed);
        for (slot, &l) in labels.iter_mut().zip(&c.labels) {
            *slot = l as u32;
        }
        *count = c.count;
        *modularity = c.modularity;
        Ok(())
    })
}
