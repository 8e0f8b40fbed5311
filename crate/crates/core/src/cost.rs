//! Latency cost model, parallel profitability and thread bounds.
//!
//! Costs are in nanoseconds. The parallel per-vertex cost `C_para(T)` is
//! thread-time (work), so the wall-clock share of one thread is
//! `C_para(T) / T`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::GraphStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemKind {
    Vertex,
    Edge,
    FoundVertex,
}

/// Operation counts for processing one item.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ItemCounts {
    pub ops: u32,
    pub mem: u32,
    pub atomics: u32,
}

impl ItemCounts {
    pub const fn new(ops: u32, mem: u32, atomics: u32) -> Self {
        ItemCounts { ops, mem, atomics }
    }
}

/// Hand-counted properties of one algorithm kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgorithmDescriptor {
    pub name: String,
    pub vertex: ItemCounts,
    pub edge: ItemCounts,
    pub found_vertex: ItemCounts,
    pub bytes_per_vertex: u64,
    pub bytes_per_frontier_entry: u64,
    pub constant_bytes: u64,
}

impl AlgorithmDescriptor {
    pub fn counts(&self, kind: ItemKind) -> ItemCounts {
        match kind {
            ItemKind::Vertex => self.vertex,
            ItemKind::Edge => self.edge,
            ItemKind::FoundVertex => self.found_vertex,
        }
    }

    /// Overrides fields from `vertex.ops`, `edge.atomics`, `bytes_per_vertex`,
    /// ... style keys.
    pub fn apply_overrides(&mut self, kv: &KeyValues) -> Result<()> {
        for (prefix, counts) in [
            ("vertex", &mut self.vertex),
            ("edge", &mut self.edge),
            ("found", &mut self.found_vertex),
        ] {
            if let Some(v) = kv.get_parsed::<u32>(&format!("{prefix}.ops"))? {
                counts.ops = v;
            }
            if let Some(v) = kv.get_parsed::<u32>(&format!("{prefix}.mem"))? {
                counts.mem = v;
            }
            if let Some(v) = kv.get_parsed::<u32>(&format!("{prefix}.atomics"))? {
                counts.atomics = v;
            }
        }
        if let Some(v) = kv.get_parsed("bytes_per_vertex")? {
            self.bytes_per_vertex = v;
        }
        if let Some(v) = kv.get_parsed("bytes_per_frontier_entry")? {
            self.bytes_per_frontier_entry = v;
        }
        if let Some(v) = kv.get_parsed("constant_bytes")? {
            self.constant_bytes = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelConfig {
    pub op_latency_ns: f64,
    /// Start cost of a single thread.
    pub thread_overhead_ns: f64,
    /// Minimum work a thread must receive.
    pub min_thread_work_ns: f64,
    pub parallel_startup_ns: f64,
    /// Maximum number of cores, `P`.
    pub max_threads: usize,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        CostModelConfig {
            op_latency_ns: 1.0,
            thread_overhead_ns: 5_000.0,
            min_thread_work_ns: 50_000.0,
            parallel_startup_ns: 10_000.0,
            max_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl CostModelConfig {
    pub fn validate(&self) -> Result<()> {
        let times = [
            self.op_latency_ns,
            self.thread_overhead_ns,
            self.min_thread_work_ns,
            self.parallel_startup_ns,
        ];
        if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter(
                "cost model times must be positive".into(),
            ));
        }
        if self.min_thread_work_ns <= self.thread_overhead_ns {
            return Err(Error::InvalidParameter(
                "minimum thread work must exceed the thread start cost".into(),
            ));
        }
        if self.max_threads == 0 {
            return Err(Error::InvalidParameter("max_threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(v) = kv.get_parsed("op_latency_ns")? {
            self.op_latency_ns = v;
        }
        if let Some(v) = kv.get_parsed("thread_overhead_ns")? {
            self.thread_overhead_ns = v;
        }
        if let Some(v) = kv.get_parsed("min_thread_work_ns")? {
            self.min_thread_work_ns = v;
        }
        if let Some(v) = kv.get_parsed("parallel_startup_ns")? {
            self.parallel_startup_ns = v;
        }
        if let Some(v) = kv.get_parsed("max_threads")? {
            self.max_threads = v;
        }
        self.validate()
    }

    /// Work that has to be available before one more thread is worth starting.
    pub fn min_parallel_work_ns(&self) -> f64 {
        self.min_thread_work_ns + self.parallel_startup_ns
    }
}

/// Plain `key = value` configuration, `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: HashMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            entries.insert(key.trim().to_string(), (idx + 1, value.trim().to_string()));
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                message: format!("invalid value {value:?} for {key}"),
            }),
        }
    }
}

/// Memory and atomic latencies as a function of touched bytes and threads.
pub trait LatencyModel {
    fn mem_latency(&self, bytes: u64) -> f64;
    fn atomic_latency(&self, threads: usize, bytes: u64) -> f64;
    /// Thread counts at which the atomic latency was measured, ascending.
    /// Latencies between grid points use the next point above.
    fn thread_grid(&self) -> Vec<usize>;
}

/// Touched-memory footprint `M` as a linear model of the iteration sizes.
pub fn estimate_footprint(
    descriptor: &AlgorithmDescriptor,
    stats: &GraphStats,
    frontier_len: u64,
    found: u64,
) -> Result<u64> {
    let overflow = || Error::Overflow("memory footprint".into());
    let per_vertex = descriptor
        .bytes_per_vertex
        .checked_mul(stats.vertex_count as u64)
        .ok_or_else(overflow)?;
    let entries = frontier_len.checked_add(found).ok_or_else(overflow)?;
    let per_entry = descriptor
        .bytes_per_frontier_entry
        .checked_mul(entries)
        .ok_or_else(overflow)?;
    descriptor
        .constant_bytes
        .checked_add(per_vertex)
        .and_then(|m| m.checked_add(per_entry))
        .ok_or_else(overflow)
}

/// Cost of one item: `ops·L_op + atomics·L_atomic(T, M) + mem·L_mem(M)`.
/// A single thread pays memory latency for its atomics.
pub fn sub_cost(
    descriptor: &AlgorithmDescriptor,
    kind: ItemKind,
    threads: usize,
    footprint: u64,
    config: &CostModelConfig,
    latency: &dyn LatencyModel,
) -> f64 {
    let counts = descriptor.counts(kind);
    let mem = latency.mem_latency(footprint);
    let atomic = if threads <= 1 {
        mem
    } else {
        latency.atomic_latency(threads, footprint)
    };
    counts.ops as f64 * config.op_latency_ns
        + counts.atomics as f64 * atomic
        + counts.mem as f64 * mem
}

/// Per-item costs at a fixed thread count; input of the per-vertex total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubCosts {
    pub vertex: f64,
    pub edge: f64,
    pub found_vertex: f64,
}

impl SubCosts {
    pub fn evaluate(
        descriptor: &AlgorithmDescriptor,
        threads: usize,
        footprint: u64,
        config: &CostModelConfig,
        latency: &dyn LatencyModel,
    ) -> Self {
        let cost = |kind| sub_cost(descriptor, kind, threads, footprint, config, latency);
        SubCosts {
            vertex: cost(ItemKind::Vertex),
            edge: cost(ItemKind::Edge),
            found_vertex: cost(ItemKind::FoundVertex),
        }
    }

    /// Vertex cost plus its share of edges and found vertices.
    pub fn per_vertex(&self, frontier_len: f64, edges: f64, found: f64) -> Result<f64> {
        if frontier_len <= 0.0 {
            return Err(Error::Precondition(
                "per-vertex cost needs a non-empty frontier".into(),
            ));
        }
        Ok(self.vertex
            + edges / frontier_len * self.edge
            + found / frontier_len * self.found_vertex)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn total_cost_per_vertex(
    descriptor: &AlgorithmDescriptor,
    threads: usize,
    footprint: u64,
    frontier_len: f64,
    edges: f64,
    found: f64,
    config: &CostModelConfig,
    latency: &dyn LatencyModel,
) -> Result<f64> {
    SubCosts::evaluate(descriptor, threads, footprint, config, latency).per_vertex(
        frontier_len,
        edges,
        found,
    )
}

/// Smallest frontier for which starting parallel execution can pay off.
pub fn min_vertices_for_parallel(config: &CostModelConfig, seq_cost_per_vertex: f64) -> u64 {
    let needed = (config.min_parallel_work_ns() / seq_cost_per_vertex).ceil();
    if needed.is_nan() || needed < 1.0 {
        1
    } else if needed >= u64::MAX as f64 {
        u64::MAX
    } else {
        needed as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadBounds {
    pub t_min: usize,
    pub t_max: usize,
    pub parallel_profitable: bool,
}

impl ThreadBounds {
    pub const SEQUENTIAL: ThreadBounds = ThreadBounds {
        t_min: 1,
        t_max: 1,
        parallel_profitable: false,
    };
}

/// Parallel per-vertex cost as a step function over a thread grid: the cost
/// at `T` is the one recorded for the smallest grid point `>= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCostCurve {
    points: Vec<(usize, f64)>,
}

impl ParallelCostCurve {
    pub fn new(mut points: Vec<(usize, f64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        points.dedup_by_key(|p| p.0);
        if points.first().is_none_or(|p| p.0 != 1) {
            return Err(Error::InvalidParameter(
                "thread grid must start at 1".into(),
            ));
        }
        if points.iter().any(|p| !(p.1 >= 0.0) || !p.1.is_finite()) {
            return Err(Error::InvalidParameter(
                "parallel costs must be finite and non-negative".into(),
            ));
        }
        Ok(ParallelCostCurve { points })
    }

    /// Evaluates `cost` at every grid point.
    pub fn from_fn(grid: &[usize], cost: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new(grid.iter().map(|&t| (t, cost(t))).collect())
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn cost(&self, threads: usize) -> f64 {
        let idx = self.points.partition_point(|p| p.0 < threads);
        self.points
            .get(idx)
            .unwrap_or_else(|| self.points.last().unwrap())
            .1
    }

    /// Intervals `(lo, hi]` on which the cost is constant, with that cost.
    /// The last segment extends to `usize::MAX`.
    fn segments(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| {
            let lo = if i == 0 { 0 } else { self.points[i - 1].0 };
            let hi = if i + 1 == n {
                usize::MAX
            } else {
                self.points[i].0
            };
            (lo, hi, self.points[i].1)
        })
    }
}

/// Inputs of the thread-bound search for one iteration.
#[derive(Debug, Clone, Copy)]
pub struct BoundsProblem<'a> {
    pub config: &'a CostModelConfig,
    /// Sequential per-vertex cost `C_seq`.
    pub seq_cost: f64,
    pub parallel: &'a ParallelCostCurve,
    /// Vertices to process, `|V|` (the frontier size).
    pub vertices: u64,
}

impl BoundsProblem<'_> {
    /// `C_seq > C_para(T)/T + C_T_overhead·T/|V|`, strict.
    fn profitable_at(&self, threads: usize, para: f64) -> bool {
        let t = threads as f64;
        self.seq_cost > para / t + self.config.thread_overhead_ns * t / self.vertices as f64
    }

    /// Each of `T` threads receives at least the minimum parallel work.
    fn enough_work_at(&self, threads: usize, para: f64) -> bool {
        self.vertices as f64 * para / threads as f64 >= self.config.min_parallel_work_ns()
    }

    fn valid_at(&self, threads: usize, para: f64) -> bool {
        self.profitable_at(threads, para) && self.enough_work_at(threads, para)
    }

    fn max_threads(&self) -> usize {
        self.config.max_threads
    }
}

/// Reference search: every `T` in `[2, P]`.
pub fn thread_bounds_scan(problem: &BoundsProblem) -> ThreadBounds {
    if problem.vertices == 0 {
        return ThreadBounds::SEQUENTIAL;
    }
    let mut t_min = None;
    let mut t_max = None;
    for t in 2..=problem.max_threads() {
        let para = problem.parallel.cost(t);
        if t_min.is_none() && problem.profitable_at(t, para) {
            t_min = Some(t);
        }
        if problem.valid_at(t, para) {
            t_max = Some(t);
        }
    }
    match (t_min, t_max) {
        (Some(lo), Some(hi)) if lo <= hi => ThreadBounds {
            t_min: lo,
            t_max: hi,
            parallel_profitable: true,
        },
        _ => ThreadBounds::SEQUENTIAL,
    }
}

/// Walks the thread grid segment by segment (doubling for a power-of-two
/// grid). Within a segment the parallel cost is constant, so the thread counts
/// satisfying each condition form one interval that is solved in closed form.
/// Every segment is visited: rounding thread counts up to the grid makes
/// `C_para(T)/T` a sawtooth, so a short segment can be invalid between two
/// valid ones.
pub fn thread_bounds_fast(problem: &BoundsProblem) -> ThreadBounds {
    let p = problem.max_threads();
    if problem.vertices == 0 || p < 2 {
        return ThreadBounds::SEQUENTIAL;
    }
    let mut t_min = None;
    let mut t_max = None;
    for (lo, hi, para) in problem.parallel.segments() {
        let first = (lo + 1).max(2);
        let last = hi.min(p);
        if first > last {
            if lo >= p {
                break;
            }
            continue;
        }
        let (profitable, valid) = segment_intervals(problem, para, first, last);
        if t_min.is_none() {
            t_min = profitable.map(|(j_min, _)| j_min);
        }
        if let Some((_, j_max)) = valid {
            t_max = Some(j_max);
        }
        if last == p {
            break;
        }
    }
    match (t_min, t_max) {
        (Some(lo), Some(hi)) if lo <= hi => ThreadBounds {
            t_min: lo,
            t_max: hi,
            parallel_profitable: true,
        },
        _ => ThreadBounds::SEQUENTIAL,
    }
}

type Interval = Option<(usize, usize)>;

/// Thread counts in `[first, last]` that are profitable, and that are both
/// profitable and sufficiently loaded, at constant parallel cost `para`.
///
/// Profitability is `O·T² − |V|·C_seq·T + |V|·C_para < 0`, open between the
/// roots of the quadratic. The work floor gives `T ≤ |V|·C_para / W`.
fn segment_intervals(
    problem: &BoundsProblem,
    para: f64,
    first: usize,
    last: usize,
) -> (Interval, Interval) {
    let v = problem.vertices as f64;
    let o = problem.config.thread_overhead_ns;
    let b = v * problem.seq_cost;
    let disc = b * b - 4.0 * o * v * para;
    if !(disc > 0.0) {
        return (None, None);
    }
    let sq = disc.sqrt();
    let root_lo = to_thread_count((b - sq) / (2.0 * o)).saturating_add(1);
    let root_hi = to_thread_count(((b + sq) / (2.0 * o)).ceil()).saturating_sub(1);
    let work_cap = to_thread_count(v * para / problem.config.min_parallel_work_ns());

    let profitable = snap(
        |t| problem.profitable_at(t, para),
        root_lo,
        root_hi,
        first,
        last,
    );
    let valid = snap(
        |t| problem.valid_at(t, para),
        root_lo,
        root_hi.min(work_cap),
        first,
        last,
    );
    (profitable, valid)
}

/// Moves closed-form interval ends onto the exact predicate, which holds on
/// one contiguous run inside `[first, last]`.
fn snap(
    pred: impl Fn(usize) -> bool,
    approx_lo: usize,
    approx_hi: usize,
    first: usize,
    last: usize,
) -> Interval {
    let mut lo = approx_lo.clamp(first, last);
    if !pred(lo) {
        let hi = approx_hi.clamp(first, last);
        // Float rounding can put the estimate one or two counts off.
        lo = (lo.saturating_sub(2).max(first)..=(lo + 2).min(last))
            .chain(hi.saturating_sub(2).max(first)..=(hi + 2).min(last))
            .find(|&t| pred(t))?;
    }
    while lo > first && pred(lo - 1) {
        lo -= 1;
    }
    let mut hi = approx_hi.clamp(lo, last);
    while hi > lo && !pred(hi) {
        hi -= 1;
    }
    while hi < last && pred(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

fn to_thread_count(x: f64) -> usize {
    let x = x.floor();
    if x.is_nan() || x < 0.0 {
        0
    } else if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        x as usize
    }
}
