//! Atomic update latency calibration and prediction.
//!
//! Latencies are measured once per machine with a degree-count reference
//! benchmark on RMAT edge lists, over a grid of counter-array sizes (one per
//! memory level) and thread counts, and memoized in a machine-profile file.
//! Predictions for arbitrary sizes interpolate between the two memory levels
//! around the size on a log scale.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU16, AtomicU32, AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Barrier;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::cost::{KeyValues, LatencyModel};
use crate::error::{Error, Result};
use crate::graph::{rmat_edges, RmatParams, VertexId};

/// Edges per dynamically dispatched benchmark partition.
pub const PARTITION_EDGES: usize = 16 * 1024;

pub const PROFILE_ENV: &str = "ADAGRAPH_PROFILE";
pub const DEFAULT_PROFILE: &str = "adagraph.profile";
const PROFILE_HEADER: &str = "# adagraph machine profile";
const PROFILE_VERSION: u32 = 1;

/// Capacities of the memory levels, innermost first; the last level is main
/// memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHierarchy {
    capacities: Vec<u64>,
}

impl CacheHierarchy {
    pub fn new(capacities: Vec<u64>) -> Result<Self> {
        if capacities.len() < 2 {
            return Err(Error::InvalidParameter(
                "cache hierarchy needs at least one cache level and main memory".into(),
            ));
        }
        if capacities[0] == 0 || capacities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "cache capacities must be positive and strictly increasing".into(),
            ));
        }
        Ok(CacheHierarchy { capacities })
    }

    /// Reads `level1 = 48K`, `level2 = 2M`, ... where the highest level is
    /// main memory.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut capacities = Vec::new();
        for level in 1.. {
            match kv.get(&format!("level{level}")) {
                Some(v) => capacities.push(parse_size(v).ok_or_else(|| {
                    Error::InvalidParameter(format!("bad size {v:?} for level{level}"))
                })?),
                None => break,
            }
        }
        Self::new(capacities)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    /// Data and unified caches from sysfs plus total RAM from `/proc/meminfo`.
    pub fn detect() -> Result<Self> {
        let mut caches: Vec<(u32, u64)> = Vec::new();
        let base = Path::new("/sys/devices/system/cpu/cpu0/cache");
        let entries = fs::read_dir(base).map_err(|e| {
            Error::Precondition(format!(
                "cannot detect cache hierarchy ({e}); pass a hierarchy file"
            ))
        })?;
        for entry in entries.flatten() {
            let dir = entry.path();
            let read = |name: &str| fs::read_to_string(dir.join(name)).ok();
            let (Some(level), Some(kind), Some(size)) = (read("level"), read("type"), read("size"))
            else {
                continue;
            };
            if kind.trim() == "Instruction" {
                continue;
            }
            if let (Ok(level), Some(size)) = (level.trim().parse(), parse_size(size.trim())) {
                caches.push((level, size));
            }
        }
        caches.sort_unstable();
        caches.dedup_by_key(|c| c.0);
        let mut capacities: Vec<u64> = caches.into_iter().map(|c| c.1).collect();
        let meminfo = fs::read_to_string("/proc/meminfo")?;
        let total_kb = meminfo
            .lines()
            .find_map(|l| l.strip_prefix("MemTotal:"))
            .and_then(|v| v.split_whitespace().next()?.parse::<u64>().ok())
            .ok_or_else(|| Error::Precondition("cannot read MemTotal".into()))?;
        capacities.push(total_kb * 1024);
        Self::new(capacities)
    }

    pub fn capacities(&self) -> &[u64] {
        &self.capacities
    }

    pub fn level_count(&self) -> usize {
        self.capacities.len()
    }

    pub fn main_memory(&self) -> u64 {
        *self.capacities.last().unwrap()
    }

    /// Last level before main memory.
    pub fn last_level_cache(&self) -> u64 {
        self.capacities[self.capacities.len() - 2]
    }

    /// Index of the innermost level with capacity strictly above `bytes`;
    /// a size equal to main memory maps to main memory. `None` beyond it.
    pub fn level_of(&self, bytes: u64) -> Option<usize> {
        let idx = self.capacities.partition_point(|&cap| cap <= bytes);
        if idx < self.capacities.len() {
            Some(idx)
        } else if bytes == self.main_memory() {
            Some(self.capacities.len() - 1)
        } else {
            None
        }
    }

    /// Counter-array sizes measured during calibration: half of every cache
    /// level and one and a half times the last level cache.
    pub fn calibration_sizes(&self) -> Vec<u64> {
        let caches = &self.capacities[..self.capacities.len() - 1];
        let mut sizes: Vec<u64> = caches.iter().map(|c| c / 2).collect();
        let beyond = self.last_level_cache().saturating_mul(3) / 2;
        sizes.push(beyond.min(self.main_memory() - 1));
        sizes
    }
}

/// Parses `4096`, `48K`, `2M`, `1G` (binary multiples).
pub fn parse_size(text: &str) -> Option<u64> {
    let text = text.trim();
    let (digits, mult) = match text.char_indices().last()? {
        (i, 'K' | 'k') => (&text[..i], 1u64 << 10),
        (i, 'M' | 'm') => (&text[..i], 1 << 20),
        (i, 'G' | 'g') => (&text[..i], 1 << 30),
        _ => (text, 1),
    };
    digits.trim().parse::<u64>().ok()?.checked_mul(mult)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterWidth {
    U8,
    U16,
    U32,
    U64,
}

impl CounterWidth {
    pub fn bytes(self) -> u64 {
        match self {
            CounterWidth::U8 => 1,
            CounterWidth::U16 => 2,
            CounterWidth::U32 => 4,
            CounterWidth::U64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterArraySpec {
    pub width: CounterWidth,
    pub vertex_count: usize,
}

impl CounterArraySpec {
    /// `M_Counters = sizeof(counter) · |V|`.
    pub fn footprint(&self) -> u64 {
        self.width.bytes() * self.vertex_count as u64
    }
}

trait Counter: Send + Sync + Sized {
    fn zeroed(n: usize) -> Vec<Self>;
    fn increment_atomic(&self);
    fn increment_plain(&self);
    fn value(&self) -> u64;
}

macro_rules! impl_counter {
    ($atomic:ty, $int:ty) => {
        impl Counter for $atomic {
            fn zeroed(n: usize) -> Vec<Self> {
                (0..n).map(|_| <$atomic>::new(0)).collect()
            }
            #[inline]
            fn increment_atomic(&self) {
                self.fetch_add(1, Ordering::Relaxed);
            }
            #[inline]
            fn increment_plain(&self) {
                self.store(
                    self.load(Ordering::Relaxed).wrapping_add(1),
                    Ordering::Relaxed,
                );
            }
            fn value(&self) -> u64 {
                self.load(Ordering::Relaxed) as u64
            }
        }
    };
}

impl_counter!(AtomicU8, u8);
impl_counter!(AtomicU16, u16);
impl_counter!(AtomicU32, u32);
impl_counter!(AtomicU64, u64);

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeCountRun {
    /// Summed thread busy time per counter update.
    pub mean_update_ns: f64,
    /// Final counters, widened; they wrap at the counter width.
    pub counters: Vec<u64>,
    pub updates: u64,
}

/// Counts every endpoint occurrence with fetch-and-add on one shared counter
/// array. Refuses more threads than the hardware offers.
pub fn degree_count_benchmark(
    edges: &[(VertexId, VertexId)],
    threads: usize,
    spec: CounterArraySpec,
) -> Result<DegreeCountRun> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    degree_count_with_limit(edges, threads, spec, available)
}

/// As [`degree_count_benchmark`] with an explicit hardware thread limit.
pub fn degree_count_with_limit(
    edges: &[(VertexId, VertexId)],
    threads: usize,
    spec: CounterArraySpec,
    hardware_threads: usize,
) -> Result<DegreeCountRun> {
    if threads == 0 {
        return Err(Error::InvalidParameter("thread count must be >= 1".into()));
    }
    if threads > hardware_threads {
        return Err(Error::TooManyThreads {
            requested: threads,
            available: hardware_threads,
        });
    }
    if edges.is_empty() {
        return Err(Error::Precondition(
            "degree count needs a non-empty edge list".into(),
        ));
    }
    let partitions = edges.len().div_ceil(PARTITION_EDGES);
    if partitions < threads {
        return Err(Error::Precondition(format!(
            "{partitions} partitions of {PARTITION_EDGES} edges cannot feed {threads} threads"
        )));
    }
    if let Some(&(s, d)) = edges
        .iter()
        .find(|&&(s, d)| s.max(d) as usize >= spec.vertex_count)
    {
        return Err(Error::VertexOutOfRange {
            vertex: s.max(d) as u64,
            vertex_count: spec.vertex_count,
        });
    }
    match spec.width {
        CounterWidth::U8 => run_degree_count::<AtomicU8>(edges, threads, spec.vertex_count),
        CounterWidth::U16 => run_degree_count::<AtomicU16>(edges, threads, spec.vertex_count),
        CounterWidth::U32 => run_degree_count::<AtomicU32>(edges, threads, spec.vertex_count),
        CounterWidth::U64 => run_degree_count::<AtomicU64>(edges, threads, spec.vertex_count),
    }
}

fn run_degree_count<C: Counter>(
    edges: &[(VertexId, VertexId)],
    threads: usize,
    vertex_count: usize,
) -> Result<DegreeCountRun> {
    let counters = C::zeroed(vertex_count);
    let updates = 2 * edges.len() as u64;
    let busy_ns: u128 = if threads == 1 {
        // A single thread uses plain updates; its latency is the memory
        // access latency.
        let start = Instant::now();
        for &(s, d) in edges {
            counters[s as usize].increment_plain();
            counters[d as usize].increment_plain();
        }
        start.elapsed().as_nanos()
    } else {
        let next = AtomicUsize::new(0);
        let barrier = Barrier::new(threads);
        let counters = &counters;
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|_| {
                    scope.spawn(|| {
                        barrier.wait();
                        let start = Instant::now();
                        loop {
                            let part = next.fetch_add(1, Ordering::Relaxed);
                            let lo = part * PARTITION_EDGES;
                            if lo >= edges.len() {
                                break;
                            }
                            let hi = (lo + PARTITION_EDGES).min(edges.len());
                            for &(s, d) in &edges[lo..hi] {
                                counters[s as usize].increment_atomic();
                                counters[d as usize].increment_atomic();
                            }
                        }
                        start.elapsed().as_nanos()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        })
    };
    Ok(DegreeCountRun {
        mean_update_ns: busy_ns as f64 / updates as f64,
        counters: counters.iter().map(C::value).collect(),
        updates,
    })
}

/// Thread counts used for calibration: the maximum successively halved.
pub fn calibration_thread_grid(max_threads: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut t = max_threads.max(1);
    while t > 1 {
        grid.push(t);
        t /= 2;
    }
    grid.push(1);
    grid.reverse();
    grid
}

/// One measured row: latencies for one counter-array size across the thread
/// grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub bytes: u64,
    pub latency_ns: Vec<f64>,
}

/// Calibrated `L(M, T)` grid with its memory hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyTable {
    hierarchy: CacheHierarchy,
    threads: Vec<usize>,
    rows: Vec<LatencyRow>,
    /// Row index per memory level.
    level_rows: Vec<usize>,
    fingerprint: String,
}

impl LatencyTable {
    pub fn new(
        hierarchy: CacheHierarchy,
        threads: Vec<usize>,
        mut rows: Vec<LatencyRow>,
        fingerprint: String,
    ) -> Result<Self> {
        if threads.first() != Some(&1) || threads.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "thread grid must be ascending and contain 1".into(),
            ));
        }
        rows.sort_by_key(|r| r.bytes);
        let mut level_rows = vec![None; hierarchy.level_count()];
        for (idx, row) in rows.iter().enumerate() {
            if row.latency_ns.len() != threads.len() {
                return Err(Error::InvalidParameter(format!(
                    "row for {} bytes has {} latencies, expected {}",
                    row.bytes,
                    row.latency_ns.len(),
                    threads.len()
                )));
            }
            if row.latency_ns.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "row for {} bytes has a non-positive latency",
                    row.bytes
                )));
            }
            let level = hierarchy
                .level_of(row.bytes)
                .ok_or(Error::BeyondMainMemory {
                    bytes: row.bytes,
                    capacity: hierarchy.main_memory(),
                })?;
            // Larger sizes within a level sit closer to its capacity.
            level_rows[level] = Some(idx);
        }
        let level_rows = level_rows
            .into_iter()
            .enumerate()
            .map(|(level, row)| {
                row.ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "no calibration row for memory level {}",
                        level + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LatencyTable {
            hierarchy,
            threads,
            rows,
            level_rows,
            fingerprint,
        })
    }

    pub fn hierarchy(&self) -> &CacheHierarchy {
        &self.hierarchy
    }

    pub fn threads(&self) -> &[usize] {
        &self.threads
    }

    pub fn rows(&self) -> &[LatencyRow] {
        &self.rows
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Grid column for `threads`, rounding up to the next calibrated count.
    pub fn thread_column(&self, threads: usize) -> usize {
        self.threads
            .partition_point(|&t| t < threads)
            .min(self.threads.len() - 1)
    }

    /// Measured latency standing for memory level `level` (0-based).
    pub fn level_latency(&self, level: usize, threads: usize) -> f64 {
        self.rows[self.level_rows[level]].latency_ns[self.thread_column(threads)]
    }

    pub fn measured(&self, bytes: u64, threads: usize) -> Option<f64> {
        let col = self.threads.iter().position(|&t| t == threads)?;
        let row = self.rows.iter().find(|r| r.bytes == bytes)?;
        Some(row.latency_ns[col])
    }

    pub fn to_profile_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{PROFILE_HEADER}");
        let _ = writeln!(out, "version {PROFILE_VERSION}");
        let _ = writeln!(out, "fingerprint {}", self.fingerprint);
        for (idx, cap) in self.hierarchy.capacities().iter().enumerate() {
            let _ = writeln!(out, "level {} {}", idx + 1, cap);
        }
        let _ = writeln!(
            out,
            "threads {}",
            self.threads
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(out, "# bytes threads latency_ns");
        for row in &self.rows {
            for (t, l) in self.threads.iter().zip(&row.latency_ns) {
                let _ = writeln!(out, "sample {} {} {:.6}", row.bytes, t, l);
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_profile_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingProfile(path.to_path_buf())
            } else {
                Error::Io(e)
            }
        })?;
        Self::parse_profile(&text).map_err(|e| match e {
            Error::Parse { line, message } => Error::Profile {
                path: path.to_path_buf(),
                message: format!("line {line}: {message}"),
            },
            other => Error::Profile {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }

    pub fn parse_profile(text: &str) -> Result<Self> {
        let mut version = None;
        let mut fingerprint = String::new();
        let mut levels: Vec<(usize, u64)> = Vec::new();
        let mut threads: Vec<usize> = Vec::new();
        let mut samples: Vec<(u64, usize, f64)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let bad = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let tag = fields.next().unwrap();
            let rest: Vec<&str> = fields.collect();
            let num = |i: usize| -> Result<u64> {
                rest.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(format!("bad field {} in {line:?}", i + 1)))
            };
            match tag {
                "version" => version = Some(num(0)?),
                "fingerprint" => fingerprint = rest.join(" "),
                "level" => levels.push((num(0)? as usize, num(1)?)),
                "threads" => {
                    threads = (0..rest.len())
                        .map(|i| num(i).map(|t| t as usize))
                        .collect::<Result<_>>()?
                }
                "sample" => {
                    let latency = rest
                        .get(2)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| bad(format!("bad latency in {line:?}")))?;
                    samples.push((num(0)?, num(1)? as usize, latency));
                }
                other => return Err(bad(format!("unknown record {other:?}"))),
            }
        }
        match version {
            Some(v) if v == PROFILE_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::InvalidParameter(format!(
                    "unsupported profile version {v}"
                )))
            }
            None => return Err(Error::InvalidParameter("missing version record".into())),
        }
        levels.sort_unstable();
        if levels.iter().enumerate().any(|(i, l)| l.0 != i + 1) {
            return Err(Error::InvalidParameter(
                "level records must be numbered 1..m".into(),
            ));
        }
        let hierarchy = CacheHierarchy::new(levels.into_iter().map(|l| l.1).collect())?;
        let mut rows: Vec<LatencyRow> = Vec::new();
        for (bytes, t, latency) in samples {
            let col = threads.iter().position(|&x| x == t).ok_or_else(|| {
                Error::InvalidParameter(format!("sample thread count {t} not in thread grid"))
            })?;
            let row = match rows.iter_mut().position(|r| r.bytes == bytes) {
                Some(i) => &mut rows[i],
                None => {
                    rows.push(LatencyRow {
                        bytes,
                        latency_ns: vec![f64::NAN; threads.len()],
                    });
                    rows.last_mut().unwrap()
                }
            };
            row.latency_ns[col] = latency;
        }
        Self::new(hierarchy, threads, rows, fingerprint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Edges per benchmark run, spread over the counter array by RMAT.
    pub edges_per_run: usize,
    /// Runs per grid cell; the median is kept.
    pub repetitions: usize,
    pub width: CounterWidth,
    pub seed: u64,
    pub hardware_threads: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            edges_per_run: 1 << 21,
            repetitions: 3,
            width: CounterWidth::U32,
            seed: 0x5eed,
            hardware_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// RMAT edge list whose ids span exactly `vertex_count` counters.
pub fn reference_edges(
    vertex_count: usize,
    edges: usize,
    seed: u64,
) -> Result<Vec<(VertexId, VertexId)>> {
    if vertex_count == 0 || edges == 0 {
        return Err(Error::InvalidParameter(
            "reference edge list needs vertices and edges".into(),
        ));
    }
    let scale = (vertex_count.next_power_of_two().trailing_zeros()).max(1);
    let params = RmatParams {
        edge_factor: edges as f64 / (1u64 << scale) as f64,
        ..RmatParams::new(scale, 1.0, seed)
    };
    let n = vertex_count as u64;
    let mut list = rmat_edges(&params)?;
    list.truncate(edges);
    for e in &mut list {
        e.0 = (e.0 as u64 % n) as VertexId;
        e.1 = (e.1 as u64 % n) as VertexId;
    }
    Ok(list)
}

/// Measures `L(M, T)` for every calibration size of `hierarchy` and every
/// count in `threads`. Thread counts the edge list cannot feed are dropped.
pub fn calibrate(
    hierarchy: &CacheHierarchy,
    threads: &[usize],
    options: &CalibrationOptions,
) -> Result<LatencyTable> {
    let mut grid: Vec<usize> = threads
        .iter()
        .copied()
        .filter(|&t| t >= 1 && t <= options.hardware_threads)
        .filter(|&t| options.edges_per_run.div_ceil(PARTITION_EDGES) >= t)
        .collect();
    grid.push(1);
    grid.sort_unstable();
    grid.dedup();

    let mut rows = Vec::new();
    for bytes in hierarchy.calibration_sizes() {
        let vertex_count = (bytes / options.width.bytes()).max(1) as usize;
        let spec = CounterArraySpec {
            width: options.width,
            vertex_count,
        };
        let edges = reference_edges(vertex_count, options.edges_per_run, options.seed ^ bytes)?;
        let mut latency_ns = Vec::with_capacity(grid.len());
        for &t in &grid {
            let mut runs = (0..options.repetitions.max(1))
                .map(|_| {
                    degree_count_with_limit(&edges, t, spec, options.hardware_threads)
                        .map(|r| r.mean_update_ns)
                })
                .collect::<Result<Vec<f64>>>()?;
            runs.sort_by(f64::total_cmp);
            latency_ns.push(runs[runs.len() / 2].max(f64::MIN_POSITIVE));
        }
        rows.push(LatencyRow {
            bytes: spec.footprint(),
            latency_ns,
        });
    }
    LatencyTable::new(hierarchy.clone(), grid, rows, host_fingerprint())
}

/// Loads the profile at `path` if present, otherwise calibrates and saves.
/// Returns whether a benchmark ran.
pub fn calibrate_memoized(
    path: &Path,
    hierarchy: &CacheHierarchy,
    threads: &[usize],
    options: &CalibrationOptions,
) -> Result<(LatencyTable, bool)> {
    if path.exists() {
        return Ok((LatencyTable::load(path)?, false));
    }
    let table = calibrate(hierarchy, threads, options)?;
    table.save(path).map_err(|e| Error::Profile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((table, true))
}

fn host_fingerprint() -> String {
    let host = fs::read_to_string("/proc/sys/kernel/hostname")
        .or_else(|_| fs::read_to_string("/etc/hostname"))
        .map(|h| h.trim().to_string())
        .unwrap_or_else(|_| "unknown-host".into());
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("{host} {ts}")
}

/// Profile location: explicit path, then `ADAGRAPH_PROFILE`, then
/// `./adagraph.profile`.
pub fn resolve_profile_path(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(PROFILE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_PROFILE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolationSign {
    /// `L(M_l) + δL·S³`, continuous at level boundaries.
    Corrected,
    /// `L(M_l) − δL·S³`.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub exponent: f64,
    pub sign: InterpolationSign,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            exponent: 3.0,
            sign: InterpolationSign::Corrected,
        }
    }
}

/// Predicted update latency for `bytes` of touched memory and `threads`.
///
/// With `l` the innermost level holding `bytes` and `u = l − 1` (or `l` for
/// the first level), `S = (log M_l − log M) / (log M_l − log M_u)` and
/// `δL = L(M_u, T) − L(M_l, T)`.
pub fn predict_latency(
    table: &LatencyTable,
    bytes: u64,
    threads: usize,
    options: &PredictOptions,
) -> Result<f64> {
    let hierarchy = table.hierarchy();
    let level = hierarchy.level_of(bytes).ok_or(Error::BeyondMainMemory {
        bytes,
        capacity: hierarchy.main_memory(),
    })?;
    let threads = threads.max(1);
    let lower = table.level_latency(level, threads);
    if level == 0 {
        return Ok(lower);
    }
    let upper = table.level_latency(level - 1, threads);
    let cap_l = (hierarchy.capacities()[level] as f64).ln();
    let cap_u = (hierarchy.capacities()[level - 1] as f64).ln();
    let s = (cap_l - (bytes as f64).ln()) / (cap_l - cap_u);
    let delta = upper - lower;
    let shift = delta * s.powf(options.exponent);
    Ok(match options.sign {
        InterpolationSign::Corrected => lower + shift,
        InterpolationSign::Verbatim => lower - shift,
    })
}

pub fn mem_latency(table: &LatencyTable, bytes: u64, options: &PredictOptions) -> Result<f64> {
    predict_latency(table, bytes, 1, options)
}

/// Calibrated table plus prediction settings; the latency source of the cost
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    pub table: LatencyTable,
    pub options: PredictOptions,
}

impl MachineModel {
    pub fn new(table: LatencyTable) -> Self {
        MachineModel {
            table,
            options: PredictOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        LatencyTable::load(path).map(Self::new)
    }

    fn clamp_bytes(&self, bytes: u64) -> u64 {
        bytes.min(self.table.hierarchy().main_memory())
    }
}

impl LatencyModel for MachineModel {
    fn mem_latency(&self, bytes: u64) -> f64 {
        predict_latency(&self.table, self.clamp_bytes(bytes), 1, &self.options)
            .expect("clamped to main memory")
    }

    fn atomic_latency(&self, threads: usize, bytes: u64) -> f64 {
        predict_latency(&self.table, self.clamp_bytes(bytes), threads, &self.options)
            .expect("clamped to main memory")
    }

    fn thread_grid(&self) -> Vec<usize> {
        self.table.threads().to_vec()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn synthetic_table() -> LatencyTable {
        let hierarchy = CacheHierarchy::new(vec![32 << 10, 1 << 20, 32 << 20, 1 << 34]).unwrap();
        let rows = vec![
            LatencyRow {
                bytes: 16 << 10,
                latency_ns: vec![1.0, 6.0, 20.0],
            },
            LatencyRow {
                bytes: 512 << 10,
                latency_ns: vec![3.0, 5.0, 12.0],
            },
            LatencyRow {
                bytes: 16 << 20,
                latency_ns: vec![10.0, 9.0, 11.0],
            },
            LatencyRow {
                bytes: 48 << 20,
                latency_ns: vec![80.0, 40.0, 30.0],
            },
        ];
        LatencyTable::new(hierarchy, vec![1, 2, 4], rows, "test 0".into()).unwrap()
    }

    #[test]
    fn level_lookup_is_strict() {
        let h = CacheHierarchy::new(vec![100, 1000, 10_000]).unwrap();
        assert_eq!(h.level_of(0), Some(0));
        assert_eq!(h.level_of(99), Some(0));
        assert_eq!(h.level_of(100), Some(1));
        assert_eq!(h.level_of(9_999), Some(2));
        assert_eq!(h.level_of(10_000), Some(2));
        assert_eq!(h.level_of(10_001), None);
        assert!(CacheHierarchy::new(vec![100]).is_err());
        assert!(CacheHierarchy::new(vec![100, 100]).is_err());
    }

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("48K"), Some(48 << 10));
        assert_eq!(parse_size("2M"), Some(2 << 20));
        assert_eq!(parse_size("4096"), Some(4096));
        assert_eq!(parse_size("x"), None);
        let kv = KeyValues::parse("level1 = 32K\nlevel2=1M\nlevel3 = 8G").unwrap();
        let h = CacheHierarchy::from_key_values(&kv).unwrap();
        assert_eq!(h.capacities(), &[32 << 10, 1 << 20, 8 << 30]);
        assert_eq!(h.calibration_sizes(), vec![16 << 10, 512 << 10, 3 << 19]);
    }

    #[test]
    fn counter_footprint() {
        let spec = CounterArraySpec {
            width: CounterWidth::U16,
            vertex_count: 1000,
        };
        assert_eq!(spec.footprint(), 2000);
    }

    #[test]
    fn degree_count_triangle() {
        let edges = [(0, 1), (1, 2), (2, 0)];
        let spec = CounterArraySpec {
            width: CounterWidth::U32,
            vertex_count: 3,
        };
        let run = degree_count_with_limit(&edges, 1, spec, 1).unwrap();
        assert_eq!(run.counters, vec![2, 2, 2]);
        assert_eq!(run.updates, 6);
        assert!(run.mean_update_ns > 0.0);
    }

    #[test]
    fn degree_count_independent_of_threads() {
        let edges = reference_edges(5000, 100_000, 3).unwrap();
        let mut expected = vec![0u64; 5000];
        for &(s, d) in &edges {
            expected[s as usize] += 1;
            expected[d as usize] += 1;
        }
        for width in [CounterWidth::U32, CounterWidth::U64] {
            let spec = CounterArraySpec {
                width,
                vertex_count: 5000,
            };
            for t in [1, 2, 3, 4] {
                let run = degree_count_with_limit(&edges, t, spec, 4).unwrap();
                assert_eq!(run.counters, expected, "T={t}");
            }
        }
        let narrow = CounterArraySpec {
            width: CounterWidth::U8,
            vertex_count: 5000,
        };
        let run = degree_count_with_limit(&edges, 2, narrow, 2).unwrap();
        let wrapped: Vec<u64> = expected.iter().map(|c| c % 256).collect();
        assert_eq!(run.counters, wrapped);
    }

    #[test]
    fn degree_count_errors() {
        let spec = CounterArraySpec {
            width: CounterWidth::U32,
            vertex_count: 3,
        };
        assert!(degree_count_with_limit(&[], 1, spec, 1).is_err());
        assert!(matches!(
            degree_count_with_limit(&[(0, 1)], 2, spec, 1),
            Err(Error::TooManyThreads { .. })
        ));
        // One partition cannot feed two threads.
        assert!(matches!(
            degree_count_with_limit(&[(0, 1)], 2, spec, 2),
            Err(Error::Precondition(_))
        ));
        assert!(degree_count_with_limit(&[(0, 3)], 1, spec, 1).is_err());
    }

    #[test]
    fn thread_grid_halves() {
        assert_eq!(calibration_thread_grid(28), vec![1, 3, 7, 14, 28]);
        assert_eq!(calibration_thread_grid(8), vec![1, 2, 4, 8]);
        assert_eq!(calibration_thread_grid(1), vec![1]);
    }

    #[test]
    fn prediction_boundaries() {
        let table = synthetic_table();
        let opts = PredictOptions::default();
        let caps = table.hierarchy().capacities().to_vec();
        // At a capacity the prediction is that level's measurement.
        for (level, &cap) in caps.iter().enumerate() {
            for t in [1, 2, 4] {
                let got = predict_latency(&table, cap, t, &opts).unwrap();
                assert_eq!(got, table.level_latency(level, t), "level {level} T={t}");
            }
        }
        // First level: identical bounds.
        assert_eq!(predict_latency(&table, 100, 2, &opts).unwrap(), 6.0);
        assert!(matches!(
            predict_latency(&table, (1 << 34) + 1, 1, &opts),
            Err(Error::BeyondMainMemory { .. })
        ));
    }

    #[test]
    fn prediction_at_geometric_midpoint() {
        // L(M_u)=100, L(M_l)=40 with M at the log midpoint: S = 0.5.
        let hierarchy = CacheHierarchy::new(vec![1 << 10, 1 << 20, 1 << 30]).unwrap();
        let rows = vec![
            LatencyRow {
                bytes: 512,
                latency_ns: vec![1.0],
            },
            LatencyRow {
                bytes: 1 << 19,
                latency_ns: vec![100.0],
            },
            LatencyRow {
                bytes: 1 << 29,
                latency_ns: vec![40.0],
            },
        ];
        let table = LatencyTable::new(hierarchy, vec![1], rows, String::new()).unwrap();
        let mid = 1u64 << 25;
        let corrected = predict_latency(&table, mid, 1, &PredictOptions::default()).unwrap();
        assert!((corrected - 47.5).abs() < 1e-12, "{corrected}");
        let verbatim = PredictOptions {
            sign: InterpolationSign::Verbatim,
            ..Default::default()
        };
        let got = predict_latency(&table, mid, 1, &verbatim).unwrap();
        assert!((got - 32.5).abs() < 1e-12, "{got}");
    }

    #[test]
    fn prediction_is_continuous_and_rounds_threads_up() {
        let table = synthetic_table();
        let opts = PredictOptions::default();
        let caps = table.hierarchy().capacities().to_vec();
        for &cap in &caps[..caps.len() - 1] {
            for t in [1, 2, 3, 4] {
                let below = predict_latency(&table, cap - 1, t, &opts).unwrap();
                let above = predict_latency(&table, cap + 1, t, &opts).unwrap();
                let at = predict_latency(&table, cap, t, &opts).unwrap();
                assert!((below - above).abs() / at <= 0.01, "cap {cap} T={t}");
            }
        }
        assert_eq!(
            predict_latency(&table, 100, 3, &opts).unwrap(),
            predict_latency(&table, 100, 4, &opts).unwrap()
        );
        assert_eq!(
            predict_latency(&table, 100, 64, &opts).unwrap(),
            predict_latency(&table, 100, 4, &opts).unwrap()
        );
        assert_eq!(
            mem_latency(&table, 5 << 20, &opts).unwrap(),
            predict_latency(&table, 5 << 20, 1, &opts).unwrap()
        );
        assert_eq!(mem_latency(&table, 10, &opts).unwrap(), 1.0);
    }

    #[test]
    fn profile_round_trip_and_errors() {
        let table = synthetic_table();
        let text = table.to_profile_string();
        assert!(text.starts_with(PROFILE_HEADER));
        let back = LatencyTable::parse_profile(&text).unwrap();
        assert_eq!(back, table);

        assert!(LatencyTable::parse_profile("level 1 10\n").is_err());
        let bad = text.replace("version 1", "version 9");
        assert!(LatencyTable::parse_profile(&bad).is_err());
        let missing_row: String = text
            .lines()
            .filter(|l| !l.contains(&format!("sample {} ", 48u64 << 20)))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(LatencyTable::parse_profile(&missing_row).is_err());
    }

    #[test]
    fn calibration_is_memoized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("machine.profile");
        let hierarchy = CacheHierarchy::new(vec![16 << 10, 256 << 10, 1 << 40]).unwrap();
        let options = CalibrationOptions {
            edges_per_run: 1 << 15,
            repetitions: 1,
            hardware_threads: 2,
            ..Default::default()
        };
        let (first, measured) = calibrate_memoized(&path, &hierarchy, &[1, 2], &options).unwrap();
        assert!(measured);
        assert_eq!(first.threads(), &[1, 2]);
        let (second, measured) = calibrate_memoized(&path, &hierarchy, &[1, 2], &options).unwrap();
        assert!(!measured);
        assert_eq!(second.fingerprint(), first.fingerprint());
        assert_eq!(second.rows().len(), 3);
        for (a, b) in first.rows().iter().zip(second.rows()) {
            for (x, y) in a.latency_ns.iter().zip(&b.latency_ns) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn missing_profile_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = LatencyTable::load(&dir.path().join("none")).unwrap_err();
        assert!(matches!(err, Error::MissingProfile(_)));
    }
}
