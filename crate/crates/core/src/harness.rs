//! Concurrent-session benchmark runs and their CSV output.
//!
//! Every session is a thread that repeatedly runs one full query against the
//! shared graph. Throughput is the sum of processed (PageRank) or traversed
//! (BFS) edges over all runs divided by the summed run time, times the number
//! of concurrent sessions.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{
    bfs, pagerank, Algorithm, ExecContext, ExecMode, IterationTrace, PageRankParams,
};
use crate::contention::MachineModel;
use crate::cost::{CostModelConfig, KeyValues};
use crate::error::{Error, Result};
use crate::graph::{generate_rmat, ingest_edge_list, Graph, RmatParams, VertexId};
use crate::scheduler::{SchedulerConfig, SharedPool};

pub const CSV_HEADER: [&str; 8] = [
    "algo",
    "variant",
    "mode",
    "dataset",
    "sessions",
    "runs",
    "mean_ms",
    "throughput_eps",
];

/// Marker written into the numeric columns of a failed cell.
pub const ERROR_MARKER: &str = "ERROR";

/// Measured runs per session.
pub fn runs_per_session(algorithm: Algorithm) -> usize {
    match algorithm {
        Algorithm::Bfs => 50,
        Algorithm::PrPush | Algorithm::PrPull => 24,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    File(PathBuf),
    Rmat(RmatParams),
}

impl Dataset {
    pub fn name(&self) -> String {
        match self {
            Dataset::File(path) => path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            Dataset::Rmat(p) => format!("rmat-{}-{}", p.scale, p.edge_factor),
        }
    }

    pub fn load(&self) -> Result<Graph> {
        match self {
            Dataset::File(path) => {
                let file = std::fs::File::open(path)?;
                ingest_edge_list(std::io::BufReader::new(file))
            }
            Dataset::Rmat(params) => generate_rmat(params),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub algorithm: Algorithm,
    pub mode: ExecMode,
    pub dataset: String,
    pub sessions: usize,
    /// BFS source selection.
    pub seed: u64,
    /// Overrides the standard repetition count per session.
    pub runs_per_session: Option<usize>,
    /// Hardware threads shared by all sessions.
    pub threads: usize,
    pub pagerank: PageRankParams,
    pub cost: CostModelConfig,
    pub scheduler: SchedulerConfig,
    /// Keep iteration traces and dispatch records of every run.
    pub trace: bool,
}

impl BenchmarkSpec {
    pub fn new(
        algorithm: Algorithm,
        mode: ExecMode,
        dataset: impl Into<String>,
        sessions: usize,
    ) -> Self {
        let cost = CostModelConfig::default();
        BenchmarkSpec {
            algorithm,
            mode,
            dataset: dataset.into(),
            sessions,
            seed: 1,
            runs_per_session: None,
            threads: cost.max_threads,
            pagerank: PageRankParams::default(),
            cost,
            scheduler: SchedulerConfig::default(),
            trace: false,
        }
    }

    pub fn runs_per_session(&self) -> usize {
        self.runs_per_session
            .unwrap_or_else(|| runs_per_session(self.algorithm))
    }

    pub fn total_runs(&self) -> usize {
        self.sessions * self.runs_per_session()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sessions == 0 {
            return Err(Error::InvalidParameter("sessions must be >= 1".into()));
        }
        if self.runs_per_session() == 0 {
            return Err(Error::InvalidParameter(
                "runs per session must be >= 1".into(),
            ));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        self.pagerank.validate()?;
        self.cost.validate()?;
        self.scheduler.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub session: usize,
    pub run: usize,
    pub source: Option<VertexId>,
    pub elapsed_ns: u64,
    pub edges: u64,
    pub iterations: Vec<IterationTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub spec: BenchmarkSpec,
    pub runs: Vec<RunRecord>,
    /// Wall time of the whole measurement.
    pub wall_ns: u64,
}

impl SessionReport {
    pub fn total_edges(&self) -> u64 {
        self.runs.iter().map(|r| r.edges).sum()
    }

    pub fn total_elapsed_ns(&self) -> u64 {
        self.runs.iter().map(|r| r.elapsed_ns).sum()
    }

    pub fn mean_ms(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.total_elapsed_ns() as f64 / self.runs.len() as f64 / 1e6
    }

    /// Edges per second over all sessions.
    pub fn throughput_eps(&self) -> f64 {
        throughput(self.spec.sessions, &self.runs)
    }
}

/// `sessions · Σ edges / Σ elapsed`.
pub fn throughput(sessions: usize, runs: &[RunRecord]) -> f64 {
    let elapsed: u64 = runs.iter().map(|r| r.elapsed_ns).sum();
    if elapsed == 0 {
        return 0.0;
    }
    let edges: u64 = runs.iter().map(|r| r.edges).sum();
    sessions as f64 * edges as f64 / (elapsed as f64 / 1e9)
}

/// Sources for every run, drawn uniformly from the reachable vertices (all
/// vertices if none are reachable).
pub fn bfs_sources(graph: &Graph, count: usize, seed: u64) -> Vec<VertexId> {
    let n = graph.vertex_count() as VertexId;
    let mut candidates: Vec<VertexId> =
        (0..n).filter(|&v| graph.is_reachable(v as usize)).collect();
    if candidates.is_empty() {
        candidates = (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| *candidates.choose(&mut rng).expect("graph has vertices"))
        .collect()
}

/// Runs the benchmark. `model` is required in scheduler mode.
pub fn run_sessions(
    graph: &Graph,
    spec: &BenchmarkSpec,
    model: Option<&MachineModel>,
) -> Result<SessionReport> {
    spec.validate()?;
    if graph.vertex_count() == 0 {
        return Err(Error::EmptyInput);
    }
    if spec.mode == ExecMode::Scheduler && model.is_none() {
        return Err(Error::Precondition(
            "scheduler mode needs a machine profile; run `adagraph calibrate` first".into(),
        ));
    }
    let per_session = spec.runs_per_session();
    let sources = match spec.algorithm {
        Algorithm::Bfs => bfs_sources(graph, spec.total_runs(), spec.seed),
        _ => Vec::new(),
    };
    let pool = SharedPool::new(spec.threads);
    let base = {
        let mut ctx = ExecContext::sequential();
        ctx.mode = spec.mode;
        ctx.threads = spec.threads;
        ctx.cost = spec.cost;
        ctx.scheduler = spec.scheduler;
        ctx.pool = &pool;
        ctx.record_dispatch = spec.trace;
        if let Some(model) = model {
            ctx.latency = Some(model);
        }
        ctx
    };

    let session = |id: usize| -> Result<Vec<RunRecord>> {
        let _guard = pool.enter_session();
        let mut records = Vec::with_capacity(per_session);
        for run in 0..per_session {
            let source = sources.get(id * per_session + run).copied();
            let start = Instant::now();
            let (edges, iterations) = match (spec.algorithm, source) {
                (Algorithm::Bfs, Some(s)) => {
                    let r = bfs(graph, s, &base)?;
                    (r.edges_traversed, r.iterations)
                }
                (variant, _) => {
                    let r = pagerank(graph, variant, &spec.pagerank, &base)?;
                    (r.edges_processed, r.trace)
                }
            };
            let elapsed_ns = start.elapsed().as_nanos() as u64;
            records.push(RunRecord {
                session: id,
                run,
                source,
                elapsed_ns,
                edges,
                iterations: if spec.trace { iterations } else { Vec::new() },
            });
        }
        Ok(records)
    };

    let wall = Instant::now();
    let results: Vec<Result<Vec<RunRecord>>> = if spec.sessions == 1 {
        vec![session(0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..spec.sessions)
                .map(|id| scope.spawn(move || session(id)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("session panicked"))
                .collect()
        })
    };
    let wall_ns = wall.elapsed().as_nanos() as u64;
    let mut runs = Vec::with_capacity(spec.total_runs());
    for r in results {
        runs.extend(r?);
    }
    Ok(SessionReport {
        spec: spec.clone(),
        runs,
        wall_ns,
    })
}

fn variant_name(algorithm: Algorithm) -> (&'static str, &'static str) {
    match algorithm {
        Algorithm::Bfs => ("bfs", "top-down"),
        Algorithm::PrPush => ("pr", "push"),
        Algorithm::PrPull => ("pr", "pull"),
    }
}

/// One summary row; `Err` cells carry the error marker.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub algorithm: Algorithm,
    pub mode: ExecMode,
    pub dataset: String,
    pub sessions: usize,
    pub outcome: std::result::Result<(usize, f64, f64), String>,
}

impl CsvRow {
    pub fn from_report(report: &SessionReport) -> Self {
        CsvRow {
            algorithm: report.spec.algorithm,
            mode: report.spec.mode,
            dataset: report.spec.dataset.clone(),
            sessions: report.spec.sessions,
            outcome: Ok((report.runs.len(), report.mean_ms(), report.throughput_eps())),
        }
    }

    pub fn failed(spec: &BenchmarkSpec, error: &Error) -> Self {
        CsvRow {
            algorithm: spec.algorithm,
            mode: spec.mode,
            dataset: spec.dataset.clone(),
            sessions: spec.sessions,
            outcome: Err(error.to_string()),
        }
    }

    fn fields(&self) -> [String; 8] {
        let (algo, variant) = variant_name(self.algorithm);
        let (runs, mean, eps) = match &self.outcome {
            Ok((runs, mean, eps)) => (runs.to_string(), format!("{mean:.4}"), format!("{eps:.1}")),
            Err(_) => ("0".into(), ERROR_MARKER.into(), ERROR_MARKER.into()),
        };
        [
            algo.into(),
            variant.into(),
            self.mode.to_string(),
            self.dataset.clone(),
            self.sessions.to_string(),
            runs,
            mean,
            eps,
        ]
    }
}

pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(CSV_HEADER)?;
        Ok(CsvSink { writer })
    }

    pub fn write(&mut self, row: &CsvRow) -> Result<()> {
        self.writer.write_record(row.fields())?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Per-run rows from which the summary throughput can be recomputed.
pub fn write_raw_csv<W: Write>(report: &SessionReport, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["session", "run", "source", "elapsed_ns", "edges"])?;
    for r in &report.runs {
        writer.write_record([
            r.session.to_string(),
            r.run.to_string(),
            r.source.map(|s| s.to_string()).unwrap_or_default(),
            r.elapsed_ns.to_string(),
            r.edges.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Text trace: one `iter` line per iteration and one `pkg` line per
/// dispatched package.
pub fn format_trace(report: &SessionReport) -> String {
    let mut out = String::new();
    for run in &report.runs {
        for it in &run.iterations {
            let packaging = match it.packaging {
                Some(crate::scheduler::PackagingMode::CostBased) => "cost",
                Some(crate::scheduler::PackagingMode::Static) => "static",
                None => "-",
            };
            let _ = writeln!(
                out,
                "iter session={} run={} iteration={} frontier={} prep_ns={} run_ns={} prep_fraction={:.4} packages={} packaging={} t_min={} t_max={} profitable={} probes={} parallel={} sequential={} est_found={} found={}",
                run.session,
                run.run,
                it.iteration,
                it.frontier_len,
                it.prep_ns,
                it.run_ns,
                it.prep_fraction(),
                it.packages,
                packaging,
                it.bounds.t_min,
                it.bounds.t_max,
                it.bounds.parallel_profitable,
                it.probe_packages,
                it.parallel_packages,
                it.sequential_packages,
                it.estimated_found.map(|f| format!("{f:.1}")).unwrap_or_else(|| "-".into()),
                it.actual_found.map(|f| f.to_string()).unwrap_or_else(|| "-".into()),
            );
            for d in &it.dispatch {
                let _ = writeln!(
                    out,
                    "pkg session={} run={} iteration={} worker={} mode={} package={} elapsed_ns={}",
                    run.session,
                    run.run,
                    it.iteration,
                    d.worker,
                    d.mode.as_str(),
                    d.package,
                    d.elapsed_ns
                );
            }
        }
    }
    out
}

/// Sweep description read from a `key = value` file.
///
/// ```text
/// graphs = web.el, social.el     # edge-list files, relative to the matrix file
/// rmat_scales = 12, 14           # generated datasets
/// rmat_edge_factor = 16
/// rmat_seed = 1
/// algos = bfs, pr-push, pr-pull
/// modes = sequential, simple, scheduler
/// sessions = 1, 4, 8
/// seed = 1
/// runs_per_session = 5           # optional; default 50 (bfs) / 24 (pr)
/// threads = 8                    # optional; default: available parallelism
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub datasets: Vec<Dataset>,
    pub algorithms: Vec<Algorithm>,
    pub modes: Vec<ExecMode>,
    pub sessions: Vec<usize>,
    pub seed: u64,
    pub runs_per_session: Option<usize>,
    pub threads: Option<usize>,
}

fn list(kv: &KeyValues, key: &str) -> Vec<String> {
    kv.get(key)
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default()
}

fn parse_list<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<Vec<T>> {
    list(kv, key)
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse `{s}`")))
        })
        .collect()
}

impl Matrix {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let mut datasets: Vec<Dataset> = list(&kv, "graphs")
            .into_iter()
            .map(|g| Dataset::File(base_dir.join(g)))
            .collect();
        let edge_factor = kv.get_parsed::<f64>("rmat_edge_factor")?.unwrap_or(16.0);
        let rmat_seed = kv.get_parsed::<u64>("rmat_seed")?.unwrap_or(1);
        for scale in parse_list::<u32>(&kv, "rmat_scales")? {
            datasets.push(Dataset::Rmat(RmatParams::new(
                scale,
                edge_factor,
                rmat_seed,
            )));
        }
        if datasets.is_empty() {
            return Err(Error::InvalidParameter(
                "matrix needs `graphs` or `rmat_scales`".into(),
            ));
        }
        let mut algorithms: Vec<Algorithm> = parse_list(&kv, "algos")?;
        if algorithms.is_empty() {
            algorithms = Algorithm::ALL.to_vec();
        }
        let mut modes: Vec<ExecMode> = parse_list(&kv, "modes")?;
        if modes.is_empty() {
            modes = ExecMode::ALL.to_vec();
        }
        let mut sessions: Vec<usize> = parse_list(&kv, "sessions")?;
        if sessions.is_empty() {
            sessions = vec![1];
        }
        Ok(Matrix {
            datasets,
            algorithms,
            modes,
            sessions,
            seed: kv.get_parsed("seed")?.unwrap_or(1),
            runs_per_session: kv.get_parsed("runs_per_session")?,
            threads: kv.get_parsed("threads")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn cell_count(&self) -> usize {
        self.datasets.len() * self.algorithms.len() * self.modes.len() * self.sessions.len()
    }
}

/// Runs every cell of `matrix`, writing one row per cell as soon as it
/// completes. A failing cell (or dataset) yields error rows, not an abort.
pub fn run_matrix<W: Write>(
    matrix: &Matrix,
    model: Option<&MachineModel>,
    sink: &mut CsvSink<W>,
) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::with_capacity(matrix.cell_count());
    for dataset in &matrix.datasets {
        let graph = dataset.load();
        for &algorithm in &matrix.algorithms {
            for &mode in &matrix.modes {
                for &sessions in &matrix.sessions {
                    let mut spec = BenchmarkSpec::new(algorithm, mode, dataset.name(), sessions);
                    spec.seed = matrix.seed;
                    spec.runs_per_session = matrix.runs_per_session;
                    if let Some(t) = matrix.threads {
                        spec.threads = t;
                    }
                    let row = match &graph {
                        Ok(g) => match run_sessions(g, &spec, model) {
                            Ok(report) => CsvRow::from_report(&report),
                            Err(e) => CsvRow::failed(&spec, &e),
                        },
                        Err(e) => CsvRow::failed(&spec, e),
                    };
                    sink.write(&row)?;
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contention::tests::synthetic_table;

    fn small() -> Graph {
        generate_rmat(&RmatParams::new(8, 8.0, 2)).unwrap()
    }

    #[test]
    fn repetition_rule() {
        let g = small();
        let mut spec = BenchmarkSpec::new(Algorithm::PrPull, ExecMode::Sequential, "g", 1);
        spec.pagerank.max_iterations = 3;
        assert_eq!(run_sessions(&g, &spec, None).unwrap().runs.len(), 24);
        let spec = BenchmarkSpec::new(Algorithm::Bfs, ExecMode::Simple, "g", 4);
        let report = run_sessions(&g, &spec, None).unwrap();
        assert_eq!(report.runs.len(), 200);
        let recomputed =
            4.0 * report.total_edges() as f64 / (report.total_elapsed_ns() as f64 / 1e9);
        assert!((report.throughput_eps() - recomputed).abs() <= 1e-9 * recomputed);
    }

    #[test]
    fn scheduler_needs_model() {
        let g = small();
        let spec = BenchmarkSpec::new(Algorithm::Bfs, ExecMode::Scheduler, "g", 1);
        let err = run_sessions(&g, &spec, None).unwrap_err();
        assert!(err.to_string().contains("calibrate"));
        let model = MachineModel::new(synthetic_table());
        let mut spec = spec;
        spec.runs_per_session = Some(3);
        spec.trace = true;
        let report = run_sessions(&g, &spec, Some(&model)).unwrap();
        assert!(format_trace(&report)
            .lines()
            .any(|l| l.starts_with("iter ")));
    }

    #[test]
    fn sources_are_reachable_and_seeded() {
        let g = small();
        let a = bfs_sources(&g, 20, 9);
        assert_eq!(a, bfs_sources(&g, 20, 9));
        assert!(a.iter().all(|&s| g.is_reachable(s as usize)));
    }

    #[test]
    fn failed_cells_are_marked() {
        let text = "graphs = missing.el\nrmat_scales = 6\nalgos = bfs\nmodes = sequential, scheduler\nsessions = 1\nruns_per_session = 2\n";
        let matrix = Matrix::parse(text, Path::new("/nonexistent")).unwrap();
        assert_eq!(matrix.cell_count(), 4);
        let mut buf = Vec::new();
        let rows = {
            let mut sink = CsvSink::new(&mut buf).unwrap();
            run_matrix(&matrix, None, &mut sink).unwrap()
        };
        let ok = rows.iter().filter(|r| r.outcome.is_ok()).count();
        assert_eq!(ok, 1);
        let text = String::from_utf8(buf).unwrap();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let records: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(records.len(), 4);
        assert_eq!(records.iter().filter(|r| &r[6] == ERROR_MARKER).count(), 3);
    }
}
