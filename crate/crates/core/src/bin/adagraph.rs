use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adagraph::algorithms::{Algorithm, ExecMode};
use adagraph::contention::{
    calibrate, calibrate_memoized, calibration_thread_grid, resolve_profile_path, CacheHierarchy,
    CalibrationOptions, LatencyTable, MachineModel,
};
use adagraph::cost::KeyValues;
use adagraph::graph::{generate_rmat, RmatParams};
use adagraph::harness::{
    format_trace, run_matrix, run_sessions, write_raw_csv, BenchmarkSpec, CsvRow, CsvSink, Dataset,
    Matrix,
};
use adagraph::{Error, Result};

#[derive(Parser)]
#[command(
    name = "adagraph",
    version,
    about = "Adaptive-parallelism graph query engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure atomic update latency per cache level and thread count.
    Calibrate {
        /// Profile to write (default: $ADAGRAPH_PROFILE, then ./adagraph.profile).
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Largest thread count to measure.
        #[arg(long)]
        threads_max: Option<usize>,
        /// Cache capacities as `levelN = SIZE` lines; detected when omitted.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Edge-list length per benchmark run.
        #[arg(long, default_value_t = 1 << 21)]
        edges: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Re-measure even if the profile exists.
        #[arg(long)]
        force: bool,
    },
    /// Write an RMAT graph as an edge list.
    Rmat {
        #[arg(long)]
        scale: u32,
        #[arg(long, default_value_t = 16.0)]
        edge_factor: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark one algorithm/mode on one graph.
    Run {
        #[arg(long)]
        algo: String,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        /// Seed for BFS source selection.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Summary CSV (stdout when omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-run CSV.
        #[arg(long)]
        raw_csv: Option<PathBuf>,
        /// Iteration and package dispatch trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Hardware threads shared by all sessions.
        #[arg(long)]
        threads: Option<usize>,
        /// Runs per session instead of the standard 50 (BFS) / 24 (PageRank).
        #[arg(long)]
        runs: Option<usize>,
        /// Cost-model overrides as `key = value` lines.
        #[arg(long)]
        cost: Option<PathBuf>,
    },
    /// Sweep datasets × algorithms × modes × sessions from a matrix file.
    Bench {
        #[arg(long)]
        matrix: PathBuf,
        /// Summary CSV (stdout when omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_calibrate(
    profile: Option<PathBuf>,
    threads_max: Option<usize>,
    hierarchy: Option<PathBuf>,
    edges: usize,
    repetitions: usize,
    force: bool,
) -> Result<()> {
    let path = resolve_profile_path(profile.as_deref());
    let hierarchy = match hierarchy {
        Some(p) => CacheHierarchy::load(&p)?,
        None => CacheHierarchy::detect()?,
    };
    let options = CalibrationOptions {
        edges_per_run: edges,
        repetitions,
        ..Default::default()
    };
    let max = threads_max.unwrap_or(options.hardware_threads);
    if max > options.hardware_threads {
        return Err(Error::TooManyThreads {
            requested: max,
            available: options.hardware_threads,
        });
    }
    let grid = calibration_thread_grid(max);
    let (table, measured) = if force {
        let table = calibrate(&hierarchy, &grid, &options)?;
        table.save(&path)?;
        (table, true)
    } else {
        calibrate_memoized(&path, &hierarchy, &grid, &options)?
    };
    let verb = if measured { "wrote" } else { "reused" };
    eprintln!("{verb} {}", path.display());
    print!("{}", table.to_profile_string());
    Ok(())
}

fn cmd_rmat(scale: u32, edge_factor: f64, seed: u64, out: &Path) -> Result<()> {
    let graph = generate_rmat(&RmatParams::new(scale, edge_factor, seed))?;
    let mut w = BufWriter::new(File::create(out)?);
    graph.write_edge_list(&mut w)?;
    w.flush()?;
    eprintln!(
        "{}: {} vertices, {} edges",
        out.display(),
        graph.vertex_count(),
        graph.edge_count()
    );
    Ok(())
}

fn load_model(profile: Option<&Path>) -> Result<MachineModel> {
    let path = resolve_profile_path(profile);
    LatencyTable::load(&path).map(MachineModel::new)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    algo: &str,
    mode: &str,
    graph_path: &Path,
    sessions: usize,
    seed: u64,
    csv: Option<&Path>,
    raw_csv: Option<&Path>,
    trace: Option<&Path>,
    profile: Option<&Path>,
    threads: Option<usize>,
    runs: Option<usize>,
    cost: Option<&Path>,
) -> Result<()> {
    let algorithm: Algorithm = algo.parse()?;
    let mode: ExecMode = mode.parse()?;
    let model = match mode {
        ExecMode::Scheduler => Some(load_model(profile)?),
        _ => None,
    };
    let dataset = Dataset::File(graph_path.to_path_buf());
    let graph = dataset.load()?;
    let mut spec = BenchmarkSpec::new(algorithm, mode, dataset.name(), sessions);
    spec.seed = seed;
    spec.runs_per_session = runs;
    spec.trace = trace.is_some();
    if let Some(t) = threads {
        spec.threads = t;
    }
    spec.cost.max_threads = spec.threads;
    if let Some(p) = cost {
        spec.cost.apply_overrides(&KeyValues::load(p)?)?;
    }
    let report = run_sessions(&graph, &spec, model.as_ref())?;
    let mut sink = CsvSink::new(output(csv)?)?;
    sink.write(&CsvRow::from_report(&report))?;
    if let Some(p) = raw_csv {
        write_raw_csv(&report, BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = trace {
        std::fs::write(p, format_trace(&report))?;
    }
    Ok(())
}

fn cmd_bench(matrix: &Path, csv: Option<&Path>, profile: Option<&Path>) -> Result<()> {
    let matrix = Matrix::load(matrix)?;
    let model = if matrix.modes.contains(&ExecMode::Scheduler) {
        match load_model(profile) {
            Ok(m) => Some(m),
            Err(e) => {
                eprintln!("warning: {e}; scheduler cells will fail");
                None
            }
        }
    } else {
        None
    };
    let mut sink = CsvSink::new(output(csv)?)?;
    let rows = run_matrix(&matrix, model.as_ref(), &mut sink)?;
    for row in &rows {
        if let Err(e) = &row.outcome {
            eprintln!(
                "{} {} {} sessions={}: {e}",
                row.dataset, row.algorithm, row.mode, row.sessions
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate {
            profile,
            threads_max,
            hierarchy,
            edges,
            repetitions,
            force,
        } => cmd_calibrate(profile, threads_max, hierarchy, edges, repetitions, force),
        Command::Rmat {
            scale,
            edge_factor,
            seed,
            out,
        } => cmd_rmat(scale, edge_factor, seed, &out),
        Command::Run {
            algo,
            mode,
            graph,
            sessions,
            seed,
            csv,
            raw_csv,
            trace,
            profile,
            threads,
            runs,
            cost,
        } => cmd_run(
            &algo,
            &mode,
            &graph,
            sessions,
            seed,
            csv.as_deref(),
            raw_csv.as_deref(),
            trace.as_deref(),
            profile.as_deref(),
            threads,
            runs,
            cost.as_deref(),
        ),
        Command::Bench {
            matrix,
            csv,
            profile,
        } => cmd_bench(&matrix, csv.as_deref(), profile.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
