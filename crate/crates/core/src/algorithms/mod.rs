//! BFS and PageRank with sequential, simple-parallel and scheduled execution.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::cost::{
    estimate_footprint, min_vertices_for_parallel, thread_bounds_fast, AlgorithmDescriptor,
    BoundsProblem, CostModelConfig, ItemCounts, LatencyModel, ParallelCostCurve, SubCosts,
    ThreadBounds,
};
use crate::error::{Error, Result};
use crate::estimators::{self, FrontierSample, StatisticsMode, TraversalEstimate};
use crate::graph::{Csr, Graph, VertexId};
use crate::scheduler::{
    generate_packages, schedule_and_run, static_packages, DispatchMode, DispatchRecord,
    ExecutionPlan, NoWorkers, PackageCosts, PackageKernel, PackagingMode, SchedulerConfig,
    WorkerPool,
};

pub mod bfs;
pub mod pagerank;

pub use bfs::{bfs, BfsResult, UNREACHED};
pub use pagerank::{pagerank, PageRankParams, PageRankResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Bfs,
    PrPush,
    PrPull,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Bfs, Algorithm::PrPush, Algorithm::PrPull];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Bfs => "bfs",
            Algorithm::PrPush => "pr-push",
            Algorithm::PrPull => "pr-pull",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

/// Hand-counted operations of each kernel.
///
/// BFS (top-down), per frontier vertex: loop step (2 ops); frontier entry
/// and both adjacency offsets (3 loads). Per edge: loop step and visited test
/// (2 ops); target id and visited flag (2 loads). Per found vertex: branch
/// (1 op); level store and local-buffer push (2 mem); visited CAS (1 atomic).
///
/// PageRank push, per vertex: loop step (1 op); contribution and offsets
/// (3 loads). Per edge: add and loop step (2 ops); target id (1 load);
/// accumulator update (1 atomic).
///
/// PageRank pull, per vertex: loop step (1 op); both reverse offsets and the
/// accumulator store (3 mem). Per edge: add and loop step (2 ops); source id
/// and its contribution (2 loads). No atomics.
///
/// Footprints count the mutable per-vertex state only: visited flag and
/// level (5 bytes) for BFS, rank, contribution and accumulator (24 bytes)
/// for PageRank. Frontier queues hold 4-byte ids.
pub fn descriptor_for(algorithm: Algorithm) -> AlgorithmDescriptor {
    let (vertex, edge, found_vertex, bytes_per_vertex, bytes_per_frontier_entry) = match algorithm {
        Algorithm::Bfs => (
            ItemCounts::new(2, 3, 0),
            ItemCounts::new(2, 2, 0),
            ItemCounts::new(1, 2, 1),
            5,
            4,
        ),
        Algorithm::PrPush => (
            ItemCounts::new(1, 3, 0),
            ItemCounts::new(2, 1, 1),
            ItemCounts::new(0, 0, 0),
            24,
            0,
        ),
        Algorithm::PrPull => (
            ItemCounts::new(1, 3, 0),
            ItemCounts::new(2, 2, 0),
            ItemCounts::new(0, 0, 0),
            24,
            0,
        ),
    };
    AlgorithmDescriptor {
        name: algorithm.as_str().to_string(),
        vertex,
        edge,
        found_vertex,
        bytes_per_vertex,
        bytes_per_frontier_entry,
        constant_bytes: 0,
    }
}

/// Looks a descriptor up by name.
pub fn descriptor_by_name(name: &str) -> Result<AlgorithmDescriptor> {
    name.parse().map(descriptor_for)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecMode {
    Sequential,
    /// Equal-size packages on all threads, parallel kernels throughout.
    Simple,
    Scheduler,
}

impl ExecMode {
    pub const ALL: [ExecMode; 3] = [ExecMode::Sequential, ExecMode::Simple, ExecMode::Scheduler];

    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::Sequential => "sequential",
            ExecMode::Simple => "simple",
            ExecMode::Scheduler => "scheduler",
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExecMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode `{s}`")))
    }
}

/// Everything a kernel driver needs besides the graph.
#[derive(Clone, Copy)]
pub struct ExecContext<'a> {
    pub mode: ExecMode,
    /// Hardware threads available to one query (`P`).
    pub threads: usize,
    pub cost: CostModelConfig,
    pub scheduler: SchedulerConfig,
    /// Required in scheduler mode.
    pub latency: Option<&'a (dyn LatencyModel + Sync)>,
    pub pool: &'a dyn WorkerPool,
    /// Keep per-package dispatch records in the iteration traces.
    pub record_dispatch: bool,
}

impl<'a> ExecContext<'a> {
    pub fn sequential() -> Self {
        ExecContext {
            mode: ExecMode::Sequential,
            threads: 1,
            cost: CostModelConfig::default(),
            scheduler: SchedulerConfig::default(),
            latency: None,
            pool: &NoWorkers,
            record_dispatch: false,
        }
    }

    pub fn simple(threads: usize) -> Self {
        ExecContext {
            mode: ExecMode::Simple,
            threads: threads.max(1),
            ..Self::sequential()
        }
    }

    pub fn scheduler(
        latency: &'a (dyn LatencyModel + Sync),
        pool: &'a dyn WorkerPool,
        threads: usize,
    ) -> Self {
        ExecContext {
            mode: ExecMode::Scheduler,
            threads: threads.max(1),
            latency: Some(latency),
            pool,
            ..Self::sequential()
        }
    }

    fn latency(&self) -> Result<&'a (dyn LatencyModel + Sync)> {
        self.latency
            .ok_or_else(|| Error::Precondition("scheduler mode needs a machine model".into()))
    }
}

/// Per-iteration record of what the driver decided and how long it took.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    pub frontier_len: usize,
    /// Estimation, bounds and packaging.
    pub prep_ns: u64,
    /// Kernel execution including frontier merge.
    pub run_ns: u64,
    pub packages: usize,
    pub packaging: Option<PackagingMode>,
    pub bounds: ThreadBounds,
    pub statistics: Option<StatisticsMode>,
    pub estimated_found: Option<f64>,
    pub actual_found: Option<usize>,
    pub probe_packages: usize,
    pub parallel_packages: usize,
    pub sequential_packages: usize,
    pub dispatch: Vec<DispatchRecord>,
}

impl IterationTrace {
    fn new(iteration: usize, frontier_len: usize) -> Self {
        IterationTrace {
            iteration,
            frontier_len,
            prep_ns: 0,
            run_ns: 0,
            packages: 1,
            packaging: None,
            bounds: ThreadBounds::SEQUENTIAL,
            statistics: None,
            estimated_found: None,
            actual_found: None,
            probe_packages: 0,
            parallel_packages: 0,
            sequential_packages: 0,
            dispatch: Vec::new(),
        }
    }

    /// Share of the iteration spent preparing.
    pub fn prep_fraction(&self) -> f64 {
        let total = self.prep_ns + self.run_ns;
        if total == 0 {
            0.0
        } else {
            self.prep_ns as f64 / total as f64
        }
    }
}

/// Output of one planning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub plan: ExecutionPlan,
    pub estimate: Option<TraversalEstimate>,
    pub footprint: u64,
    /// Sequential per-vertex cost.
    pub seq_cost: f64,
}

/// Iteration sizes fed to the cost model.
#[derive(Debug, Clone, Copy)]
struct Sizes {
    frontier: f64,
    edges: f64,
    found: f64,
}

struct Planner<'a> {
    graph: &'a Graph,
    adjacency: &'a Csr,
    descriptor: &'a AlgorithmDescriptor,
    config: CostModelConfig,
    scheduler: &'a SchedulerConfig,
    latency: &'a dyn LatencyModel,
}

impl<'a> Planner<'a> {
    fn new(
        graph: &'a Graph,
        adjacency: &'a Csr,
        descriptor: &'a AlgorithmDescriptor,
        ctx: &'a ExecContext<'a>,
    ) -> Result<Self> {
        let latency: &dyn LatencyModel = ctx.latency()?;
        let config = CostModelConfig {
            max_threads: ctx.threads,
            ..ctx.cost
        };
        Ok(Planner {
            graph,
            adjacency,
            descriptor,
            config,
            scheduler: &ctx.scheduler,
            latency,
        })
    }

    fn footprint(&self, sizes: Sizes) -> Result<u64> {
        estimate_footprint(
            self.descriptor,
            self.graph.stats(),
            sizes.frontier as u64,
            sizes.found.round() as u64,
        )
    }

    fn per_vertex(&self, threads: usize, footprint: u64, sizes: Sizes) -> Result<f64> {
        SubCosts::evaluate(
            self.descriptor,
            threads,
            footprint,
            &self.config,
            self.latency,
        )
        .per_vertex(sizes.frontier, sizes.edges, sizes.found)
    }

    /// Sequential cost and whether the frontier clears the minimum size.
    fn gate(&self, sizes: Sizes) -> Result<(u64, f64, bool)> {
        let footprint = self.footprint(sizes)?;
        let seq_cost = self.per_vertex(1, footprint, sizes)?;
        let v_min = min_vertices_for_parallel(&self.config, seq_cost);
        let large = self.config.max_threads > 1 && sizes.frontier as u64 >= v_min;
        Ok((footprint, seq_cost, large))
    }

    fn plan(&self, frontier: &[VertexId], sizes: Sizes) -> Result<(ExecutionPlan, u64, f64)> {
        let (footprint, seq_cost, large) = self.gate(sizes)?;
        if !large {
            return Ok((
                ExecutionPlan::sequential(frontier.len(), seq_cost * sizes.frontier),
                footprint,
                seq_cost,
            ));
        }
        self.plan_parallel(frontier, sizes, footprint, seq_cost)
    }

    fn plan_parallel(
        &self,
        frontier: &[VertexId],
        sizes: Sizes,
        footprint: u64,
        seq_cost: f64,
    ) -> Result<(ExecutionPlan, u64, f64)> {
        let p = self.config.max_threads;
        let mut grid: Vec<usize> = self
            .latency
            .thread_grid()
            .into_iter()
            .filter(|&t| t >= 1 && t <= p)
            .collect();
        grid.push(1);
        grid.sort_unstable();
        grid.dedup();
        let curve = ParallelCostCurve::from_fn(&grid, |t| {
            self.per_vertex(t, footprint, sizes).unwrap_or(f64::MAX)
        })?;
        let bounds = thread_bounds_fast(&BoundsProblem {
            config: &self.config,
            seq_cost,
            parallel: &curve,
            vertices: frontier.len() as u64,
        });
        if !bounds.parallel_profitable {
            return Ok((
                ExecutionPlan::sequential(frontier.len(), seq_cost * sizes.frontier),
                footprint,
                seq_cost,
            ));
        }
        let sub = SubCosts::evaluate(
            self.descriptor,
            bounds.t_max,
            footprint,
            &self.config,
            self.latency,
        );
        let found_per_edge = if sizes.edges > 0.0 {
            sizes.found / sizes.edges
        } else {
            0.0
        };
        let costs = PackageCosts {
            vertex: sub.vertex,
            edge: sub.edge + found_per_edge * sub.found_vertex,
        };
        let plan = generate_packages(
            frontier,
            self.adjacency,
            self.graph.stats(),
            costs,
            bounds,
            self.scheduler,
        )?;
        Ok((plan, footprint, seq_cost))
    }
}

/// Per-run upper bound on the sequential cost of a frontier, so that small
/// iterations skip estimation altogether.
///
/// The per-item costs are maximised over every footprint a traversal of the
/// graph can reach. Found vertices never outnumber traversed edges, and the
/// estimated edge count is either `mean · |S|` or the exact degree sum of
/// the sampled frontier. A frontier whose bounded work stays below the
/// minimum parallel work would be planned sequentially anyway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequentialGate {
    vertex: f64,
    per_edge: f64,
    min_work: f64,
    mean_degree: f64,
    never_parallel: bool,
}

impl SequentialGate {
    pub fn new(graph: &Graph, descriptor: &AlgorithmDescriptor, ctx: &ExecContext) -> Result<Self> {
        let latency: &dyn LatencyModel = ctx.latency()?;
        let min_work = ctx.cost.min_parallel_work_ns();
        let mean_degree = graph.stats().mean_out_degree;
        if ctx.threads <= 1 {
            return Ok(SequentialGate {
                vertex: 0.0,
                per_edge: 0.0,
                min_work,
                mean_degree,
                never_parallel: true,
            });
        }
        let stats = graph.stats();
        let n = stats.vertex_count as u64;
        let smallest = estimate_footprint(descriptor, stats, 1, 0)?;
        let largest = estimate_footprint(descriptor, stats, n, n)?;
        let mut footprints = vec![largest];
        let mut m = smallest.max(1);
        while m < largest {
            footprints.push(m);
            m = m.saturating_mul(2);
        }
        let (mut vertex, mut per_edge) = (0.0f64, 0.0f64);
        for m in footprints {
            let sub = SubCosts::evaluate(descriptor, 1, m, &ctx.cost, latency);
            vertex = vertex.max(sub.vertex);
            per_edge = per_edge.max(sub.edge + sub.found_vertex);
        }
        Ok(SequentialGate {
            vertex,
            per_edge,
            min_work,
            mean_degree,
            never_parallel: false,
        })
    }

    /// One hardware thread: every iteration runs sequentially.
    pub fn never_parallel(&self) -> bool {
        self.never_parallel
    }

    /// True when `frontier` cannot reach the minimum parallel work.
    pub fn certainly_sequential(&self, graph: &Graph, frontier: &[VertexId]) -> bool {
        if self.never_parallel {
            return true;
        }
        let s = frontier.len() as f64;
        if s * self.vertex + self.mean_degree * s * self.per_edge >= self.min_work {
            return false;
        }
        if frontier.len() > estimators::SAMPLE_CAP {
            return false;
        }
        let csr = graph.forward();
        let edges: usize = frontier.iter().map(|&v| csr.degree(v as usize)).sum();
        s * self.vertex + edges as f64 * self.per_edge < self.min_work
    }
}

/// Plans one BFS-style iteration. The gate, if given, and then a cheap
/// global-statistics estimate decide whether the frontier can be worth
/// parallelising at all; only then is the frontier sampled.
pub fn prepare_traversal(
    graph: &Graph,
    descriptor: &AlgorithmDescriptor,
    ctx: &ExecContext,
    gate: Option<&SequentialGate>,
    frontier: &[VertexId],
    unvisited_count: usize,
) -> Result<Preparation> {
    if gate.is_some_and(|g| g.certainly_sequential(graph, frontier)) {
        return Ok(Preparation {
            plan: ExecutionPlan::sequential(frontier.len(), 0.0),
            estimate: None,
            footprint: 0,
            seq_cost: 0.0,
        });
    }
    let planner = Planner::new(graph, graph.forward(), descriptor, ctx)?;
    let stats = graph.stats();
    let len = frontier.len();
    let global = estimators::estimate_with(
        stats,
        len,
        unvisited_count,
        None,
        StatisticsMode::GlobalStats,
    )?;
    let sizes = Sizes {
        frontier: len as f64,
        edges: stats.mean_out_degree * len as f64,
        found: global.found_clamped,
    };
    let (footprint, seq_cost, large) = planner.gate(sizes)?;
    if !large {
        return Ok(Preparation {
            plan: ExecutionPlan::sequential(len, seq_cost * sizes.frontier),
            estimate: Some(global),
            footprint,
            seq_cost,
        });
    }
    let (estimate, sizes) = match estimators::select_statistics_mode(stats) {
        StatisticsMode::GlobalStats => (global, sizes),
        StatisticsMode::LocalSample => {
            let sample = FrontierSample::from_frontier(graph, frontier);
            let estimate = estimators::estimate_with(
                stats,
                len,
                unvisited_count,
                Some(&sample),
                StatisticsMode::LocalSample,
            )?;
            let sizes = Sizes {
                frontier: len as f64,
                edges: sample.mean_degree() * len as f64,
                found: estimate.found_clamped,
            };
            (estimate, sizes)
        }
    };
    let footprint = planner.footprint(sizes)?;
    let seq_cost = planner.per_vertex(1, footprint, sizes)?;
    let (plan, footprint, seq_cost) =
        planner.plan_parallel(frontier, sizes, footprint, seq_cost)?;
    Ok(Preparation {
        plan,
        estimate: Some(estimate),
        footprint,
        seq_cost,
    })
}

/// Plans a topology-centric pass over every vertex in `vertices`, scanning
/// `adjacency`. No estimation is needed: all edges are processed.
pub fn prepare_topology(
    graph: &Graph,
    adjacency: &Csr,
    descriptor: &AlgorithmDescriptor,
    ctx: &ExecContext,
    vertices: &[VertexId],
) -> Result<Preparation> {
    let planner = Planner::new(graph, adjacency, descriptor, ctx)?;
    let edges: usize = if vertices.len() == graph.vertex_count() {
        graph.edge_count()
    } else {
        vertices.iter().map(|&v| adjacency.degree(v as usize)).sum()
    };
    let sizes = Sizes {
        frontier: vertices.len() as f64,
        edges: edges as f64,
        found: 0.0,
    };
    let (plan, footprint, seq_cost) = planner.plan(vertices, sizes)?;
    Ok(Preparation {
        plan,
        estimate: None,
        footprint,
        seq_cost,
    })
}

/// Runs `kernel` over `len` frontier entries in the context's mode.
/// `plan` is consulted in scheduler mode only.
fn execute<K: PackageKernel>(
    kernel: &K,
    len: usize,
    plan: Option<&ExecutionPlan>,
    ctx: &ExecContext,
    trace: &mut IterationTrace,
) -> Vec<K::Local> {
    match ctx.mode {
        ExecMode::Sequential => {
            let mut local = kernel.local();
            kernel.sequential(0..len, &mut local);
            trace.sequential_packages = 1;
            vec![local]
        }
        ExecMode::Simple => {
            let packages = static_packages(
                len,
                ctx.scheduler.static_multiple * ctx.threads,
                ctx.scheduler.min_package_vertices,
                0.0,
            );
            trace.packages = packages.len();
            trace.parallel_packages = packages.len();
            crate::scheduler::run_static_parallel(&packages, kernel, ctx.threads)
        }
        ExecMode::Scheduler => {
            let plan = plan.expect("scheduler mode executes a plan");
            let (locals, report) = schedule_and_run(plan, kernel, ctx.pool, &ctx.scheduler);
            trace.packages = plan.packages.len();
            trace.packaging = Some(plan.mode);
            trace.bounds = plan.bounds;
            trace.probe_packages = report.count(DispatchMode::Probe);
            trace.parallel_packages = report.count(DispatchMode::Parallel);
            trace.sequential_packages = report.count(DispatchMode::Sequential);
            if ctx.record_dispatch {
                trace.dispatch = report.records;
            }
            locals
        }
    }
}

fn elapsed_ns(since: Instant) -> u64 {
    since.elapsed().as_nanos() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::ItemKind;

    #[test]
    fn descriptors_match_kernel_shape() {
        let pull = descriptor_for(Algorithm::PrPull);
        for kind in [ItemKind::Vertex, ItemKind::Edge, ItemKind::FoundVertex] {
            assert_eq!(pull.counts(kind).atomics, 0);
        }
        assert!(descriptor_for(Algorithm::PrPush).edge.atomics >= 1);
        assert!(descriptor_for(Algorithm::Bfs).found_vertex.mem >= 1);
        assert!(descriptor_by_name("sssp").is_err());
        assert_eq!(descriptor_by_name("pr-push").unwrap().name, "pr-push");
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        for m in ExecMode::ALL {
            assert_eq!(m.as_str().parse::<ExecMode>().unwrap(), m);
        }
        assert!("fast".parse::<ExecMode>().is_err());
    }

    #[test]
    fn gate_never_overrides_a_parallel_plan() {
        use crate::contention::{tests::synthetic_table, MachineModel};
        use crate::graph::{generate_rmat, RmatParams};
        use rand::{Rng, SeedableRng};

        let g = generate_rmat(&RmatParams::new(11, 16.0, 4)).unwrap();
        let model = MachineModel::new(synthetic_table());
        let ctx = ExecContext::scheduler(&model, &NoWorkers, 4);
        let desc = descriptor_for(Algorithm::Bfs);
        let gate = SequentialGate::new(&g, &desc, &ctx).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = g.vertex_count() as u32;
        let mut gated = 0;
        for _ in 0..300 {
            let len = rng.random_range(1..600);
            let frontier: Vec<u32> = (0..len).map(|_| rng.random_range(0..n)).collect();
            let unvisited = rng.random_range(0..=g.stats().reachable_count);
            if gate.certainly_sequential(&g, &frontier) {
                gated += 1;
                let full = prepare_traversal(&g, &desc, &ctx, None, &frontier, unvisited).unwrap();
                assert!(!full.plan.bounds.parallel_profitable);
            }
        }
        assert!(gated > 0);
    }
}
