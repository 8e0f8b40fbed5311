//! Work packaging and the selective-sequential runtime.
//!
//! A plan partitions the frontier into contiguous packages. At run time the
//! scheduler asks the worker pool for up to `T_max` workers. Packages run in
//! parallel only once at least `T_min` workers are registered; until then one
//! worker probes packages sequentially while the others wait. After `K`
//! sequential probes all but one worker are released and the rest of the
//! plan finishes sequentially.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Instant;

use crate::cost::ThreadBounds;
use crate::error::{Error, Result};
use crate::graph::{Csr, GraphStats, VertexId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerConfig {
    /// Sequential probe packages before surplus workers are released (`K`).
    pub sequential_package_limit: usize,
    /// Static packages per thread.
    pub static_multiple: usize,
    /// Upper limit of cost-based packages per thread.
    pub cost_based_multiple: usize,
    pub degree_skew_threshold: f64,
    /// Cost-based packaging applies below `small_frontier_factor · T_max`
    /// frontier vertices.
    pub small_frontier_factor: usize,
    /// Smallest static package.
    pub min_package_vertices: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            sequential_package_limit: 4,
            static_multiple: 8,
            cost_based_multiple: 8,
            degree_skew_threshold: crate::estimators::DEGREE_SKEW_THRESHOLD,
            small_frontier_factor: 64,
            min_package_vertices: 256,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequential_package_limit == 0
            || self.static_multiple == 0
            || self.cost_based_multiple == 0
            || self.min_package_vertices == 0
        {
            return Err(Error::InvalidParameter(
                "scheduler limits and multiples must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Contiguous frontier segment assigned to one worker as a unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkPackage {
    pub start: usize,
    pub len: usize,
    pub cost: f64,
}

impl WorkPackage {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PackagingMode {
    CostBased,
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub packages: Vec<WorkPackage>,
    pub bounds: ThreadBounds,
    pub mode: PackagingMode,
}

impl ExecutionPlan {
    /// Whole frontier as one sequential package.
    pub fn sequential(len: usize, cost: f64) -> Self {
        ExecutionPlan {
            packages: vec![WorkPackage {
                start: 0,
                len,
                cost,
            }],
            bounds: ThreadBounds::SEQUENTIAL,
            mode: PackagingMode::Static,
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.packages.iter().map(|p| p.cost).sum()
    }
}

/// Cost of a frontier vertex: `vertex + out_degree · edge`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackageCosts {
    pub vertex: f64,
    pub edge: f64,
}

impl PackageCosts {
    fn of(&self, degree: usize) -> f64 {
        self.vertex + degree as f64 * self.edge
    }
}

/// Packages `frontier`; per-vertex costs use the degrees of `adjacency`, the
/// direction the kernel scans.
pub fn generate_packages(
    frontier: &[VertexId],
    adjacency: &Csr,
    stats: &GraphStats,
    costs: PackageCosts,
    bounds: ThreadBounds,
    config: &SchedulerConfig,
) -> Result<ExecutionPlan> {
    if frontier.is_empty() {
        return Err(Error::Precondition(
            "cannot package an empty frontier".into(),
        ));
    }
    let threads = bounds.t_max.max(1);
    let skewed = stats.degree_skew() > config.degree_skew_threshold;
    let small = frontier.len() < config.small_frontier_factor.saturating_mul(threads);
    if skewed && small {
        let vertex_costs: Vec<f64> = frontier
            .iter()
            .map(|&v| costs.of(adjacency.degree(v as usize)))
            .collect();
        if let Some(packages) =
            cost_based_packages(&vertex_costs, config.cost_based_multiple * threads)
        {
            return Ok(ExecutionPlan {
                packages,
                bounds,
                mode: PackagingMode::CostBased,
            });
        }
    }
    let per_vertex = costs.of(0) + stats.mean_out_degree * costs.edge;
    Ok(ExecutionPlan {
        packages: static_packages(
            frontier.len(),
            config.static_multiple * threads,
            config.min_package_vertices,
            per_vertex,
        ),
        bounds,
        mode: PackagingMode::Static,
    })
}

/// Greedy packaging: accumulate vertex costs until the work share
/// `total / target_count` is reached, then order packages heavy-first. A
/// vertex that would push a non-empty package beyond twice the share starts
/// its own package. `None` when there is no work to share.
pub fn cost_based_packages(vertex_costs: &[f64], target_count: usize) -> Option<Vec<WorkPackage>> {
    let total: f64 = vertex_costs.iter().sum();
    if !(total > 0.0) || target_count == 0 {
        return None;
    }
    let share = total / target_count as f64;
    let mut packages = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, &c) in vertex_costs.iter().enumerate() {
        if i > start && acc + c > 2.0 * share {
            packages.push(WorkPackage {
                start,
                len: i - start,
                cost: acc,
            });
            start = i;
            acc = 0.0;
        }
        acc += c;
        if acc >= share {
            packages.push(WorkPackage {
                start,
                len: i + 1 - start,
                cost: acc,
            });
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < vertex_costs.len() {
        // Only a (near) zero-cost tail can follow `target_count` full shares.
        if packages.len() >= target_count {
            let last = packages.last_mut().expect("target_count >= 1");
            last.len += vertex_costs.len() - start;
            last.cost += acc;
        } else {
            packages.push(WorkPackage {
                start,
                len: vertex_costs.len() - start,
                cost: acc,
            });
        }
    }
    // Stable: equal costs keep frontier order.
    packages.sort_by(|a, b| b.cost.total_cmp(&a.cost));
    Some(packages)
}

/// Equal-size segments; `count` packages unless that undercuts
/// `min_vertices` per package.
pub fn static_packages(
    len: usize,
    count: usize,
    min_vertices: usize,
    per_vertex_cost: f64,
) -> Vec<WorkPackage> {
    if len == 0 {
        return Vec::new();
    }
    let size = len.div_ceil(count.max(1)).max(min_vertices).max(1);
    (0..len)
        .step_by(size)
        .map(|start| {
            let len = size.min(len - start);
            WorkPackage {
                start,
                len,
                cost: len as f64 * per_vertex_cost,
            }
        })
        .collect()
}

/// Kernel pair over frontier index ranges. `sequential` may use plain
/// updates and only ever runs while no other package executes; `parallel`
/// must protect shared writes with atomics.
pub trait PackageKernel: Sync {
    /// Per-worker state, merged by the caller.
    type Local: Send;

    fn local(&self) -> Self::Local;
    fn sequential(&self, range: Range<usize>, local: &mut Self::Local);
    fn parallel(&self, range: Range<usize>, local: &mut Self::Local);
}

/// Source of helper workers shared by concurrent queries.
pub trait WorkerPool: Sync {
    /// Grants up to `wanted` additional workers.
    fn acquire(&self, wanted: usize) -> usize;
    fn release(&self, count: usize);
}

/// Never grants a worker.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoWorkers;

impl WorkerPool for NoWorkers {
    fn acquire(&self, _wanted: usize) -> usize {
        0
    }
    fn release(&self, _count: usize) {}
}

/// Fixed number of hardware threads shared by all sessions. Each running
/// session occupies one thread for its own driver.
#[derive(Debug)]
pub struct SharedPool {
    capacity: usize,
    in_use: AtomicUsize,
}

impl SharedPool {
    pub fn new(capacity: usize) -> Self {
        SharedPool {
            capacity,
            in_use: AtomicUsize::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn in_use(&self) -> usize {
        self.in_use.load(Ordering::Relaxed)
    }

    /// Marks the calling thread as busy until the guard drops.
    pub fn enter_session(&self) -> SessionGuard<'_> {
        self.in_use.fetch_add(1, Ordering::AcqRel);
        SessionGuard { pool: self }
    }
}

impl WorkerPool for SharedPool {
    fn acquire(&self, wanted: usize) -> usize {
        let mut granted = 0;
        let _ = self
            .in_use
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |used| {
                granted = self.capacity.saturating_sub(used).min(wanted);
                Some(used + granted)
            });
        granted
    }

    fn release(&self, count: usize) {
        self.in_use.fetch_sub(count, Ordering::AcqRel);
    }
}

pub struct SessionGuard<'a> {
    pool: &'a SharedPool,
}

impl Drop for SessionGuard<'_> {
    fn drop(&mut self) {
        self.pool.release(1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchMode {
    /// Sequential package while waiting for enough workers.
    Probe,
    Sequential,
    Parallel,
}

impl DispatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DispatchMode::Probe => "probe",
            DispatchMode::Sequential => "sequential",
            DispatchMode::Parallel => "parallel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchRecord {
    pub worker: usize,
    pub mode: DispatchMode,
    pub package: usize,
    /// Registered workers when the package was handed out.
    pub registered: usize,
    pub elapsed_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    /// Completion order.
    pub records: Vec<DispatchRecord>,
    pub workers_granted: usize,
    pub max_concurrent: usize,
}

impl RunReport {
    pub fn count(&self, mode: DispatchMode) -> usize {
        self.records.iter().filter(|r| r.mode == mode).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Probing,
    Parallel,
    Sequential { owner: usize },
}

struct State {
    next: usize,
    registered: usize,
    phase: Phase,
    probe_running: bool,
    probes: usize,
    active: usize,
    max_active: usize,
    granted: usize,
    records: Vec<DispatchRecord>,
}

struct Protocol<'a, K: PackageKernel> {
    plan: &'a ExecutionPlan,
    kernel: &'a K,
    probe_limit: usize,
    state: Mutex<State>,
    wake: Condvar,
}

impl<K: PackageKernel> Protocol<'_, K> {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn execute(
        &self,
        mut st: MutexGuard<'_, State>,
        worker: usize,
        mode: DispatchMode,
        local: &mut K::Local,
    ) -> MutexGuard<'_, State> {
        let package = st.next;
        st.next += 1;
        st.active += 1;
        st.max_active = st.max_active.max(st.active);
        let registered = st.registered;
        drop(st);
        let range = self.plan.packages[package].range();
        let start = Instant::now();
        match mode {
            DispatchMode::Parallel => self.kernel.parallel(range, local),
            DispatchMode::Probe | DispatchMode::Sequential => self.kernel.sequential(range, local),
        }
        let elapsed_ns = start.elapsed().as_nanos() as u64;
        let mut st = self.lock();
        st.active -= 1;
        st.records.push(DispatchRecord {
            worker,
            mode,
            package,
            registered,
            elapsed_ns,
        });
        st
    }

    /// Runs packages until the plan is exhausted or the worker is released.
    /// `poll` asks the pool for more workers after each probe.
    fn worker(&self, id: usize, mut poll: Option<&mut dyn FnMut()>) -> K::Local {
        let mut local = self.kernel.local();
        let n = self.plan.packages.len();
        let t_min = self.plan.bounds.t_min;
        let mut st = self.lock();
        while st.next < n {
            match st.phase {
                Phase::Parallel => st = self.execute(st, id, DispatchMode::Parallel, &mut local),
                Phase::Sequential { owner } if owner == id => {
                    st = self.execute(st, id, DispatchMode::Sequential, &mut local)
                }
                Phase::Sequential { .. } => break,
                Phase::Probing => {
                    if st.probe_running {
                        st = self.wake.wait(st).unwrap_or_else(|e| e.into_inner());
                    } else if st.registered >= t_min {
                        st.phase = Phase::Parallel;
                        self.wake.notify_all();
                    } else if st.probes >= self.probe_limit {
                        st.phase = Phase::Sequential { owner: id };
                        self.wake.notify_all();
                    } else {
                        st.probe_running = true;
                        st = self.execute(st, id, DispatchMode::Probe, &mut local);
                        st.probe_running = false;
                        st.probes += 1;
                        if let Some(poll) = poll.as_mut() {
                            drop(st);
                            poll();
                            st = self.lock();
                        }
                        self.wake.notify_all();
                    }
                }
            }
        }
        st.registered -= 1;
        self.wake.notify_all();
        local
    }
}

/// Executes `plan` under the selective-sequential protocol. The calling
/// thread is the first worker. Returns the per-worker state of every worker
/// that took part.
pub fn schedule_and_run<K: PackageKernel>(
    plan: &ExecutionPlan,
    kernel: &K,
    pool: &dyn WorkerPool,
    config: &SchedulerConfig,
) -> (Vec<K::Local>, RunReport) {
    let n = plan.packages.len();
    if n == 0 {
        return (Vec::new(), RunReport::default());
    }
    if !plan.bounds.parallel_profitable {
        let mut local = kernel.local();
        let mut report = RunReport {
            max_concurrent: 1,
            ..Default::default()
        };
        for (idx, package) in plan.packages.iter().enumerate() {
            let start = Instant::now();
            kernel.sequential(package.range(), &mut local);
            report.records.push(DispatchRecord {
                worker: 0,
                mode: DispatchMode::Sequential,
                package: idx,
                registered: 1,
                elapsed_ns: start.elapsed().as_nanos() as u64,
            });
        }
        return (vec![local], report);
    }

    let t_max = plan.bounds.t_max.max(1);
    let granted = pool.acquire(t_max - 1);
    let protocol = Protocol {
        plan,
        kernel,
        probe_limit: config.sequential_package_limit.max(1),
        state: Mutex::new(State {
            next: 0,
            registered: 1 + granted,
            phase: Phase::Probing,
            probe_running: false,
            probes: 0,
            active: 0,
            max_active: 0,
            granted,
            records: Vec::with_capacity(n),
        }),
        wake: Condvar::new(),
    };

    let mut locals = Vec::new();
    std::thread::scope(|scope| {
        let protocol = &protocol;
        let helper = move |id: usize| {
            scope.spawn(move || {
                let local = protocol.worker(id, None);
                pool.release(1);
                local
            })
        };
        let mut handles: Vec<_> = (1..=granted).map(helper).collect();
        let mut next_id = granted + 1;
        let mut poll = || {
            let want = {
                let st = protocol.lock();
                t_max.saturating_sub(st.registered)
            };
            if want == 0 {
                return;
            }
            let more = pool.acquire(want);
            if more == 0 {
                return;
            }
            {
                let mut st = protocol.lock();
                st.registered += more;
                st.granted += more;
            }
            for _ in 0..more {
                handles.push(helper(next_id));
                next_id += 1;
            }
        };
        locals.push(protocol.worker(0, Some(&mut poll)));
        for h in handles {
            locals.push(h.join().expect("scheduler worker panicked"));
        }
    });

    let st = protocol
        .state
        .into_inner()
        .unwrap_or_else(|e| e.into_inner());
    let report = RunReport {
        records: st.records,
        workers_granted: st.granted,
        max_concurrent: st.max_active,
    };
    (locals, report)
}

/// Plain parallel execution of `packages` on `threads` workers with dynamic
/// dispatch and no profitability checks.
pub fn run_static_parallel<K: PackageKernel>(
    packages: &[WorkPackage],
    kernel: &K,
    threads: usize,
) -> Vec<K::Local> {
    let threads = threads.clamp(1, packages.len().max(1));
    let next = AtomicUsize::new(0);
    let work = || {
        let mut local = kernel.local();
        loop {
            let idx = next.fetch_add(1, Ordering::Relaxed);
            let Some(package) = packages.get(idx) else {
                break;
            };
            kernel.parallel(package.range(), &mut local);
        }
        local
    };
    if threads == 1 {
        return vec![work()];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (1..threads).map(|_| scope.spawn(work)).collect();
        let mut locals = vec![work()];
        locals.extend(
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked")),
        );
        locals
    })
}
