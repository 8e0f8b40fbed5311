//! Top-down breadth-first search.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::time::Instant;

use super::{
    descriptor_for, elapsed_ns, execute, prepare_traversal, Algorithm, ExecContext, ExecMode,
    IterationTrace, SequentialGate,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::scheduler::{ExecutionPlan, PackageKernel};

pub const UNREACHED: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct BfsResult {
    pub levels: Vec<u32>,
    /// Edges scanned over all iterations.
    pub edges_traversed: u64,
    /// Once-per-run planning setup (scheduler mode).
    pub setup_ns: u64,
    pub iterations: Vec<IterationTrace>,
}

impl BfsResult {
    pub fn reached(&self) -> usize {
        self.levels.iter().filter(|&&l| l != UNREACHED).count()
    }
}

#[derive(Default)]
struct Local {
    next: Vec<VertexId>,
    edges: u64,
}

struct Kernel<'a> {
    graph: &'a Graph,
    frontier: &'a [VertexId],
    visited: &'a [AtomicBool],
    levels: &'a [AtomicU32],
    level: u32,
}

impl PackageKernel for Kernel<'_> {
    type Local = Local;

    fn local(&self) -> Local {
        Local::default()
    }

    fn sequential(&self, range: Range<usize>, local: &mut Local) {
        let csr = self.graph.forward();
        for &v in &self.frontier[range] {
            let row = csr.row(v as usize);
            local.edges += row.len() as u64;
            for &w in row {
                let w = w as usize;
                if !self.visited[w].load(Ordering::Relaxed) {
                    self.visited[w].store(true, Ordering::Relaxed);
                    self.levels[w].store(self.level, Ordering::Relaxed);
                    local.next.push(w as VertexId);
                }
            }
        }
    }

    fn parallel(&self, range: Range<usize>, local: &mut Local) {
        let csr = self.graph.forward();
        for &v in &self.frontier[range] {
            let row = csr.row(v as usize);
            local.edges += row.len() as u64;
            for &w in row {
                let w = w as usize;
                // Cheap read first; the CAS decides the single winner.
                if !self.visited[w].load(Ordering::Relaxed)
                    && self.visited[w]
                        .compare_exchange(false, true, Ordering::Relaxed, Ordering::Relaxed)
                        .is_ok()
                {
                    self.levels[w].store(self.level, Ordering::Relaxed);
                    local.next.push(w as VertexId);
                }
            }
        }
    }
}

pub fn bfs(graph: &Graph, source: VertexId, ctx: &ExecContext) -> Result<BfsResult> {
    let n = graph.vertex_count();
    if source as usize >= n {
        return Err(Error::VertexOutOfRange {
            vertex: source as u64,
            vertex_count: n,
        });
    }
    let descriptor = descriptor_for(Algorithm::Bfs);
    let visited: Vec<AtomicBool> = (0..n).map(|_| AtomicBool::new(false)).collect();
    let levels: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(UNREACHED)).collect();
    visited[source as usize].store(true, Ordering::Relaxed);
    levels[source as usize].store(0, Ordering::Relaxed);
    let setup_start = Instant::now();
    let gate = match ctx.mode {
        ExecMode::Scheduler => Some(SequentialGate::new(graph, &descriptor, ctx)?),
        _ => None,
    };
    let setup_ns = elapsed_ns(setup_start);

    let reachable = graph.stats().reachable_count;
    // Every vertex found by the traversal has an incoming edge, so it counts
    // towards the reachable set.
    let mut visited_reachable = usize::from(graph.is_reachable(source as usize));
    let mut frontier = vec![source];
    let mut edges_traversed = 0;
    let mut iterations = Vec::new();
    let mut level = 0u32;

    while !frontier.is_empty() {
        level += 1;
        let mut trace = IterationTrace::new(iterations.len(), frontier.len());
        let prep_start = Instant::now();
        let plan = if gate.as_ref().is_some_and(SequentialGate::never_parallel) {
            Some(ExecutionPlan::sequential(frontier.len(), 0.0))
        } else if ctx.mode == ExecMode::Scheduler {
            let prep = prepare_traversal(
                graph,
                &descriptor,
                ctx,
                gate.as_ref(),
                &frontier,
                reachable - visited_reachable,
            )?;
            trace.statistics = prep.estimate.map(|e| e.mode);
            trace.estimated_found = prep.estimate.map(|e| e.found_clamped);
            Some(prep.plan)
        } else {
            None
        };
        trace.prep_ns = elapsed_ns(prep_start);

        let run_start = Instant::now();
        let kernel = Kernel {
            graph,
            frontier: &frontier,
            visited: &visited,
            levels: &levels,
            level,
        };
        let locals = execute(&kernel, frontier.len(), plan.as_ref(), ctx, &mut trace);
        let found: usize = locals.iter().map(|l| l.next.len()).sum();
        let mut next = Vec::with_capacity(found);
        for local in locals {
            edges_traversed += local.edges;
            next.extend_from_slice(&local.next);
        }
        trace.run_ns = elapsed_ns(run_start);
        trace.actual_found = Some(found);
        visited_reachable += found;
        iterations.push(trace);
        frontier = next;
    }

    Ok(BfsResult {
        levels: levels.into_iter().map(AtomicU32::into_inner).collect(),
        edges_traversed,
        setup_ns,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contention::tests::synthetic_table;
    use crate::contention::MachineModel;
    use crate::graph::{generate_rmat, RmatParams};
    use crate::scheduler::SharedPool;
    use proptest::prelude::*;

    fn reference_levels(graph: &Graph, source: VertexId) -> Vec<u32> {
        let mut levels = vec![UNREACHED; graph.vertex_count()];
        let mut queue = std::collections::VecDeque::from([source]);
        levels[source as usize] = 0;
        while let Some(v) = queue.pop_front() {
            for &w in graph.neighbors(v as usize).unwrap() {
                if levels[w as usize] == UNREACHED {
                    levels[w as usize] = levels[v as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        levels
    }

    #[test]
    fn path_and_sink() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let r = bfs(&g, 0, &ExecContext::sequential()).unwrap();
        assert_eq!(r.levels, vec![0, 1, 2]);
        assert_eq!(r.edges_traversed, 2);
        let r = bfs(&g, 2, &ExecContext::sequential()).unwrap();
        assert_eq!(r.levels, vec![UNREACHED, UNREACHED, 0]);
        assert!(bfs(&g, 3, &ExecContext::sequential()).is_err());
    }

    #[test]
    fn modes_agree_on_rmat() {
        let g = generate_rmat(&RmatParams::new(12, 16.0, 3)).unwrap();
        let model = MachineModel::new(synthetic_table());
        let pool = SharedPool::new(4);
        let oracle = bfs(&g, 0, &ExecContext::sequential()).unwrap();
        assert_eq!(oracle.levels, reference_levels(&g, 0));
        let simple = bfs(&g, 0, &ExecContext::simple(4)).unwrap();
        let sched = bfs(&g, 0, &ExecContext::scheduler(&model, &pool, 4)).unwrap();
        assert_eq!(simple.levels, oracle.levels);
        assert_eq!(sched.levels, oracle.levels);
        assert_eq!(sched.edges_traversed, oracle.edges_traversed);
        assert_eq!(pool.in_use(), 0);
        // Large frontiers should have been planned in parallel.
        assert!(sched
            .iterations
            .iter()
            .any(|t| t.bounds.parallel_profitable));
        assert!(sched
            .iterations
            .iter()
            .filter(|t| t.bounds.parallel_profitable)
            .all(|t| t.statistics.is_some()));
    }

    #[test]
    fn scheduler_without_model_fails() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let ctx = ExecContext {
            mode: ExecMode::Scheduler,
            ..ExecContext::sequential()
        };
        assert!(bfs(&g, 0, &ctx).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn levels_respect_edges(n in 1usize..200, raw in prop::collection::vec((0u32..200, 0u32..200), 0..600), src in 0u32..200) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n as u32, b % n as u32)).collect();
            let g = Graph::from_edges(n, &edges).unwrap();
            let s = src % n as u32;
            let r = bfs(&g, s, &ExecContext::simple(3)).unwrap();
            prop_assert_eq!(&r.levels, &reference_levels(&g, s));
            for (u, v) in g.edges() {
                let (lu, lv) = (r.levels[u as usize], r.levels[v as usize]);
                if lu != UNREACHED {
                    prop_assert!(lv != UNREACHED && lv <= lu + 1);
                }
            }
        }
    }
}
