//! PageRank in push (scatter) and pull (gather) form.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::{
    descriptor_for, elapsed_ns, execute, prepare_topology, Algorithm, ExecContext, ExecMode,
    IterationTrace,
};
use crate::error::{Error, Result};
use crate::graph::{Csr, Graph, VertexId};
use crate::scheduler::{ExecutionPlan, PackageKernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankParams {
    pub damping: f64,
    /// Convergence threshold on the L1 change of the rank vector.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            epsilon: 1e-7,
            max_iterations: 100,
        }
    }
}

impl PageRankParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping {} outside (0, 1)",
                self.damping
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub ranks: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Rank sum after every iteration.
    pub rank_sums: Vec<f64>,
    /// Edges processed over all iterations.
    pub edges_processed: u64,
    /// One-off planning cost; every iteration reuses the plan.
    pub prep_ns: u64,
    pub trace: Vec<IterationTrace>,
}

fn load(cell: &AtomicU64) -> f64 {
    f64::from_bits(cell.load(Ordering::Relaxed))
}

fn store(cell: &AtomicU64, value: f64) {
    cell.store(value.to_bits(), Ordering::Relaxed)
}

struct Push<'a> {
    csr: &'a Csr,
    contrib: &'a [f64],
    acc: &'a [AtomicU64],
}

impl PackageKernel for Push<'_> {
    type Local = u64;

    fn local(&self) -> u64 {
        0
    }

    fn sequential(&self, range: Range<usize>, edges: &mut u64) {
        for u in range {
            let c = self.contrib[u];
            let row = self.csr.row(u);
            *edges += row.len() as u64;
            for &v in row {
                let cell = &self.acc[v as usize];
                store(cell, load(cell) + c);
            }
        }
    }

    fn parallel(&self, range: Range<usize>, edges: &mut u64) {
        for u in range {
            let c = self.contrib[u];
            let row = self.csr.row(u);
            *edges += row.len() as u64;
            for &v in row {
                let _ = self.acc[v as usize].fetch_update(
                    Ordering::Relaxed,
                    Ordering::Relaxed,
                    |bits| Some((f64::from_bits(bits) + c).to_bits()),
                );
            }
        }
    }
}

struct Pull<'a> {
    reverse: &'a Csr,
    contrib: &'a [f64],
    acc: &'a [AtomicU64],
}

impl Pull<'_> {
    fn gather(&self, range: Range<usize>, edges: &mut u64) {
        for v in range {
            let row = self.reverse.row(v);
            *edges += row.len() as u64;
            let sum: f64 = row.iter().map(|&u| self.contrib[u as usize]).sum();
            store(&self.acc[v], sum);
        }
    }
}

impl PackageKernel for Pull<'_> {
    type Local = u64;

    fn local(&self) -> u64 {
        0
    }

    // Each vertex owns its accumulator, so both variants are plain writes.
    fn sequential(&self, range: Range<usize>, edges: &mut u64) {
        self.gather(range, edges)
    }

    fn parallel(&self, range: Range<usize>, edges: &mut u64) {
        self.gather(range, edges)
    }
}

pub fn pagerank(
    graph: &Graph,
    variant: Algorithm,
    params: &PageRankParams,
    ctx: &ExecContext,
) -> Result<PageRankResult> {
    params.validate()?;
    if variant == Algorithm::Bfs {
        return Err(Error::InvalidParameter(
            "bfs is not a PageRank variant".into(),
        ));
    }
    let n = graph.vertex_count();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let forward = graph.forward();
    let scanned = match variant {
        Algorithm::PrPull => graph.reverse(),
        _ => forward,
    };

    let prep_start = Instant::now();
    let plan: Option<ExecutionPlan> = if ctx.mode == ExecMode::Scheduler {
        let vertices: Vec<VertexId> = (0..n as VertexId).collect();
        let descriptor = descriptor_for(variant);
        Some(prepare_topology(graph, scanned, &descriptor, ctx, &vertices)?.plan)
    } else {
        None
    };
    let prep_ns = elapsed_ns(prep_start);

    let d = params.damping;
    let inv_n = 1.0 / n as f64;
    let mut ranks = vec![inv_n; n];
    let mut contrib = vec![0.0; n];
    let acc: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let mut rank_sums = Vec::new();
    let mut trace = Vec::new();
    let mut edges_processed = 0;
    let mut converged = false;

    for iteration in 0..params.max_iterations {
        let mut it = IterationTrace::new(iteration, n);
        let run_start = Instant::now();
        let mut dangling = 0.0;
        for (u, c) in contrib.iter_mut().enumerate() {
            let deg = forward.degree(u);
            if deg == 0 {
                dangling += ranks[u];
                *c = 0.0;
            } else {
                *c = ranks[u] / deg as f64;
            }
        }
        let locals = match variant {
            Algorithm::PrPull => {
                let kernel = Pull {
                    reverse: scanned,
                    contrib: &contrib,
                    acc: &acc,
                };
                execute(&kernel, n, plan.as_ref(), ctx, &mut it)
            }
            _ => {
                for cell in &acc {
                    store(cell, 0.0);
                }
                let kernel = Push {
                    csr: forward,
                    contrib: &contrib,
                    acc: &acc,
                };
                execute(&kernel, n, plan.as_ref(), ctx, &mut it)
            }
        };
        edges_processed += locals.iter().sum::<u64>();

        let base = (1.0 - d) * inv_n + d * dangling * inv_n;
        let mut delta = 0.0;
        let mut sum = 0.0;
        for (r, cell) in ranks.iter_mut().zip(&acc) {
            let next = base + d * load(cell);
            delta += (next - *r).abs();
            sum += next;
            *r = next;
        }
        it.run_ns = elapsed_ns(run_start);
        rank_sums.push(sum);
        trace.push(it);
        if delta < params.epsilon {
            converged = true;
            break;
        }
    }
    if let Some(first) = trace.first_mut() {
        first.prep_ns = prep_ns;
    }

    Ok(PageRankResult {
        iterations: rank_sums.len(),
        ranks,
        converged,
        rank_sums,
        edges_processed,
        prep_ns,
        trace,
    })
}
