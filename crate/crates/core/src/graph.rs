//! Immutable CSR graph storage with a reverse (transposed) adjacency and
//! statistics gathered while the adjacency lists are built.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type VertexId = u32;

/// Compressed sparse row adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
}

impl Csr {
    /// Builds the adjacency with a counting sort keyed on the source. Edges of
    /// one source keep their input order.
    fn from_edges(vertex_count: usize, edges: &[(VertexId, VertexId)]) -> Self {
        let mut offsets = vec![0usize; vertex_count + 1];
        for &(src, _) in edges {
            offsets[src as usize + 1] += 1;
        }
        for v in 0..vertex_count {
            offsets[v + 1] += offsets[v];
        }
        let mut cursor = offsets[..vertex_count].to_vec();
        let mut targets = vec![0; edges.len()];
        for &(src, dst) in edges {
            let slot = &mut cursor[src as usize];
            targets[*slot] = dst;
            *slot += 1;
        }
        Csr { offsets, targets }
    }

    fn transpose(&self) -> Self {
        let vertex_count = self.offsets.len() - 1;
        let mut offsets = vec![0usize; vertex_count + 1];
        for &dst in &self.targets {
            offsets[dst as usize + 1] += 1;
        }
        for v in 0..vertex_count {
            offsets[v + 1] += offsets[v];
        }
        let mut cursor = offsets[..vertex_count].to_vec();
        let mut targets = vec![0; self.targets.len()];
        for src in 0..vertex_count {
            for &dst in &self.targets[self.offsets[src]..self.offsets[src + 1]] {
                let slot = &mut cursor[dst as usize];
                targets[*slot] = src as VertexId;
                *slot += 1;
            }
        }
        Csr { offsets, targets }
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[VertexId] {
        &self.targets
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub fn row(&self, v: usize) -> &[VertexId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Degree statistics collected at construction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub mean_out_degree: f64,
    pub max_out_degree: usize,
    /// Vertices that are neither isolated nor without an incoming edge.
    pub reachable_count: usize,
    pub vertex_count: usize,
    pub edge_count: usize,
}

impl GraphStats {
    /// Ratio of maximum to mean out-degree, the cheap variance indicator.
    pub fn degree_skew(&self) -> f64 {
        if self.mean_out_degree > 0.0 {
            self.max_out_degree as f64 / self.mean_out_degree
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    vertex_count: usize,
    forward: Csr,
    reverse: Csr,
    stats: GraphStats,
}

impl Graph {
    /// Builds a graph from a directed edge list. Duplicate edges and self-loops
    /// are kept.
    pub fn from_edges(vertex_count: usize, edges: &[(VertexId, VertexId)]) -> Result<Self> {
        if vertex_count > VertexId::MAX as usize + 1 {
            return Err(Error::Overflow(format!(
                "vertex count {vertex_count} does not fit 32-bit vertex ids"
            )));
        }
        for &(src, dst) in edges {
            let worst = src.max(dst);
            if worst as usize >= vertex_count {
                return Err(Error::VertexOutOfRange {
                    vertex: worst as u64,
                    vertex_count,
                });
            }
        }
        let forward = Csr::from_edges(vertex_count, edges);
        let reverse = forward.transpose();
        let stats = compute_stats(&forward, &reverse);
        Ok(Graph {
            vertex_count,
            forward,
            reverse,
            stats,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.forward.targets.len()
    }

    pub fn stats(&self) -> &GraphStats {
        &self.stats
    }

    pub fn forward(&self) -> &Csr {
        &self.forward
    }

    pub fn reverse(&self) -> &Csr {
        &self.reverse
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.vertex_count {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v as u64,
                vertex_count: self.vertex_count,
            })
        }
    }

    pub fn out_degree(&self, v: usize) -> Result<usize> {
        self.check_vertex(v)?;
        Ok(self.forward.degree(v))
    }

    pub fn in_degree(&self, v: usize) -> Result<usize> {
        self.check_vertex(v)?;
        Ok(self.reverse.degree(v))
    }

    pub fn neighbors(&self, v: usize) -> Result<&[VertexId]> {
        self.check_vertex(v)?;
        Ok(self.forward.row(v))
    }

    pub fn in_neighbors(&self, v: usize) -> Result<&[VertexId]> {
        self.check_vertex(v)?;
        Ok(self.reverse.row(v))
    }

    /// Iterates the forward edges in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        (0..self.vertex_count).flat_map(move |src| {
            self.forward
                .row(src)
                .iter()
                .map(move |&dst| (src as VertexId, dst))
        })
    }

    /// True if `v` has at least one incoming edge.
    #[inline]
    pub fn is_reachable(&self, v: usize) -> bool {
        self.reverse.degree(v) > 0
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# vertices {} edges {}",
            self.vertex_count,
            self.edge_count()
        )?;
        for (src, dst) in self.edges() {
            writeln!(out, "{src}\t{dst}")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn compute_stats(forward: &Csr, reverse: &Csr) -> GraphStats {
    let vertex_count = forward.offsets.len() - 1;
    let edge_count = forward.targets.len();
    let max_out_degree = (0..vertex_count)
        .map(|v| forward.degree(v))
        .max()
        .unwrap_or(0);
    // An incoming edge already rules out isolation.
    let reachable_count = (0..vertex_count).filter(|&v| reverse.degree(v) > 0).count();
    let mean_out_degree = if vertex_count == 0 {
        0.0
    } else {
        edge_count as f64 / vertex_count as f64
    };
    GraphStats {
        mean_out_degree,
        max_out_degree,
        reachable_count,
        vertex_count,
        edge_count,
    }
}

pub fn build_stats(graph: &Graph) -> GraphStats {
    compute_stats(&graph.forward, &graph.reverse)
}

/// Reads a whitespace separated edge list. Lines starting with `#` are
/// comments; blank lines are skipped.
pub fn ingest_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id: Option<u64> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next_id = |what: &str| -> Result<VertexId> {
            let token = fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("missing {what} vertex"),
            })?;
            token.parse::<VertexId>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid {what} vertex id {token:?}"),
            })
        };
        let src = next_id("source")?;
        let dst = next_id("target")?;
        if let Some(extra) = fields.next() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unexpected trailing token {extra:?}"),
            });
        }
        let hi = src.max(dst) as u64;
        max_id = Some(max_id.map_or(hi, |m| m.max(hi)));
        edges.push((src, dst));
    }
    let max_id = max_id.ok_or(Error::EmptyInput)?;
    Graph::from_edges(max_id as usize + 1, &edges)
}

/// Parameters for the recursive-matrix generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmatParams {
    pub scale: u32,
    pub edge_factor: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub seed: u64,
}

impl Default for RmatParams {
    fn default() -> Self {
        RmatParams {
            scale: 10,
            edge_factor: 16.0,
            a: 0.57,
            b: 0.19,
            c: 0.19,
            d: 0.05,
            seed: 1,
        }
    }
}

impl RmatParams {
    pub fn new(scale: u32, edge_factor: f64, seed: u64) -> Self {
        RmatParams {
            scale,
            edge_factor,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 1 {
            return Err(Error::InvalidParameter("rmat scale must be >= 1".into()));
        }
        if !(self.edge_factor > 0.0) || !self.edge_factor.is_finite() {
            return Err(Error::InvalidParameter(
                "rmat edge factor must be positive".into(),
            ));
        }
        let probs = [self.a, self.b, self.c, self.d];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "rmat quadrant probabilities must lie in [0, 1]".into(),
            ));
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "rmat quadrant probabilities must sum to 1".into(),
            ));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> Result<usize> {
        if self.scale > VertexId::BITS {
            return Err(Error::Overflow(format!(
                "rmat scale {} exceeds 32-bit vertex ids",
                self.scale
            )));
        }
        1usize
            .checked_shl(self.scale)
            .ok_or_else(|| Error::Overflow(format!("rmat scale {}", self.scale)))
    }

    pub fn edge_count(&self) -> Result<usize> {
        let edges = (self.edge_factor * self.vertex_count()? as f64).round();
        if edges >= usize::MAX as f64 {
            return Err(Error::Overflow(format!(
                "rmat edge count {edges} overflows"
            )));
        }
        Ok(edges as usize)
    }
}

/// Generates the raw RMAT edge list. Deterministic for a fixed seed.
pub fn rmat_edges(params: &RmatParams) -> Result<Vec<(VertexId, VertexId)>> {
    params.validate()?;
    let vertex_count = params.vertex_count()?;
    if vertex_count > VertexId::MAX as usize + 1 {
        return Err(Error::Overflow(format!(
            "rmat scale {} exceeds 32-bit vertex ids",
            params.scale
        )));
    }
    let edge_count = params.edge_count()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let ab = params.a + params.b;
    let abc = ab + params.c;
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let (mut src, mut dst) = (0u64, 0u64);
        for _ in 0..params.scale {
            let r: f64 = rng.random();
            let (row, col) = if r < params.a {
                (0, 0)
            } else if r < ab {
                (0, 1)
            } else if r < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            src = (src << 1) | row;
            dst = (dst << 1) | col;
        }
        edges.push((src as VertexId, dst as VertexId));
    }
    Ok(edges)
}

pub fn generate_rmat(params: &RmatParams) -> Result<Graph> {
    let edges = rmat_edges(params)?;
    Graph::from_edges(params.vertex_count()?, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn ingest_simple_path() {
        let g = ingest_edge_list("0 1\n1 2".as_bytes()).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn ingest_comment_and_self_loop() {
        let g = ingest_edge_list("# c\n0 0".as_bytes()).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.neighbors(0).unwrap(), &[0]);
        assert_eq!(g.stats().reachable_count, 1);
    }

    #[test]
    fn ingest_reports_line_number() {
        match ingest_edge_list("0 x".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match ingest_edge_list("0 1\n\n# ok\n2".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_empty() {
        assert!(matches!(
            ingest_edge_list("# only comments\n".as_bytes()),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            ingest_edge_list("".as_bytes()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn path_stats_and_accessors() {
        let g = path3();
        let s = build_stats(&g);
        assert!((s.mean_out_degree - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.max_out_degree, 1);
        assert_eq!(s.reachable_count, 2);
        assert_eq!(g.out_degree(0).unwrap(), 1);
        assert_eq!(g.in_neighbors(1).unwrap(), &[0]);
        assert!(matches!(
            g.out_degree(3),
            Err(Error::VertexOutOfRange { vertex: 3, .. })
        ));
    }

    #[test]
    fn edgeless_and_triangle_stats() {
        let empty = Graph::from_edges(3, &[]).unwrap();
        let s = empty.stats();
        assert_eq!(s.mean_out_degree, 0.0);
        assert_eq!(s.reachable_count, 0);
        assert_eq!(empty.out_degree(2).unwrap(), 0);
        assert!(empty.neighbors(2).unwrap().is_empty());

        let tri = Graph::from_edges(3, &[(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]).unwrap();
        let s = tri.stats();
        assert_eq!(s.mean_out_degree, 2.0);
        assert_eq!(s.max_out_degree, 2);
        assert_eq!(s.reachable_count, 3);
    }

    #[test]
    fn rmat_is_deterministic() {
        let p = RmatParams::new(3, 2.0, 42);
        assert_eq!(rmat_edges(&p).unwrap(), rmat_edges(&p).unwrap());
        let g = generate_rmat(&RmatParams::new(2, 1.0, 7)).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.vertex_count(), 4);
    }

    #[test]
    fn rmat_is_skewed() {
        let g = generate_rmat(&RmatParams::new(10, 16.0, 3)).unwrap();
        let s = g.stats();
        assert!(s.max_out_degree as f64 / s.mean_out_degree > 1.1);
    }

    #[test]
    fn rmat_rejects_bad_params() {
        let mut p = RmatParams::new(4, 2.0, 1);
        p.a = 0.6;
        assert!(rmat_edges(&p).is_err());
        assert!(rmat_edges(&RmatParams::new(0, 2.0, 1)).is_err());
        assert!(rmat_edges(&RmatParams::new(4, 0.0, 1)).is_err());
        assert!(matches!(
            rmat_edges(&RmatParams::new(40, 16.0, 1)),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn write_then_ingest_round_trip() {
        let g = generate_rmat(&RmatParams::new(5, 4.0, 11)).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = ingest_edge_list(buf.as_slice()).unwrap();
        let mut a: Vec<_> = g.edges().collect();
        let mut b: Vec<_> = back.edges().collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    fn edge_lists() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
        (1usize..40).prop_flat_map(|n| {
            let v = 0..n as u32;
            (Just(n), prop::collection::vec((v.clone(), v), 0..120))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn stats_match_brute_force((n, edges) in edge_lists()) {
            let g = Graph::from_edges(n, &edges).unwrap();
            let mut out = vec![0usize; n];
            let mut inc = vec![0usize; n];
            for &(s, d) in &edges {
                out[s as usize] += 1;
                inc[d as usize] += 1;
            }
            let s = g.stats();
            prop_assert_eq!(s.edge_count, edges.len());
            prop_assert_eq!(s.max_out_degree, out.iter().copied().max().unwrap());
            prop_assert_eq!(s.reachable_count, inc.iter().filter(|&&d| d > 0).count());
            prop_assert!((s.mean_out_degree * n as f64 - edges.len() as f64).abs() < 1e-9);
            prop_assert!(s.mean_out_degree <= s.max_out_degree as f64 + 1e-12);
            let degree_sum: usize = (0..n).map(|v| g.out_degree(v).unwrap()).sum();
            prop_assert_eq!(degree_sum, edges.len());
            prop_assert_eq!(g.forward().offsets()[0], 0);
            prop_assert_eq!(g.forward().offsets()[n], edges.len());
        }

        #[test]
        fn transpose_is_an_involution((n, edges) in edge_lists()) {
            let g = Graph::from_edges(n, &edges).unwrap();
            let mut fwd: Vec<_> = g.edges().collect();
            let mut rev: Vec<_> = (0..n)
                .flat_map(|v| g.in_neighbors(v).unwrap().iter().map(move |&u| (u, v as u32)))
                .collect();
            fwd.sort_unstable();
            rev.sort_unstable();
            prop_assert_eq!(&fwd, &rev);
            let twice = g.reverse().transpose();
            prop_assert_eq!(twice.offsets(), g.forward().offsets());
            let mut again: Vec<_> = (0..n)
                .flat_map(|v| twice.row(v).iter().map(move |&d| (v as u32, d)))
                .collect();
            again.sort_unstable();
            prop_assert_eq!(fwd, again);
        }
    }
}
