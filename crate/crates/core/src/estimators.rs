//! Traversal behaviour estimators.
//!
//! Every frontier vertex `v` is modelled as visiting each reachable vertex
//! independently with probability `deg⁺(v) / |V_reach|`. The probability that a
//! reachable vertex is touched by nobody is the product of the complements over
//! the frontier. With low degree variance the product collapses to a power of
//! the mean degree term; otherwise it is evaluated on a prefix sample of the
//! frontier and extrapolated geometrically.

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphStats, VertexId};

/// Frontier vertices inspected when sampling local statistics.
pub const SAMPLE_CAP: usize = 8192;

/// Max/mean out-degree ratio above which local statistics are sampled.
pub const DEGREE_SKEW_THRESHOLD: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticsMode {
    GlobalStats,
    LocalSample,
}

pub fn select_statistics_mode(stats: &GraphStats) -> StatisticsMode {
    if stats.mean_out_degree <= 0.0 {
        return StatisticsMode::GlobalStats;
    }
    if stats.max_out_degree as f64 / stats.mean_out_degree > DEGREE_SKEW_THRESHOLD {
        StatisticsMode::LocalSample
    } else {
        StatisticsMode::GlobalStats
    }
}

/// Out-degrees of the first `SAMPLE_CAP` entries of a frontier queue.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierSample {
    degrees: Vec<u32>,
    frontier_len: usize,
}

impl FrontierSample {
    pub fn from_frontier(graph: &Graph, frontier: &[VertexId]) -> Self {
        let csr = graph.forward();
        let degrees = frontier
            .iter()
            .take(SAMPLE_CAP)
            .map(|&v| csr.degree(v as usize) as u32)
            .collect();
        FrontierSample {
            degrees,
            frontier_len: frontier.len(),
        }
    }

    /// Sample built from explicit degrees; `degrees` is truncated to the cap.
    pub fn from_degrees(mut degrees: Vec<u32>, frontier_len: usize) -> Self {
        degrees.truncate(SAMPLE_CAP.min(frontier_len));
        FrontierSample {
            degrees,
            frontier_len,
        }
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn sampled_count(&self) -> usize {
        self.degrees.len()
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier_len
    }

    pub fn mean_degree(&self) -> f64 {
        if self.degrees.is_empty() {
            0.0
        } else {
            self.degrees.iter().map(|&d| d as f64).sum::<f64>() / self.degrees.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversalEstimate {
    pub touched: f64,
    pub found_raw: f64,
    pub found_clamped: f64,
    pub unvisited_count: usize,
    pub mode: StatisticsMode,
}

/// Probability that a given reachable vertex is touched by no frontier vertex.
fn miss_probability(
    stats: &GraphStats,
    frontier_len: usize,
    sample: Option<&FrontierSample>,
) -> f64 {
    let reach = stats.reachable_count as f64;
    if frontier_len == 0 {
        return 1.0;
    }
    match sample {
        Some(sample) if sample.sampled_count() > 0 => {
            let mut log_product = 0.0;
            for &deg in sample.degrees() {
                let p = deg as f64 / reach;
                if p >= 1.0 {
                    return 0.0;
                }
                log_product += (-p).ln_1p();
            }
            let exponent = frontier_len as f64 / sample.sampled_count() as f64;
            (log_product * exponent).exp()
        }
        _ => {
            let p = stats.mean_out_degree / reach;
            if p >= 1.0 {
                return 0.0;
            }
            ((-p).ln_1p() * frontier_len as f64).exp()
        }
    }
}

/// Expected number of distinct vertices touched from a frontier of
/// `frontier_len` vertices. A sample switches to the per-vertex product.
pub fn estimate_touched(
    stats: &GraphStats,
    frontier_len: usize,
    sample: Option<&FrontierSample>,
) -> f64 {
    let reach = stats.reachable_count as f64;
    if stats.reachable_count == 0 {
        return 0.0;
    }
    let miss = miss_probability(stats, frontier_len, sample);
    ((1.0 - miss) * reach).clamp(0.0, reach)
}

/// Expected number of newly found vertices. Returns the formula value as
/// written and the value clamped to `[0, min(touched, unvisited_count)]`.
pub fn estimate_found(
    stats: &GraphStats,
    frontier_len: usize,
    unvisited_count: usize,
    sample: Option<&FrontierSample>,
) -> Result<(f64, f64)> {
    if unvisited_count > stats.reachable_count {
        return Err(Error::Precondition(format!(
            "unvisited count {unvisited_count} exceeds reachable count {}",
            stats.reachable_count
        )));
    }
    if stats.reachable_count == 0 {
        return Ok((0.0, 0.0));
    }
    let reach = stats.reachable_count as f64;
    let miss = miss_probability(stats, frontier_len, sample);
    let unvisited_ratio = unvisited_count as f64 / reach;
    let raw = (1.0 - unvisited_ratio * miss) * reach;
    let touched = ((1.0 - miss) * reach).clamp(0.0, reach);
    let clamped = raw.min(touched).min(unvisited_count as f64).max(0.0);
    Ok((raw, clamped))
}

/// Runs both estimators in the mode chosen from the global statistics.
pub fn estimate(
    graph: &Graph,
    frontier: &[VertexId],
    unvisited_count: usize,
) -> Result<TraversalEstimate> {
    let stats = graph.stats();
    let mode = select_statistics_mode(stats);
    let sample = match mode {
        StatisticsMode::LocalSample => Some(FrontierSample::from_frontier(graph, frontier)),
        StatisticsMode::GlobalStats => None,
    };
    estimate_with(
        stats,
        frontier.len(),
        unvisited_count,
        sample.as_ref(),
        mode,
    )
}

pub fn estimate_with(
    stats: &GraphStats,
    frontier_len: usize,
    unvisited_count: usize,
    sample: Option<&FrontierSample>,
    mode: StatisticsMode,
) -> Result<TraversalEstimate> {
    let touched = estimate_touched(stats, frontier_len, sample);
    let (found_raw, found_clamped) = estimate_found(stats, frontier_len, unvisited_count, sample)?;
    Ok(TraversalEstimate {
        touched,
        found_raw,
        found_clamped,
        unvisited_count,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(reach: usize, mean: f64, max: usize) -> GraphStats {
        GraphStats {
            mean_out_degree: mean,
            max_out_degree: max,
            reachable_count: reach,
            vertex_count: reach,
            edge_count: (mean * reach as f64) as usize,
        }
    }

    #[test]
    fn mode_threshold() {
        assert_eq!(
            select_statistics_mode(&stats(10, 10.0, 11)),
            StatisticsMode::GlobalStats
        );
        assert_eq!(
            select_statistics_mode(&stats(10, 1.0, 2)),
            StatisticsMode::LocalSample
        );
        assert_eq!(
            select_statistics_mode(&stats(10, 3.0, 3)),
            StatisticsMode::GlobalStats
        );
        assert_eq!(
            select_statistics_mode(&stats(10, 0.0, 0)),
            StatisticsMode::GlobalStats
        );
    }

    #[test]
    fn touched_examples() {
        let s = stats(1000, 2.0, 2);
        assert_eq!(estimate_touched(&s, 0, None), 0.0);
        // 1000 * (1 - 0.998^500), evaluated in extended precision.
        let expected = 632.488_745_142_841_1_f64;
        let got = estimate_touched(&s, 500, None);
        assert!((got - 632.5).abs() < 0.1, "{got}");
        assert!((got - expected).abs() < 1e-9, "{got}");

        let s4 = stats(4, 1.0, 1);
        let sample = FrontierSample::from_degrees(vec![1, 1, 1, 1], 4);
        let got = estimate_touched(&s4, 4, Some(&sample));
        // 4 * (1 - (3/4)^4) = 4 * 175/256
        assert!((got - 2.734375).abs() < 1e-12, "{got}");
    }

    #[test]
    fn oversized_degree_is_a_certain_visit() {
        let s = stats(4, 1.0, 9);
        let sample = FrontierSample::from_degrees(vec![9, 1], 2);
        assert_eq!(estimate_touched(&s, 2, Some(&sample)), 4.0);
    }

    #[test]
    fn sample_is_capped_and_extrapolated() {
        let s = stats(100_000, 2.0, 50);
        let degrees = vec![2u32; 20_000];
        let sample = FrontierSample::from_degrees(degrees, 20_000);
        assert_eq!(sample.sampled_count(), SAMPLE_CAP);
        // Uniform sample degrees reproduce the global-statistics power law.
        let local = estimate_touched(&s, 20_000, Some(&sample));
        let global = estimate_touched(&s, 20_000, None);
        assert!((local - global).abs() < 1e-6 * global);
    }

    #[test]
    fn found_examples() {
        let s = stats(1000, 2.0, 2);
        let (raw, _) = estimate_found(&s, 500, 1000, None).unwrap();
        assert_eq!(raw, estimate_touched(&s, 500, None));

        let s = stats(100, 2.0, 2);
        let (raw, clamped) = estimate_found(&s, 0, 70, None).unwrap();
        assert!((raw - 30.0).abs() < 1e-12);
        assert_eq!(clamped, 0.0);

        let (_, clamped) = estimate_found(&s, 50, 0, None).unwrap();
        assert_eq!(clamped, 0.0);

        assert!(estimate_found(&s, 5, 101, None).is_err());
    }

    proptest! {
        #[test]
        fn touched_monotone(reach in 1usize..100_000, mean in 0.0f64..50.0, s1 in 0usize..100_000, ds in 0usize..1000, dm in 0.0f64..5.0) {
            let a = estimate_touched(&stats(reach, mean, 0), s1, None);
            let b = estimate_touched(&stats(reach, mean, 0), s1 + ds, None);
            let c = estimate_touched(&stats(reach, mean + dm, 0), s1, None);
            prop_assert!(b + 1e-9 >= a);
            prop_assert!(c + 1e-9 >= a);
            prop_assert!((0.0..=reach as f64).contains(&a));
        }

        #[test]
        fn touched_saturates(reach in 1usize..1_000_000, mean in 1.0f64..64.0) {
            let t = estimate_touched(&stats(reach, mean, 0), 1_000_000_000, None);
            prop_assert!((t - reach as f64).abs() <= 1e-6);
        }

        #[test]
        fn found_is_bounded(reach in 1usize..50_000, mean in 0.0f64..40.0, frontier in 0usize..10_000, frac in 0.0f64..=1.0) {
            let s = stats(reach, mean, 0);
            let unvisited = (reach as f64 * frac) as usize;
            let touched = estimate_touched(&s, frontier, None);
            let (_, clamped) = estimate_found(&s, frontier, unvisited, None).unwrap();
            prop_assert!(clamped <= touched);
            prop_assert!(clamped <= unvisited as f64);
            prop_assert!(clamped >= 0.0);
        }
    }
}
