//! Power-iteration PageRank with uniform teleportation and uniform
//! redistribution of dangling mass.

use super::KbError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig { damping: 0.85, tolerance: 1e-9, max_iter: 100 }
    }
}

#[derive(Clone, Debug)]
pub struct PageRankResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// L1 change of the last iteration.
    pub delta: f64,
}

/// PageRank over `n` nodes. Parallel edges count with multiplicity.
pub fn power_iteration(n: usize, edges: &[(usize, usize)], config: &PageRankConfig) -> Result<PageRankResult, KbError> {
    if n == 0 {
        return Err(KbError::EmptyGraph);
    }
    if !(config.damping > 0.0 && config.damping < 1.0) {
        return Err(KbError::InvalidParameters(format!("damping {} not in (0,1)", config.damping)));
    }
    if config.tolerance <= 0.0 || config.tolerance.is_nan() {
        return Err(KbError::InvalidParameters(format!("tolerance {} must be positive", config.tolerance)));
    }

    let mut out_degree = vec![0usize; n];
    for &(from, to) in edges {
        assert!(from < n && to < n, "edge ({from}, {to}) out of range for {n} nodes");
        out_degree[from] += 1;
    }

    let d = config.damping;
    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut delta = f64::INFINITY;

    while iterations < config.max_iter {
        iterations += 1;
        let dangling: f64 = rank.iter().zip(&out_degree).filter(|(_, &deg)| deg == 0).map(|(r, _)| r).sum();
        let base = (1.0 - d) * uniform + d * dangling * uniform;
        next.iter_mut().for_each(|x| *x = base);
        for &(from, to) in edges {
            next[to] += d * rank[from] / out_degree[from] as f64;
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);

        delta = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < config.tolerance {
            break;
        }
    }

    Ok(PageRankResult { scores: rank, iterations, delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycle_is_uniform() {
        let r = power_iteration(2, &[(0, 1), (1, 0)], &PageRankConfig::default()).unwrap();
        assert!((r.scores[0] - 0.5).abs() < 1e-12);
        assert!((r.scores[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn three_cycle_is_uniform() {
        let r = power_iteration(3, &[(0, 1), (1, 2), (2, 0)], &PageRankConfig::default()).unwrap();
        for s in r.scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = PageRankConfig { damping: 1.0, ..Default::default() };
        assert!(power_iteration(2, &[], &bad).is_err());
        let bad = PageRankConfig { tolerance: 0.0, ..Default::default() };
        assert!(power_iteration(2, &[], &bad).is_err());
        assert!(matches!(power_iteration(0, &[], &PageRankConfig::default()), Err(KbError::EmptyGraph)));
    }

    #[test]
    fn no_edges_is_uniform() {
        let r = power_iteration(4, &[], &PageRankConfig::default()).unwrap();
        assert!(r.scores.iter().all(|s| (s - 0.25).abs() < 1e-15));
    }
}
