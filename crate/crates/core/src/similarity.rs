//! Pairwise similarity tests and the neighbour graphs they induce.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{Bag, KernelSpec, KernelSums};

/// Numerical constant in the precondition on `tau` for the Gaussian threshold.
pub const THRESHOLD_PRECONDITION_C: f64 = 1e3;

/// Directed neighbour relation; row `i` lists the tasks accepted by task `i`.
/// The diagonal is always set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    n: usize,
    adj: Vec<bool>,
}

impl NeighborGraph {
    /// Builds a graph from a predicate; the diagonal is forced to true.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut adj = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                adj[i * n + j] = i == j || f(i, j);
            }
        }
        Self { n, adj }
    }

    /// Builds a graph from boolean rows; the diagonal is forced to true.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "adjacency row of length {} for {n} tasks",
                r.len()
            )));
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |_, _| false)
    }

    pub fn complete(n: usize) -> Self {
        Self::from_fn(n, |_, _| true)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    /// Indices `j` with `T_ij = 1`, including `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, &t)| t.then_some(j))
    }

    /// `|V_i|`, counting `i` itself.
    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&t| t).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| ((i + 1)..self.n).all(|j| self.contains(i, j) == self.contains(j, i)))
    }

    /// True when every edge of `self` is also an edge of `other`.
    pub fn is_subgraph_of(&self, other: &NeighborGraph) -> bool {
        self.n == other.n && self.adj.iter().zip(&other.adj).all(|(&a, &b)| !a || b)
    }

    /// Number of off-diagonal edges.
    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&t| t).count() - self.n
    }

    /// 0/1 adjacency matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| {
            if self.contains(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Which statistic the test is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Squared distance of sample means against `zeta * d / N`.
    Gaussian,
    /// Unbiased squared MMD against `zeta * sigma_hat_i^2`.
    Kme,
}

/// Parameters of the pairwise tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub zeta: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub alpha: f64,
    pub mode: TestMode,
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(invalid(format!(
                "zeta must be finite and >= 0, got {}",
                self.zeta
            )));
        }
        if !(self.tau > 0.0 && self.tau_prime > 0.0) {
            return Err(invalid("tau and tau' must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Threshold `zeta = (sqrt(2 + tau) - 4 sqrt(delta))^2` with
/// `delta = (2 ln B + ln(1/alpha)) / d`.
///
/// A `tau` below `max(C delta, sqrt(C delta))` only triggers a warning: the
/// calibration guarantee does not hold there. A negative inner difference is
/// clamped to zero, which makes the test reject everything but the diagonal.
pub fn gaussian_threshold(tau: f64, b: usize, alpha: f64, d: usize) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be positive, got {tau}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if b < 1 || d < 1 {
        return Err(invalid("B and d must be at least 1"));
    }
    let delta = (2.0 * (b as f64).ln() + (1.0 / alpha).ln()) / d as f64;
    let c_delta = THRESHOLD_PRECONDITION_C * delta;
    if tau < c_delta.max(c_delta.sqrt()) {
        log::warn!(
            "tau = {tau} is below the calibrated range (needs >= {:.4}); type II control is not guaranteed",
            c_delta.max(c_delta.sqrt())
        );
    }
    let inner = (2.0 + tau).sqrt() - 4.0 * delta.sqrt();
    if inner < 0.0 {
        log::warn!("threshold is degenerate for tau = {tau}, B = {b}, d = {d}; clamping to 0");
        return Ok(0.0);
    }
    Ok(inner * inner)
}

/// Symmetric graph with an edge wherever `dists[i, j] <= threshold`.
pub fn graph_from_sq_dists(dists: &Array2<f64>, threshold: f64) -> NeighborGraph {
    NeighborGraph::from_fn(dists.nrows(), |i, j| dists[[i, j]] <= threshold)
}

/// Pairwise squared Euclidean distances between rows.
pub fn pairwise_sq_dists(points: ArrayView2<'_, f64>) -> Array2<f64> {
    let b = points.nrows();
    let mut out = Array2::zeros((b, b));
    for i in 0..b {
        let xi = points.row(i);
        for j in (i + 1)..b {
            let v: f64 = xi
                .iter()
                .zip(points.row(j))
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Gaussian-mode graph: `T_ij = 1{ |mu_hat_i - mu_hat_j|^2 <= zeta d / N }`.
///
/// Rows of `muhats` are the sample means, each over `n` observations.
pub fn build_neighbor_graph_gaussian(
    muhats: ArrayView2<'_, f64>,
    zeta: f64,
    n: usize,
) -> Result<NeighborGraph> {
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(invalid(format!("zeta must be finite and >= 0, got {zeta}")));
    }
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    if muhats.nrows() == 0 {
        return Err(Error::EmptyInput("no tasks".into()));
    }
    let threshold = zeta * muhats.ncols() as f64 / n as f64;
    Ok(graph_from_sq_dists(&pairwise_sq_dists(muhats), threshold))
}

/// Kernel-mode graph from precomputed statistics:
/// `T_ij = 1{ U_ij < zeta sigma_hat_i^2 }`. Row `i` uses its own variance, so
/// the result need not be symmetric.
pub fn kme_graph_from_stats(mmd: &Array2<f64>, sigma2: &[f64], zeta: f64) -> NeighborGraph {
    // A zero-noise bag trusts only itself, even when the unbiased statistic dips below zero.
    NeighborGraph::from_fn(sigma2.len(), |i, j| {
        sigma2[i] > 0.0 && mmd[[i, j]] < zeta * sigma2[i]
    })
}

/// Kernel-mode graph over bags.
pub fn build_neighbor_graph_kme(
    bags: &[Bag],
    kernel: &KernelSpec,
    zeta: f64,
) -> Result<NeighborGraph> {
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(invalid(format!("zeta must be finite and >= 0, got {zeta}")));
    }
    let sums = KernelSums::new(bags, *kernel)?;
    let u = sums.mmd_matrix()?;
    let s = sums.naive_mse_all()?;
    Ok(kme_graph_from_stats(&u, &s, zeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn threshold_example() {
        let z = gaussian_threshold(1.0, 10, 0.05, 1000).unwrap();
        // (sqrt(3) - 4 sqrt(0.0076009))^2
        assert_abs_diff_eq!(z, 1.913569211626459, epsilon = 1e-12);
        assert_abs_diff_eq!(z, 1.91358, epsilon = 1e-4);
    }

    #[test]
    fn threshold_clamps_when_degenerate() {
        // d = 1 makes delta large enough for the inner term to go negative.
        assert_eq!(gaussian_threshold(0.1, 100, 0.05, 1).unwrap(), 0.0);
        assert!(gaussian_threshold(-1.0, 10, 0.05, 10).is_err());
        assert!(gaussian_threshold(1.0, 10, 1.5, 10).is_err());
    }

    #[test]
    fn gaussian_graph_boundary_is_inclusive() {
        // Points on a line at 0, 1, 3: squared distances 1, 4 and 9.
        let pts = array![[0.0], [1.0], [3.0]];
        // zeta * d / N = 4
        let g = build_neighbor_graph_gaussian(pts.view(), 4.0, 1).unwrap();
        assert!(g.contains(0, 1) && g.contains(1, 2));
        assert!(!g.contains(0, 2));
        assert!(g.is_symmetric());
    }

    #[test]
    fn zero_threshold_gives_identity() {
        let pts = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let g = build_neighbor_graph_gaussian(pts.view(), 0.0, 1).unwrap();
        assert_eq!(g, NeighborGraph::identity(3));
    }

    #[test]
    fn kme_graph_example() {
        let u = array![[0.0, 0.5], [0.5, 0.0]];
        let g = kme_graph_from_stats(&u, &[1.0, 0.2], 1.0);
        assert!(g.contains(0, 1));
        assert!(!g.contains(1, 0));
        assert!(!g.is_symmetric());
        // Strict inequality at the boundary.
        let g = kme_graph_from_stats(&u, &[0.5, 0.5], 1.0);
        assert_eq!(g, NeighborGraph::identity(2));
    }

    #[test]
    fn zero_variance_bag_rejects_all_others() {
        let bags = vec![
            Bag::new("a", Array2::from_elem((3, 1), 0.5)).unwrap(),
            Bag::new("b", array![[0.4], [0.6], [0.5]]).unwrap(),
        ];
        let g = build_neighbor_graph_kme(&bags, &KernelSpec::Linear, 100.0).unwrap();
        assert_eq!(g.degree(0), 1);
    }

    fn points() -> impl Strategy<Value = Array2<f64>> {
        (2usize..8, 1usize..4).prop_flat_map(|(b, d)| {
            proptest::collection::vec(-5.0f64..5.0, b * d)
                .prop_map(move |v| Array2::from_shape_vec((b, d), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn gaussian_graph_is_symmetric_reflexive_and_monotone(
            pts in points(), z1 in 0.0f64..5.0, dz in 0.0f64..5.0, n in 1usize..5
        ) {
            let small = build_neighbor_graph_gaussian(pts.view(), z1, n).unwrap();
            let large = build_neighbor_graph_gaussian(pts.view(), z1 + dz, n).unwrap();
            prop_assert!(small.is_symmetric());
            prop_assert!((0..small.len()).all(|i| small.contains(i, i)));
            prop_assert!(small.is_subgraph_of(&large));
        }

        #[test]
        fn kme_graph_is_reflexive_and_monotone(
            pts in points(), z1 in 0.0f64..5.0, dz in 0.0f64..5.0
        ) {
            let bags: Vec<Bag> = pts
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let rows = vec![r.to_vec(), r.iter().map(|v| v * 0.5 + 0.3).collect(), r.iter().map(|v| -v).collect()];
                    Bag::from_rows(format!("b{i}"), &rows).unwrap()
                })
                .collect();
            let k = KernelSpec::gaussian_rbf(1.5).unwrap();
            let small = build_neighbor_graph_kme(&bags, &k, z1).unwrap();
            let large = build_neighbor_graph_kme(&bags, &k, z1 + dz).unwrap();
            prop_assert!((0..small.len()).all(|i| small.contains(i, i)));
            prop_assert!(small.is_subgraph_of(&large));
        }
    }
}
