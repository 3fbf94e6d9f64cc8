//! Weight-matrix estimators.
//!
//! Every estimator is a linear combination of the naive per-task estimates,
//! `mu_tilde_i = sum_j W_ij mu_hat_j`, so each one is represented by its
//! weight matrix `W`. Positive-part James-Stein is the exception: it is
//! non-linear and is applied directly to explicit vectors.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{Bag, KernelSpec, KernelSums};
use crate::linalg;
use crate::similarity::NeighborGraph;

/// Estimation methods compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ne,
    RKmse,
    PpJamesStein,
    MtaConst,
    MtaStb,
    Stb0,
    StbTheory,
    StbWeight,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ne,
        Method::RKmse,
        Method::PpJamesStein,
        Method::MtaConst,
        Method::MtaStb,
        Method::Stb0,
        Method::StbTheory,
        Method::StbWeight,
    ];

    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ne => "NE",
            Method::RKmse => "R-KMSE",
            Method::PpJamesStein => "PP-JS",
            Method::MtaConst => "MTA-const",
            Method::MtaStb => "MTA-stb",
            Method::Stb0 => "STB-0",
            Method::StbTheory => "STB-theory",
            Method::StbWeight => "STB-weight",
        }
    }

    /// Whether the method relies on the similarity graph.
    pub fn uses_graph(&self) -> bool {
        matches!(
            self,
            Method::MtaStb | Method::Stb0 | Method::StbTheory | Method::StbWeight
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        Ok(match key.as_str() {
            "ne" | "naive" => Method::Ne,
            "rkmse" => Method::RKmse,
            "ppjs" | "ppjamesstein" | "jamesstein" | "js" => Method::PpJamesStein,
            "mtaconst" => Method::MtaConst,
            "mtastb" => Method::MtaStb,
            "stb0" => Method::Stb0,
            "stbtheory" => Method::StbTheory,
            "stbweight" => Method::StbWeight,
            _ => return Err(invalid(format!("unknown method `{s}`"))),
        })
    }
}

/// Row-stochastic (for all but PP-JS) weight matrix tagged with its method.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub values: Array2<f64>,
    pub method: Method,
}

impl WeightMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.values
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// The naive estimator: `W = I`.
pub fn ne_weights(b: usize) -> WeightMatrix {
    WeightMatrix {
        values: Array2::eye(b),
        method: Method::Ne,
    }
}

/// How much weight a task keeps on its own estimate when averaging over its
/// accepted neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkageMode {
    /// Plain average over the accepted neighbours.
    StbZero,
    /// Fixed own-weight `gamma` in [0, 1].
    StbWeight { gamma: f64 },
    /// Own-weight set from the neighbourhood size with `tau = c zeta`.
    StbTheory { c: f64, zeta: f64 },
}

impl ShrinkageMode {
    pub fn method(&self) -> Method {
        match self {
            ShrinkageMode::StbZero => Method::Stb0,
            ShrinkageMode::StbWeight { .. } => Method::StbWeight,
            ShrinkageMode::StbTheory { .. } => Method::StbTheory,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ShrinkageMode::StbZero => Ok(()),
            ShrinkageMode::StbWeight { gamma } if (0.0..=1.0).contains(&gamma) => Ok(()),
            ShrinkageMode::StbWeight { gamma } => {
                Err(invalid(format!("gamma must lie in [0, 1], got {gamma}")))
            }
            ShrinkageMode::StbTheory { c, zeta }
                if c > 0.0 && zeta >= 0.0 && c.is_finite() && zeta.is_finite() =>
            {
                Ok(())
            }
            ShrinkageMode::StbTheory { c, zeta } => Err(invalid(format!(
                "c must be positive and zeta non-negative, got c = {c}, zeta = {zeta}"
            ))),
        }
    }

    /// Own-weight for a task whose neighbourhood has `degree = |V_i|` members.
    pub fn gamma(&self, degree: usize) -> f64 {
        match *self {
            ShrinkageMode::StbZero => 0.0,
            ShrinkageMode::StbWeight { gamma } => gamma,
            ShrinkageMode::StbTheory { c, zeta } => theory_gamma(c * zeta, degree),
        }
    }
}

/// `gamma = tau v / ((1 + tau) v + 1)` with `v = |V_i| - 1` other neighbours.
pub fn theory_gamma(tau: f64, degree: usize) -> f64 {
    let v = degree.saturating_sub(1) as f64;
    tau * v / ((1.0 + tau) * v + 1.0)
}

/// Own-weight of the one-sample variant, `tau / (1 + tau)`.
pub fn one_sample_gamma(tau: f64) -> f64 {
    tau / (1.0 + tau)
}

/// Neighbour-averaging weights:
/// `W_ii = gamma_i + (1 - gamma_i)/|V_i|`, `W_ij = (1 - gamma_i)/|V_i|` for other `j` in `V_i`.
pub fn stb_weights(graph: &NeighborGraph, mode: ShrinkageMode) -> Result<WeightMatrix> {
    mode.validate()?;
    let b = graph.len();
    let mut values = Array2::zeros((b, b));
    for i in 0..b {
        let degree = graph.degree(i);
        let gamma = mode.gamma(degree);
        let share = (1.0 - gamma) / degree as f64;
        for j in graph.neighbors(i) {
            values[[i, j]] = share;
        }
        values[[i, i]] += gamma;
    }
    Ok(WeightMatrix {
        values,
        method: mode.method(),
    })
}

/// Shrinkage weight of the regularized single-task estimator computed from
/// kernel sums of one bag: `diag = sum_k k(z_k, z_k)` and `full = sum_{k,l}`.
pub fn rkmse_weight_from_sums(diag: f64, full: f64, n: usize, id: &str) -> Result<f64> {
    if n < 2 {
        return Err(Error::BagTooSmall {
            id: id.to_string(),
            n,
            min: 2,
        });
    }
    let nf = n as f64;
    let varrho = diag / nf;
    let rho = full / (nf * nf);
    let num = varrho - rho;
    let den = (1.0 / nf - 1.0) * varrho + (nf - 1.0) * rho;
    if den == 0.0 && num == 0.0 {
        return Ok(1.0);
    }
    // A non-positive denominator means the off-diagonal mean is not positive,
    // i.e. no evidence of a non-zero embedding: shrink all the way.
    if den <= 0.0 {
        return Ok(0.0);
    }
    let lambda = num / den;
    if !lambda.is_finite() || 1.0 + lambda == 0.0 {
        return Err(Error::DegenerateShrinkage(id.to_string()));
    }
    Ok((1.0 - lambda / (1.0 + lambda)).clamp(0.0, 1.0))
}

/// Diagonal weights of the single-task shrinkage estimator.
pub fn rkmse_weights(bags: &[Bag], kernel: &KernelSpec) -> Result<WeightMatrix> {
    let sums = KernelSums::new(bags, *kernel)?;
    let w = rkmse_weights_from(&sums)?;
    Ok(WeightMatrix {
        values: Array2::from_diag(&Array1::from(w)),
        method: Method::RKmse,
    })
}

pub(crate) fn rkmse_weights_from(sums: &KernelSums<'_>) -> Result<Vec<f64>> {
    (0..sums.len())
        .map(|i| {
            let s = sums.self_sums(i);
            let bag = &sums.bags()[i];
            rkmse_weight_from_sums(s.diag, s.full(), bag.len(), bag.id())
        })
        .collect()
}

/// Task-similarity matrix used by the multi-task averaging estimators.
#[derive(Debug, Clone, Copy)]
pub enum MtaSimilarity<'g> {
    /// `A = a 1 1^T`.
    Constant(f64),
    /// `A` is the adjacency of a neighbour graph.
    Graph(&'g NeighborGraph),
}

/// Closed form of the constant-similarity solution:
/// `W = diag(own) + p q^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneWeights {
    pub own: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl RankOneWeights {
    pub fn to_dense(&self) -> Array2<f64> {
        let b = self.own.len();
        Array2::from_shape_fn(
            (b, b),
            |(i, j)| if i == j { self.own[i] } else { 0.0 } + self.p[i] * self.q[j],
        )
    }
}

/// `(I + (gamma / B) D a (B I - 1 1^T))^{-1}` by Sherman-Morrison.
pub fn mta_const_rank_one(variances: &[f64], a: f64, gamma: f64) -> Result<RankOneWeights> {
    validate_mta(variances, gamma)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(invalid(format!(
            "similarity constant must be finite and >= 0, got {a}"
        )));
    }
    // With e_i = 1 + gamma a D_i the system matrix is diag(e) - u 1^T where
    // u_i = (e_i - 1) / B, and the inverse simplifies to the form below.
    let e: Vec<f64> = variances.iter().map(|&d| 1.0 + gamma * a * d).collect();
    let s: f64 = e.iter().map(|v| 1.0 / v).sum();
    let own: Vec<f64> = e.iter().map(|v| 1.0 / v).collect();
    let p: Vec<f64> = e.iter().map(|v| (v - 1.0) / v).collect();
    let q: Vec<f64> = e.iter().map(|v| 1.0 / (v * s)).collect();
    if own.iter().chain(&p).chain(&q).any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(RankOneWeights { own, p, q })
}

fn validate_mta(variances: &[f64], gamma: f64) -> Result<()> {
    if variances.is_empty() {
        return Err(Error::EmptyInput("no tasks".into()));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    if variances.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(invalid("task variances must be finite and >= 0"));
    }
    Ok(())
}

/// Graph Laplacian `diag(A 1) - A` of the 0/1 adjacency.
pub fn graph_laplacian(graph: &NeighborGraph) -> Array2<f64> {
    let b = graph.len();
    let mut l = Array2::zeros((b, b));
    for i in 0..b {
        for j in graph.neighbors(i) {
            if j != i {
                l[[i, j]] -= 1.0;
                l[[i, i]] += 1.0;
            }
        }
    }
    l
}

/// Multi-task averaging weights from per-task variances `D` and a similarity.
pub fn mta_weights_from_parts(
    variances: &[f64],
    similarity: MtaSimilarity<'_>,
    gamma: f64,
) -> Result<WeightMatrix> {
    validate_mta(variances, gamma)?;
    let b = variances.len();
    match similarity {
        MtaSimilarity::Constant(a) => Ok(WeightMatrix {
            values: mta_const_rank_one(variances, a, gamma)?.to_dense(),
            method: Method::MtaConst,
        }),
        MtaSimilarity::Graph(graph) => {
            if graph.len() != b {
                return Err(Error::ShapeMismatch(format!(
                    "graph over {} tasks for {b} variances",
                    graph.len()
                )));
            }
            let mut m = graph_laplacian(graph);
            let scale = gamma / b as f64;
            for (i, mut row) in m.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|v| v * scale * variances[i]);
                row[i] += 1.0;
            }
            Ok(WeightMatrix {
                values: linalg::inverse(&m)?,
                method: Method::MtaStb,
            })
        }
    }
}

/// Mean over ordered pairs `i != j` of the plug-in squared distance between
/// empirical embeddings.
pub fn mean_pairwise_sq_distance(gram: &Array2<f64>) -> f64 {
    let b = gram.nrows();
    if b < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i != j {
                s += gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]];
            }
        }
    }
    s / (b * (b - 1)) as f64
}

/// Multi-task averaging over bags. Variances are the unbiased per-bag
/// estimates; the constant similarity uses the mean pairwise squared
/// distance of the empirical embeddings.
pub fn mta_weights(
    bags: &[Bag],
    kernel: &KernelSpec,
    gamma: f64,
    graph: Option<&NeighborGraph>,
) -> Result<WeightMatrix> {
    let sums = KernelSums::new(bags, *kernel)?;
    let variances = sums.naive_mse_all()?;
    match graph {
        Some(g) => mta_weights_from_parts(&variances, MtaSimilarity::Graph(g), gamma),
        None => {
            let a = mean_pairwise_sq_distance(&sums.plugin_gram());
            mta_weights_from_parts(&variances, MtaSimilarity::Constant(a), gamma)
        }
    }
}

/// Positive-part James-Stein shrinkage of each row towards `target`
/// (the origin when `None`). `sigma2` is the per-coordinate variance of the
/// naive estimate.
pub fn pp_james_stein(
    muhats: ArrayView2<'_, f64>,
    sigma2: f64,
    target: Option<ArrayView1<'_, f64>>,
) -> Result<Array2<f64>> {
    let d = muhats.ncols();
    if d < 3 {
        return Err(invalid(format!(
            "James-Stein shrinkage needs d >= 3, got {d}"
        )));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(invalid(format!(
            "sigma^2 must be finite and >= 0, got {sigma2}"
        )));
    }
    if let Some(t) = target {
        if t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: t.len(),
            });
        }
    }
    let mut out = muhats.to_owned();
    for mut row in out.rows_mut() {
        if let Some(t) = target {
            row -= &t;
        }
        let norm2: f64 = row.iter().map(|v| v * v).sum();
        let factor = if norm2 > 0.0 {
            (1.0 - (d as f64 - 2.0) * sigma2 / norm2).max(0.0)
        } else {
            0.0
        };
        row.mapv_inplace(|v| v * factor);
        if let Some(t) = target {
            row += &t;
        }
    }
    Ok(out)
}

/// `W mu_hat` for explicit naive estimates stored row-wise.
pub fn apply_weights(weights: &WeightMatrix, muhats: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if weights.values.ncols() != muhats.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "weights have {} columns for {} estimates",
            weights.values.ncols(),
            muhats.nrows()
        )));
    }
    Ok(weights.values.dot(&muhats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
    }

    #[test]
    fn stb_zero_averages_neighbours() {
        let g = NeighborGraph::complete(2);
        let w = stb_weights(&g, ShrinkageMode::StbZero).unwrap();
        assert_close(&w.values, &array![[0.5, 0.5], [0.5, 0.5]], 0.0);
        let mu = array![[0.0], [2.0]];
        let out = apply_weights(&w, mu.view()).unwrap();
        assert_close(&out, &array![[1.0], [1.0]], 1e-15);
    }

    #[test]
    fn stb_weight_example() {
        let g = NeighborGraph::from_rows(&[
            vec![true, true, true],
            vec![true, true, false],
            vec![true, false, true],
        ])
        .unwrap();
        let w = stb_weights(&g, ShrinkageMode::StbWeight { gamma: 0.4 }).unwrap();
        assert_abs_diff_eq!(w.values[[0, 0]], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(w.values[[0, 1]], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(w.values[[0, 2]], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn isolated_task_keeps_its_estimate() {
        let g = NeighborGraph::identity(3);
        for mode in [
            ShrinkageMode::StbZero,
            ShrinkageMode::StbWeight { gamma: 0.3 },
            ShrinkageMode::StbTheory { c: 1.0, zeta: 2.0 },
        ] {
            let w = stb_weights(&g, mode).unwrap();
            assert_close(&w.values, &Array2::eye(3), 0.0);
        }
    }

    #[test]
    fn theory_gamma_values() {
        assert_eq!(theory_gamma(0.5, 1), 0.0);
        // tau = 1, three other neighbours: 3 / 7
        assert_abs_diff_eq!(theory_gamma(1.0, 4), 3.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(one_sample_gamma(1.0), 0.5, epsilon = 1e-15);
        assert!(stb_weights(
            &NeighborGraph::identity(1),
            ShrinkageMode::StbWeight { gamma: 1.5 }
        )
        .is_err());
    }

    #[test]
    fn rkmse_example_weight() {
        // RBF with width 1 on {(0,0), (2,0)}: k(z, z) = 1, off-diagonal e^{-2}.
        let bag = Bag::from_rows("a", &[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let w = rkmse_weights(&[bag], &KernelSpec::gaussian_rbf(1.0).unwrap()).unwrap();
        let e2 = (-2.0f64).exp();
        let rho = (2.0 + 2.0 * e2) / 4.0;
        let lambda = (1.0 - rho) / (-0.5 + rho);
        assert_abs_diff_eq!(lambda, 6.389056098930643, epsilon = 1e-12);
        assert_abs_diff_eq!(w.values[[0, 0]], 1.0 / (1.0 + lambda), epsilon = 1e-14);
        assert_abs_diff_eq!(w.values[[0, 0]], 0.1353, epsilon = 1e-4);
    }

    #[test]
    fn rkmse_constant_bag_is_not_shrunk() {
        let bag = Bag::new("a", Array2::from_elem((4, 2), 0.7)).unwrap();
        let w = rkmse_weights(&[bag], &KernelSpec::gaussian_rbf(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(w.values[[0, 0]], 1.0, epsilon = 1e-12);
        assert!(rkmse_weight_from_sums(1.0, 1.0, 1, "x").is_err());
    }

    #[test]
    fn rkmse_non_positive_off_diagonal_shrinks_fully() {
        // Centred bag under the linear kernel: off-diagonal mean is negative.
        let bag = Bag::from_rows("a", &[vec![1.0], vec![-1.0]]).unwrap();
        let w = rkmse_weights(&[bag], &KernelSpec::Linear).unwrap();
        assert_eq!(w.values[[0, 0]], 0.0);
    }

    #[test]
    fn mta_graph_example() {
        let g = NeighborGraph::complete(2);
        let w = mta_weights_from_parts(&[1.0, 1.0], MtaSimilarity::Graph(&g), 2.0).unwrap();
        assert_close(&w.values, &(array![[2.0, 1.0], [1.0, 2.0]] / 3.0), 1e-14);
    }

    #[test]
    fn mta_gamma_zero_is_identity() {
        let g = NeighborGraph::complete(3);
        let d = [0.5, 1.0, 2.0];
        for sim in [MtaSimilarity::Graph(&g), MtaSimilarity::Constant(3.0)] {
            let w = mta_weights_from_parts(&d, sim, 0.0).unwrap();
            assert_close(&w.values, &Array2::eye(3), 1e-15);
        }
    }

    #[test]
    fn mta_const_matches_dense_solve() {
        let d = [0.5, 1.0, 2.0, 0.1];
        let (a, gamma) = (0.7, 3.0);
        let b = d.len();
        let mut m = Array2::<f64>::zeros((b, b));
        for i in 0..b {
            for j in 0..b {
                let l = if i == j { (b - 1) as f64 } else { -1.0 };
                m[[i, j]] = (i == j) as u8 as f64 + gamma / b as f64 * d[i] * a * l;
            }
        }
        let dense = linalg::inverse(&m).unwrap();
        let w = mta_weights_from_parts(&d, MtaSimilarity::Constant(a), gamma).unwrap();
        assert_close(&w.values, &dense, 1e-13);
    }

    #[test]
    fn james_stein_examples() {
        let mu = array![[3.0, 4.0, 0.0]];
        let out = pp_james_stein(mu.view(), 1.0, None).unwrap();
        // factor 1 - 1/25
        assert_close(&out, &(array![[3.0, 4.0, 0.0]] * 0.96), 1e-14);
        let small = array![[0.1, 0.0, 0.0]];
        assert_close(
            &pp_james_stein(small.view(), 1.0, None).unwrap(),
            &array![[0.0, 0.0, 0.0]],
            0.0,
        );
        let zero = array![[0.0, 0.0, 0.0]];
        assert_close(&pp_james_stein(zero.view(), 1.0, None).unwrap(), &zero, 0.0);
        assert!(pp_james_stein(array![[1.0, 2.0]].view(), 1.0, None).is_err());
        let t = array![1.0, 1.0, 1.0];
        let out = pp_james_stein(array![[4.0, 5.0, 1.0]].view(), 1.0, Some(t.view())).unwrap();
        assert_close(
            &out,
            &array![[1.0 + 3.0 * 0.96, 1.0 + 4.0 * 0.96, 1.0]],
            1e-14,
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    fn graph_strategy() -> impl Strategy<Value = NeighborGraph> {
        (1usize..7).prop_flat_map(|b| {
            proptest::collection::vec(any::<bool>(), b * b)
                .prop_map(move |bits| NeighborGraph::from_fn(b, |i, j| bits[i * b + j]))
        })
    }

    proptest! {
        #[test]
        fn stb_rows_sum_to_one_and_stay_in_neighbourhood(
            g in graph_strategy(), gamma in 0.0f64..=1.0, c in 0.01f64..4.0, zeta in 0.0f64..6.0
        ) {
            for mode in [ShrinkageMode::StbZero, ShrinkageMode::StbWeight { gamma }, ShrinkageMode::StbTheory { c, zeta }] {
                let w = stb_weights(&g, mode).unwrap();
                prop_assert!(w.max_row_sum_error() < 1e-12);
                for i in 0..g.len() {
                    for j in 0..g.len() {
                        if !g.contains(i, j) {
                            prop_assert_eq!(w.values[[i, j]], 0.0);
                        }
                        prop_assert!(w.values[[i, j]] >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn mta_rows_sum_to_one(
            g in graph_strategy(), gamma in 0.0f64..50.0, a in 0.0f64..10.0,
            d in proptest::collection::vec(0.0f64..3.0, 7)
        ) {
            let d = &d[..g.len()];
            let w = mta_weights_from_parts(d, MtaSimilarity::Graph(&g), gamma).unwrap();
            prop_assert!(w.max_row_sum_error() < 1e-9);
            let w = mta_weights_from_parts(d, MtaSimilarity::Constant(a), gamma).unwrap();
            prop_assert!(w.max_row_sum_error() < 1e-12);
        }

        #[test]
        fn james_stein_never_increases_norm(
            v in proptest::collection::vec(-5.0f64..5.0, 3..8), s in 0.0f64..3.0
        ) {
            let mu = Array2::from_shape_vec((1, v.len()), v.clone()).unwrap();
            let out = pp_james_stein(mu.view(), s, None).unwrap();
            let before: f64 = v.iter().map(|x| x * x).sum();
            let after: f64 = out.iter().map(|x| x * x).sum();
            prop_assert!(after <= before + 1e-12);
        }
    }
}
