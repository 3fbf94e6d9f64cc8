//! Per-trial losses of whole estimator families.
//!
//! A [`Problem`] holds one generated (or resampled) dataset together with
//! whatever is needed to score an estimate against the truth. The family
//! evaluators below compute the loss of every grid point. The weight-matrix
//! estimators are evaluated through algebraic shortcuts: neighbour averaging
//! is quadratic in the own-weight, constant-similarity MTA is diagonal plus
//! rank one, and graph MTA with a symmetric graph and equal variances is
//! diagonal in the Laplacian eigenbasis. Each shortcut is tested against the
//! explicit weight matrix.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::{
    graph_laplacian, mean_pairwise_sq_distance, mta_const_rank_one, mta_weights_from_parts,
    pp_james_stein, rkmse_weights_from, Method, MtaSimilarity, RankOneWeights, ShrinkageMode,
};
use crate::kernel::{Bag, KernelSpec, KernelSums};
use crate::linalg::{self, SmallCholesky};
use crate::similarity::{graph_from_sq_dists, kme_graph_from_stats, NeighborGraph};

/// Tunable parameters of one method; absent fields do not apply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c: Option<f64>,
}

impl ParamPoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameter points always serialize")
    }

    fn zeta_or(&self, method: Method) -> Result<f64> {
        self.zeta
            .ok_or_else(|| invalid(format!("{method} needs zeta")))
    }

    fn gamma_or(&self, method: Method) -> Result<f64> {
        self.gamma
            .ok_or_else(|| invalid(format!("{method} needs gamma")))
    }

    /// Shrinkage mode of a neighbour-averaging method at this point.
    pub fn shrinkage(&self, method: Method) -> Result<ShrinkageMode> {
        match method {
            Method::Stb0 => Ok(ShrinkageMode::StbZero),
            Method::StbWeight => Ok(ShrinkageMode::StbWeight {
                gamma: self.gamma_or(method)?,
            }),
            Method::StbTheory => Ok(ShrinkageMode::StbTheory {
                c: self.c.ok_or_else(|| invalid("STB-theory needs c"))?,
                zeta: self.zeta_or(method)?,
            }),
            _ => Err(invalid(format!(
                "{method} is not a neighbour-averaging method"
            ))),
        }
    }
}

/// Own-estimate, cross and pooled terms of one task's neighbour average.
///
/// With `x` the naive estimate, `a` the plain neighbour average and `m` the
/// target, the loss of `gamma x + (1 - gamma) a` is
/// `gamma^2 own + 2 gamma (1 - gamma) cross + (1 - gamma)^2 pooled`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkStats {
    pub own: f64,
    pub cross: f64,
    pub pooled: f64,
    pub degree: usize,
}

impl ShrinkStats {
    pub fn loss(&self, gamma: f64) -> f64 {
        let h = 1.0 - gamma;
        gamma * gamma * self.own + 2.0 * gamma * h * self.cross + h * h * self.pooled
    }
}

/// Diagonals of `Q^T G Q` and `Q^T C Q` for an orthogonal `Q`, plus the summed
/// squared norms of the targets.
#[derive(Debug, Clone)]
pub struct SpectralStats {
    pub gram: Vec<f64>,
    pub cross: Vec<f64>,
    pub target_total: f64,
}

/// One dataset with known targets.
pub trait Problem: Send + Sync {
    fn num_tasks(&self) -> usize;
    /// Similarity graph at threshold `zeta`.
    fn graph(&self, zeta: f64) -> NeighborGraph;
    /// Per-task variance of the naive estimate.
    fn variances(&self) -> &[f64];
    /// Mean pairwise squared distance between naive estimates.
    fn mean_sq_distance(&self) -> f64;
    /// Per-task loss of an explicit weight matrix.
    fn weight_losses(&self, w: &Array2<f64>) -> Vec<f64>;
    fn shrink_stats(&self, graph: &NeighborGraph) -> Vec<ShrinkStats>;
    fn rank_one_losses(&self, w: &RankOneWeights) -> Vec<f64>;
    fn spectral_stats(&self, q: &Array2<f64>) -> SpectralStats;
    /// Per-task loss of a method without parameters, if it applies here.
    fn fixed_losses(&self, method: Method) -> Result<Vec<f64>>;
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Gaussian-mode problem: one noisy naive estimate per task with known means.
pub struct GaussianProblem {
    x: Array2<f64>,
    means: Array2<f64>,
    sq_dists: Array2<f64>,
    n: usize,
    variances: Vec<f64>,
    mean_sq: f64,
}

impl GaussianProblem {
    /// `x` holds the naive estimates (sample means over `n` unit-variance
    /// observations), `means` the true means.
    pub fn new(x: Array2<f64>, means: Array2<f64>, n: usize) -> Result<Self> {
        if x.dim() != means.dim() {
            return Err(invalid("estimates and means must have the same shape"));
        }
        if n == 0 || x.nrows() == 0 {
            return Err(invalid(
                "need at least one task and one observation per task",
            ));
        }
        let b = x.nrows();
        let g = x.dot(&x.t());
        let mut sq_dists = Array2::zeros((b, b));
        let mut total = 0.0;
        for i in 0..b {
            for j in (i + 1)..b {
                let v = (g[[i, i]] + g[[j, j]] - 2.0 * g[[i, j]]).max(0.0);
                sq_dists[[i, j]] = v;
                sq_dists[[j, i]] = v;
                total += 2.0 * v;
            }
        }
        let mean_sq = if b > 1 {
            total / (b * (b - 1)) as f64
        } else {
            0.0
        };
        let sigma_bar2 = x.ncols() as f64 / n as f64;
        Ok(Self {
            x,
            means,
            sq_dists,
            n,
            variances: vec![sigma_bar2; b],
            mean_sq,
        })
    }

    pub fn estimates(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    fn row_losses(&self, est: &Array2<f64>) -> Vec<f64> {
        est.rows()
            .into_iter()
            .zip(self.means.rows())
            .map(|(e, m)| e.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    }
}

impl Problem for GaussianProblem {
    fn num_tasks(&self) -> usize {
        self.x.nrows()
    }

    fn graph(&self, zeta: f64) -> NeighborGraph {
        graph_from_sq_dists(&self.sq_dists, zeta * self.x.ncols() as f64 / self.n as f64)
    }

    fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn mean_sq_distance(&self) -> f64 {
        self.mean_sq
    }

    fn weight_losses(&self, w: &Array2<f64>) -> Vec<f64> {
        self.row_losses(&w.dot(&self.x))
    }

    fn shrink_stats(&self, graph: &NeighborGraph) -> Vec<ShrinkStats> {
        let sums = graph.to_matrix().dot(&self.x);
        (0..self.num_tasks())
            .map(|i| {
                let degree = graph.degree(i);
                let (x, m, s) = (self.x.row(i), self.means.row(i), sums.row(i));
                let (mut own, mut cross, mut pooled) = (0.0, 0.0, 0.0);
                for k in 0..x.len() {
                    let e = x[k] - m[k];
                    let a = s[k] / degree as f64 - m[k];
                    own += e * e;
                    cross += e * a;
                    pooled += a * a;
                }
                ShrinkStats {
                    own,
                    cross,
                    pooled,
                    degree,
                }
            })
            .collect()
    }

    fn rank_one_losses(&self, w: &RankOneWeights) -> Vec<f64> {
        let qx = Array1::from(w.q.clone()).dot(&self.x);
        (0..self.num_tasks())
            .map(|i| {
                let (x, m) = (self.x.row(i), self.means.row(i));
                (0..x.len())
                    .map(|k| (w.own[i] * x[k] + w.p[i] * qx[k] - m[k]).powi(2))
                    .sum()
            })
            .collect()
    }

    fn spectral_stats(&self, q: &Array2<f64>) -> SpectralStats {
        let y = q.t().dot(&self.x);
        let z = q.t().dot(&self.means);
        let gram = y.rows().into_iter().map(|r| r.dot(&r)).collect();
        let cross = y
            .rows()
            .into_iter()
            .zip(z.rows())
            .map(|(a, b)| a.dot(&b))
            .collect();
        SpectralStats {
            gram,
            cross,
            target_total: self.means.iter().map(|v| v * v).sum(),
        }
    }

    fn fixed_losses(&self, method: Method) -> Result<Vec<f64>> {
        match method {
            Method::Ne => Ok(self.row_losses(&self.x)),
            Method::PpJamesStein => {
                let js = pp_james_stein(self.x.view(), 1.0 / self.n as f64, None)?;
                Ok(self.row_losses(&js))
            }
            other => Err(invalid(format!(
                "{other} is not available in Gaussian mode"
            ))),
        }
    }
}

/// Gaussian law of one task, used for analytic kernel targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTask {
    pub mean: Vec<f64>,
    pub cov: Array2<f64>,
}

impl From<&crate::datagen::ToyTruth> for GaussianTask {
    fn from(t: &crate::datagen::ToyTruth) -> Self {
        GaussianTask {
            mean: t.centre.to_vec(),
            cov: t.covariance(),
        }
    }
}

/// What the estimates are scored against in kernel mode.
pub enum Targets<'a> {
    /// Unbiased loss against independent reference bags, one per task.
    Bags(&'a [Bag]),
    /// Exact population embeddings of Gaussian laws.
    Analytic(&'a [GaussianTask]),
    /// Plug-in embeddings of larger bags, e.g. the complete bags a subsample
    /// was drawn from.
    Plugin(&'a [Bag]),
}

/// Kernel-mode problem built from block sums of the estimation bags.
pub struct KmeProblem {
    gram: Array2<f64>,
    mmd: Array2<f64>,
    variances: Vec<f64>,
    rkmse: Vec<f64>,
    mean_sq: f64,
    /// `cross[[a, i]] = <mu_hat_a, target_i>`
    cross: Array2<f64>,
    target_sq: Vec<f64>,
}

/// Expected kernel value `E_y k(z, y)` for `y` drawn from a Gaussian task,
/// prepared once per task.
struct EmbeddingEval {
    mean: Vec<f64>,
    chol: Option<SmallCholesky>,
    scale: f64,
}

impl EmbeddingEval {
    fn new(task: &GaussianTask, kernel: &KernelSpec) -> Result<Self> {
        match *kernel {
            KernelSpec::Linear => Ok(Self {
                mean: task.mean.clone(),
                chol: None,
                scale: 1.0,
            }),
            KernelSpec::GaussianRbf { width } => {
                let d = task.mean.len();
                let w2 = width * width;
                let shifted = &task.cov + &(Array2::<f64>::eye(d) * w2);
                let chol = SmallCholesky::new(&shifted)?;
                let scale = (d as f64 * width.ln() - 0.5 * chol.log_det()).exp();
                Ok(Self {
                    mean: task.mean.clone(),
                    chol: Some(chol),
                    scale,
                })
            }
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        match &self.chol {
            None => crate::kernel::dot(z, &self.mean),
            Some(chol) => {
                let diff: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
                self.scale * (-0.5 * chol.inv_quad(&diff)).exp()
            }
        }
    }
}

/// `|mu|^2` of the embedding of a Gaussian task.
fn analytic_embedding_sq(task: &GaussianTask, kernel: &KernelSpec) -> Result<f64> {
    match *kernel {
        KernelSpec::Linear => Ok(task.mean.iter().map(|v| v * v).sum::<f64>()),
        KernelSpec::GaussianRbf { width } => {
            let d = task.mean.len();
            let m = &task.cov * 2.0 + &(Array2::<f64>::eye(d) * (width * width));
            let chol = SmallCholesky::new(&m)?;
            Ok((d as f64 * width.ln() - 0.5 * chol.log_det()).exp())
        }
    }
}

impl KmeProblem {
    pub fn new(bags: &[Bag], kernel: KernelSpec, targets: Targets<'_>) -> Result<Self> {
        let sums = KernelSums::new(bags, kernel)?;
        let b = bags.len();
        let gram = sums.plugin_gram();
        let mmd = sums.mmd_matrix()?;
        let variances = sums.naive_mse_all()?;
        let rkmse = rkmse_weights_from(&sums)?;
        let mean_sq = mean_pairwise_sq_distance(&gram);
        let (cross_cols, target_sq): (Vec<Vec<f64>>, Vec<f64>) = match targets {
            Targets::Bags(refs) | Targets::Plugin(refs) => {
                let unbiased = matches!(targets, Targets::Bags(_));
                if refs.len() != b {
                    return Err(invalid(format!(
                        "{} reference bags for {b} tasks",
                        refs.len()
                    )));
                }
                let cols: Result<Vec<(Vec<f64>, f64)>> = refs
                    .par_iter()
                    .map(|r| {
                        if unbiased {
                            r.require_len(2)?;
                        }
                        if r.dim() != bags[0].dim() {
                            return Err(crate::Error::DimensionMismatch {
                                expected: bags[0].dim(),
                                got: r.dim(),
                            });
                        }
                        let m = r.len() as f64;
                        let col = bags
                            .iter()
                            .map(|a| crate::kernel::cross_sum(a, r, &kernel) / (a.len() as f64 * m))
                            .collect();
                        let s = crate::kernel::self_sums(r, &kernel);
                        let sq = if unbiased {
                            s.off / (m * (m - 1.0))
                        } else {
                            s.full() / (m * m)
                        };
                        Ok((col, sq))
                    })
                    .collect();
                cols?.into_iter().unzip()
            }
            Targets::Analytic(tasks) => {
                if tasks.len() != b {
                    return Err(invalid(format!(
                        "{} target laws for {b} tasks",
                        tasks.len()
                    )));
                }
                let cols: Result<Vec<(Vec<f64>, f64)>> = tasks
                    .par_iter()
                    .map(|t| {
                        if t.mean.len() != bags[0].dim() {
                            return Err(crate::Error::DimensionMismatch {
                                expected: bags[0].dim(),
                                got: t.mean.len(),
                            });
                        }
                        let e = EmbeddingEval::new(t, &kernel)?;
                        let col = bags
                            .iter()
                            .map(|a| {
                                (0..a.len()).map(|k| e.eval(a.row(k))).sum::<f64>() / a.len() as f64
                            })
                            .collect();
                        Ok((col, analytic_embedding_sq(t, &kernel)?))
                    })
                    .collect();
                cols?.into_iter().unzip()
            }
        };
        let mut cross = Array2::zeros((b, b));
        for (i, col) in cross_cols.iter().enumerate() {
            for (a, v) in col.iter().enumerate() {
                cross[[a, i]] = *v;
            }
        }
        Ok(Self {
            gram,
            mmd,
            variances,
            rkmse,
            mean_sq,
            cross,
            target_sq,
        })
    }

    pub fn plugin_gram(&self) -> &Array2<f64> {
        &self.gram
    }
}

impl Problem for KmeProblem {
    fn num_tasks(&self) -> usize {
        self.gram.nrows()
    }

    fn graph(&self, zeta: f64) -> NeighborGraph {
        kme_graph_from_stats(&self.mmd, &self.variances, zeta)
    }

    fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn mean_sq_distance(&self) -> f64 {
        self.mean_sq
    }

    fn weight_losses(&self, w: &Array2<f64>) -> Vec<f64> {
        let wg = w.dot(&self.gram);
        (0..self.num_tasks())
            .map(|i| {
                let quad = wg.row(i).dot(&w.row(i));
                let lin = w.row(i).dot(&self.cross.column(i));
                quad - 2.0 * lin + self.target_sq[i]
            })
            .collect()
    }

    fn shrink_stats(&self, graph: &NeighborGraph) -> Vec<ShrinkStats> {
        (0..self.num_tasks())
            .map(|i| {
                let nb: Vec<usize> = graph.neighbors(i).collect();
                let deg = nb.len() as f64;
                let g_i_v = nb.iter().map(|&j| self.gram[[i, j]]).sum::<f64>() / deg;
                let mut v_g_v = 0.0;
                for &j in &nb {
                    v_g_v += nb.iter().map(|&k| self.gram[[j, k]]).sum::<f64>();
                }
                v_g_v /= deg * deg;
                let v_c = nb.iter().map(|&j| self.cross[[j, i]]).sum::<f64>() / deg;
                let (c_ii, s) = (self.cross[[i, i]], self.target_sq[i]);
                ShrinkStats {
                    own: self.gram[[i, i]] - 2.0 * c_ii + s,
                    cross: g_i_v - c_ii - v_c + s,
                    pooled: v_g_v - 2.0 * v_c + s,
                    degree: nb.len(),
                }
            })
            .collect()
    }

    fn rank_one_losses(&self, w: &RankOneWeights) -> Vec<f64> {
        let q = Array1::from(w.q.clone());
        let gq = self.gram.dot(&q);
        let qgq = q.dot(&gq);
        let cq = self.cross.t().dot(&q);
        (0..self.num_tasks())
            .map(|i| {
                let (o, p) = (w.own[i], w.p[i]);
                let quad = o * o * self.gram[[i, i]] + 2.0 * o * p * gq[i] + p * p * qgq;
                let lin = o * self.cross[[i, i]] + p * cq[i];
                quad - 2.0 * lin + self.target_sq[i]
            })
            .collect()
    }

    fn spectral_stats(&self, q: &Array2<f64>) -> SpectralStats {
        let gq = self.gram.dot(q);
        let cq = self.cross.dot(q);
        let gram = (0..q.ncols())
            .map(|k| q.column(k).dot(&gq.column(k)))
            .collect();
        let cross = (0..q.ncols())
            .map(|k| q.column(k).dot(&cq.column(k)))
            .collect();
        SpectralStats {
            gram,
            cross,
            target_total: self.target_sq.iter().sum(),
        }
    }

    fn fixed_losses(&self, method: Method) -> Result<Vec<f64>> {
        let diag_loss = |r: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (0..self.num_tasks())
                .map(|i| {
                    let w = r(i);
                    w * w * self.gram[[i, i]] - 2.0 * w * self.cross[[i, i]] + self.target_sq[i]
                })
                .collect()
        };
        match method {
            Method::Ne => Ok(diag_loss(&|_| 1.0)),
            Method::RKmse => Ok(diag_loss(&|i| self.rkmse[i])),
            other => Err(invalid(format!("{other} is not available in kernel mode"))),
        }
    }
}

/// Mean loss over tasks of each neighbour-averaging mode at one threshold.
pub fn stb_family_losses(
    problem: &dyn Problem,
    graph: &NeighborGraph,
    modes: &[ShrinkageMode],
) -> Result<Vec<f64>> {
    let stats = problem.shrink_stats(graph);
    modes
        .iter()
        .map(|mode| {
            mode.validate()?;
            Ok(stats
                .iter()
                .map(|s| s.loss(mode.gamma(s.degree)))
                .sum::<f64>()
                / stats.len() as f64)
        })
        .collect()
}

/// Mean loss of constant-similarity MTA for each gamma.
pub fn mta_const_losses(problem: &dyn Problem, gammas: &[f64]) -> Result<Vec<f64>> {
    let a = problem.mean_sq_distance();
    gammas
        .iter()
        .map(|&g| {
            Ok(mean(&problem.rank_one_losses(&mta_const_rank_one(
                problem.variances(),
                a,
                g,
            )?)))
        })
        .collect()
}

/// Mean loss of graph MTA for each gamma at a fixed graph.
pub fn mta_graph_losses(
    problem: &dyn Problem,
    graph: &NeighborGraph,
    gammas: &[f64],
) -> Result<Vec<f64>> {
    let d = problem.variances();
    let b = problem.num_tasks();
    let equal = d.iter().all(|&v| v == d[0]);
    if graph.is_symmetric() && equal {
        let (lambda, q) = linalg::symmetric_eigen(&graph_laplacian(graph))?;
        let stats = problem.spectral_stats(&q);
        return gammas
            .iter()
            .map(|&g| {
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(invalid(format!("gamma must be finite and >= 0, got {g}")));
                }
                let s = g * d[0] / b as f64;
                let total: f64 = (0..b)
                    .map(|k| {
                        let f = 1.0 / (1.0 + s * lambda[k].max(0.0));
                        f * f * stats.gram[k] - 2.0 * f * stats.cross[k]
                    })
                    .sum::<f64>()
                    + stats.target_total;
                Ok(total / b as f64)
            })
            .collect();
    }
    gammas
        .iter()
        .map(|&g| {
            let w = mta_weights_from_parts(d, MtaSimilarity::Graph(graph), g)?;
            Ok(mean(&problem.weight_losses(&w.values)))
        })
        .collect()
}

/// Mean loss of `method` at each point.
pub fn evaluate_points(
    problem: &dyn Problem,
    method: Method,
    points: &[ParamPoint],
) -> Result<Vec<f64>> {
    Ok(evaluate_methods(problem, &[(method, points)])?
        .pop()
        .expect("one request in, one result out"))
}

/// Mean loss of several methods at their points. Graph-based points are
/// grouped by threshold across all requests, so each graph and its
/// neighbour-average statistics are built once.
pub fn evaluate_methods(
    problem: &dyn Problem,
    requests: &[(Method, &[ParamPoint])],
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = requests
        .iter()
        .map(|(_, pts)| vec![0.0; pts.len()])
        .collect();
    // threshold bits -> (request, point) pairs
    let mut groups: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
    for (r, &(method, points)) in requests.iter().enumerate() {
        match method {
            Method::Ne | Method::RKmse | Method::PpJamesStein => {
                let v = mean(&problem.fixed_losses(method)?);
                out[r].iter_mut().for_each(|o| *o = v);
            }
            Method::MtaConst => {
                let gammas: Result<Vec<f64>> = points.iter().map(|p| p.gamma_or(method)).collect();
                out[r] = mta_const_losses(problem, &gammas?)?;
            }
            Method::Stb0 | Method::StbTheory | Method::StbWeight | Method::MtaStb => {
                for (k, p) in points.iter().enumerate() {
                    groups
                        .entry(p.zeta_or(method)?.to_bits())
                        .or_default()
                        .push((r, k));
                }
            }
        }
    }
    for (bits, members) in groups {
        let graph = problem.graph(f64::from_bits(bits));
        let (mta, stb): (Vec<(usize, usize)>, Vec<(usize, usize)>) = members
            .into_iter()
            .partition(|&(r, _)| requests[r].0 == Method::MtaStb);
        if !mta.is_empty() {
            let gammas: Result<Vec<f64>> = mta
                .iter()
                .map(|&(r, k)| requests[r].1[k].gamma_or(Method::MtaStb))
                .collect();
            for ((r, k), v) in mta
                .into_iter()
                .zip(mta_graph_losses(problem, &graph, &gammas?)?)
            {
                out[r][k] = v;
            }
        }
        if !stb.is_empty() {
            let modes: Result<Vec<ShrinkageMode>> = stb
                .iter()
                .map(|&(r, k)| requests[r].1[k].shrinkage(requests[r].0))
                .collect();
            for ((r, k), v) in stb
                .into_iter()
                .zip(stb_family_losses(problem, &graph, &modes?)?)
            {
                out[r][k] = v;
            }
        }
    }
    Ok(out)
}

/// Explicit weight matrix of a linear method at a point; used for
/// cross-checking the shortcuts and by the `estimate` command.
pub fn explicit_weights(
    problem: &dyn Problem,
    method: Method,
    point: &ParamPoint,
) -> Result<Array2<f64>> {
    let b = problem.num_tasks();
    match method {
        Method::Ne => Ok(Array2::eye(b)),
        Method::MtaConst => Ok(mta_const_rank_one(
            problem.variances(),
            problem.mean_sq_distance(),
            point.gamma_or(method)?,
        )?
        .to_dense()),
        Method::MtaStb => {
            let g = problem.graph(point.zeta_or(method)?);
            Ok(mta_weights_from_parts(
                problem.variances(),
                MtaSimilarity::Graph(&g),
                point.gamma_or(method)?,
            )?
            .values)
        }
        Method::Stb0 | Method::StbTheory | Method::StbWeight => {
            let g = problem.graph(point.zeta_or(method)?);
            Ok(crate::estimators::stb_weights(&g, point.shrinkage(method)?)?.values)
        }
        other => Err(invalid(format!(
            "{other} has no explicit weight matrix here"
        ))),
    }
}
