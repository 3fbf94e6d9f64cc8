//! Bags, kernels and the sample statistics of kernel mean embeddings.
//!
//! Embeddings are never materialized. Everything downstream is expressed
//! through sums of kernel blocks: the plug-in inner product between two
//! empirical embeddings, the unbiased squared MMD, the unbiased estimate of
//! the embedding variance, and the unbiased loss of a weighted combination.

use std::collections::HashMap;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite sample from one task's distribution; rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    id: String,
    samples: Array2<f64>,
}

impl Bag {
    /// Builds a bag, rejecting empty or non-finite samples.
    pub fn new(id: impl Into<String>, samples: Array2<f64>) -> Result<Self> {
        let id = id.into();
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::BagTooSmall {
                id,
                n: samples.nrows(),
                min: 1,
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(id));
        }
        let samples = samples.as_standard_layout().into_owned();
        Ok(Self { id, samples })
    }

    /// Builds a bag from row vectors of equal length.
    pub fn from_rows(id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let id = id.into();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let samples = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(id, samples)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Row `k` as a contiguous slice.
    pub fn row(&self, k: usize) -> &[f64] {
        self.samples
            .row(k)
            .to_slice()
            .expect("bag samples are stored in standard layout")
    }

    /// Sample mean of the observations.
    pub fn mean(&self) -> Array1<f64> {
        self.samples
            .mean_axis(ndarray::Axis(0))
            .expect("bag is non-empty")
    }

    pub(crate) fn require_len(&self, min: usize) -> Result<()> {
        if self.len() < min {
            return Err(Error::BagTooSmall {
                id: self.id.clone(),
                n: self.len(),
                min,
            });
        }
        Ok(())
    }
}

/// Checks that all bags share one feature dimension and returns it.
pub fn common_dim(bags: &[Bag]) -> Result<usize> {
    let first = bags
        .first()
        .ok_or_else(|| Error::EmptyInput("no bags".into()))?;
    let d = first.dim();
    for bag in bags {
        if bag.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bag.dim(),
            });
        }
    }
    Ok(d)
}

/// Positive-definite kernel on feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `k(z, z') = <z, z'>`
    Linear,
    /// `k(z, z') = exp(-|z - z'|^2 / (2 w^2))`
    GaussianRbf { width: f64 },
}

impl KernelSpec {
    pub fn gaussian_rbf(width: f64) -> Result<Self> {
        let k = KernelSpec::GaussianRbf { width };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::GaussianRbf { width } if width > 0.0 && width.is_finite() => Ok(()),
            KernelSpec::GaussianRbf { width } => Err(Error::InvalidWidth(width)),
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::GaussianRbf { width } => (-sq_dist(a, b) / (2.0 * width * width)).exp(),
        }
    }

    /// Squared RKHS distance between the feature maps of `a` and `b`.
    ///
    /// Computed so that the result is non-negative in floating point.
    #[inline]
    pub fn feature_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => sq_dist(a, b),
            KernelSpec::GaussianRbf { .. } => 2.0 - 2.0 * self.eval(a, b),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-feature mean and population standard deviation of all samples of all
/// bags pooled together.
pub fn pooled_moments(bags: &[Bag]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = common_dim(bags)?;
    let total = bags.iter().map(Bag::len).sum::<usize>() as f64;
    let mut mean = vec![0.0; d];
    for row in bags.iter().flat_map(|b| b.samples().rows()) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut sd = vec![0.0; d];
    for row in bags.iter().flat_map(|b| b.samples().rows()) {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / total).sqrt());
    Ok((mean, sd))
}

/// Mean over features of the per-feature standard deviation of the pooled samples.
pub fn pooled_feature_std(bags: &[Bag]) -> Result<f64> {
    let (_, sd) = pooled_moments(bags)?;
    let width = sd.iter().sum::<f64>() / sd.len() as f64;
    if width > 0.0 && width.is_finite() {
        Ok(width)
    } else {
        Err(Error::InvalidWidth(width))
    }
}

/// Materialized Gram block between two bags.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlock {
    pub values: Array2<f64>,
}

/// Gram block `K[k, l] = k(a_k, b_l)`.
pub fn gram_block(a: &Bag, b: &Bag, kernel: &KernelSpec) -> Result<GramBlock> {
    kernel.validate()?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let values =
        Array2::from_shape_fn((a.len(), b.len()), |(k, l)| kernel.eval(a.row(k), b.row(l)));
    Ok(GramBlock { values })
}

/// Within-bag kernel sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSums {
    /// `sum_k k(z_k, z_k)`
    pub diag: f64,
    /// `sum_{k != l} k(z_k, z_l)`
    pub off: f64,
    /// `sum_{k < l} |phi(z_k) - phi(z_l)|^2`
    pub spread: f64,
}

impl SelfSums {
    pub fn full(&self) -> f64 {
        self.diag + self.off
    }
}

pub(crate) fn self_sums(bag: &Bag, kernel: &KernelSpec) -> SelfSums {
    let n = bag.len();
    let mut diag = 0.0;
    let mut upper = 0.0;
    let mut spread = 0.0;
    for k in 0..n {
        let zk = bag.row(k);
        diag += kernel.eval(zk, zk);
        for l in (k + 1)..n {
            let zl = bag.row(l);
            upper += kernel.eval(zk, zl);
            spread += kernel.feature_sq_dist(zk, zl);
        }
    }
    SelfSums {
        diag,
        off: 2.0 * upper,
        spread,
    }
}

pub(crate) fn cross_sum(a: &Bag, b: &Bag, kernel: &KernelSpec) -> f64 {
    let mut total = 0.0;
    for k in 0..a.len() {
        let zk = a.row(k);
        let mut row = 0.0;
        for l in 0..b.len() {
            row += kernel.eval(zk, b.row(l));
        }
        total += row;
    }
    total
}

fn mmd_from_sums(a: &SelfSums, na: usize, b: &SelfSums, nb: usize, cross: f64) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    a.off / (na * (na - 1.0)) + b.off / (nb * (nb - 1.0)) - 2.0 * cross / (na * nb)
}

fn naive_from_sums(s: &SelfSums, n: usize) -> f64 {
    let n = n as f64;
    s.spread / (n * n * (n - 1.0))
}

/// Unbiased estimate of the squared MMD between the distributions behind two bags.
///
/// May be negative. Exactly symmetric in its arguments.
pub fn mmd_u(a: &Bag, b: &Bag, kernel: &KernelSpec) -> Result<f64> {
    kernel.validate()?;
    a.require_len(2)?;
    b.require_len(2)?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let sa = self_sums(a, kernel);
    let sb = self_sums(b, kernel);
    // Floating-point addition commutes, so summing both orientations is symmetric.
    let cross = 0.5 * (cross_sum(a, b, kernel) + cross_sum(b, a, kernel));
    Ok(mmd_from_sums(&sa, a.len(), &sb, b.len(), cross))
}

/// Unbiased estimate of `E |phi(z) - mu|^2 / N`, the mean squared error of
/// the empirical embedding. Non-negative by construction.
pub fn naive_mse_estimate(bag: &Bag, kernel: &KernelSpec) -> Result<f64> {
    kernel.validate()?;
    bag.require_len(2)?;
    Ok(naive_from_sums(&self_sums(bag, kernel), bag.len()))
}

/// Weight matrix applied to the naive embeddings, `K_w = W G W^T`, where `G`
/// holds plug-in inner products of the empirical embeddings.
pub fn inter_task_gram(
    weights: &Array2<f64>,
    bags: &[Bag],
    kernel: &KernelSpec,
) -> Result<Array2<f64>> {
    let sums = KernelSums::new(bags, *kernel)?;
    if weights.ncols() != bags.len() {
        return Err(Error::ShapeMismatch(format!(
            "weights have {} columns for {} bags",
            weights.ncols(),
            bags.len()
        )));
    }
    let g = sums.plugin_gram();
    let k = weights.dot(&g).dot(&weights.t());
    Ok(symmetrize(k))
}

pub(crate) fn symmetrize(mut k: Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (k[[i, j]] + k[[j, i]]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Unbiased estimate of `|sum_j w_j mu_hat_j - mu_ref|^2`, where `mu_ref` is the
/// population embedding behind `reference`.
///
/// The weighted-estimate term keeps within-bag diagonals, because the
/// estimate itself is built from them. The reference term drops its diagonal.
/// The result is not clamped and can be slightly negative.
pub fn estimator_loss(
    weights: ArrayView1<'_, f64>,
    bags: &[Bag],
    reference: &Bag,
    kernel: &KernelSpec,
) -> Result<f64> {
    kernel.validate()?;
    if weights.is_empty() {
        return Err(Error::EmptyInput("weight row".into()));
    }
    if weights.len() != bags.len() {
        return Err(Error::ShapeMismatch(format!(
            "weight row of length {} for {} bags",
            weights.len(),
            bags.len()
        )));
    }
    reference.require_len(2)?;
    let d = common_dim(bags)?;
    if reference.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: reference.dim(),
        });
    }
    let active: Vec<usize> = (0..bags.len()).filter(|&j| weights[j] != 0.0).collect();
    let mut quad = 0.0;
    for (p, &a) in active.iter().enumerate() {
        let na = bags[a].len() as f64;
        quad += weights[a] * weights[a] * self_sums(&bags[a], kernel).full() / (na * na);
        for &b in &active[p + 1..] {
            let nb = bags[b].len() as f64;
            quad +=
                2.0 * weights[a] * weights[b] * cross_sum(&bags[a], &bags[b], kernel) / (na * nb);
        }
    }
    let m = reference.len() as f64;
    let mut lin = 0.0;
    for &a in &active {
        let na = bags[a].len() as f64;
        lin += weights[a] * cross_sum(&bags[a], reference, kernel) / (na * m);
    }
    let r = self_sums(reference, kernel);
    Ok(quad - 2.0 * lin + r.off / (m * (m - 1.0)))
}

/// Lazily evaluated kernel block sums over a fixed collection of bags.
///
/// Each unordered pair is computed at most once and is safe to query from
/// several threads. Only aggregate sums are retained.
pub struct KernelSums<'a> {
    bags: &'a [Bag],
    kernel: KernelSpec,
    index: HashMap<&'a str, usize>,
    cross: Vec<OnceLock<f64>>,
    selfs: Vec<OnceLock<SelfSums>>,
}

impl<'a> KernelSums<'a> {
    pub fn new(bags: &'a [Bag], kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        common_dim(bags)?;
        let mut index = HashMap::with_capacity(bags.len());
        for (i, bag) in bags.iter().enumerate() {
            if index.insert(bag.id(), i).is_some() {
                return Err(Error::DuplicateBagId(bag.id().to_string()));
            }
        }
        let b = bags.len();
        Ok(Self {
            bags,
            kernel,
            index,
            cross: (0..b * (b + 1) / 2).map(|_| OnceLock::new()).collect(),
            selfs: (0..b).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn bags(&self) -> &'a [Bag] {
        self.bags
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownBagId(id.to_string()))
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Row-major packed upper triangle.
        i * self.bags.len() - i * (i + 1) / 2 + j
    }

    pub fn self_sums(&self, i: usize) -> SelfSums {
        *self.selfs[i].get_or_init(|| self_sums(&self.bags[i], &self.kernel))
    }

    /// `sum_{k,l} k(z_ik, z_jl)` including within-bag diagonals when `i == j`.
    pub fn block_sum(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.self_sums(i).full();
        }
        *self.cross[self.slot(i, j)].get_or_init(|| {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            cross_sum(&self.bags[lo], &self.bags[hi], &self.kernel)
        })
    }

    /// Plug-in inner product `<mu_hat_i, mu_hat_j>`.
    pub fn plugin_inner(&self, i: usize, j: usize) -> f64 {
        let (ni, nj) = (self.bags[i].len() as f64, self.bags[j].len() as f64);
        self.block_sum(i, j) / (ni * nj)
    }

    pub fn mmd_u(&self, i: usize, j: usize) -> Result<f64> {
        self.bags[i].require_len(2)?;
        self.bags[j].require_len(2)?;
        let cross = if i == j {
            self.self_sums(i).full()
        } else {
            self.block_sum(i, j)
        };
        Ok(mmd_from_sums(
            &self.self_sums(i),
            self.bags[i].len(),
            &self.self_sums(j),
            self.bags[j].len(),
            cross,
        ))
    }

    pub fn naive_mse(&self, i: usize) -> Result<f64> {
        self.bags[i].require_len(2)?;
        Ok(naive_from_sums(&self.self_sums(i), self.bags[i].len()))
    }

    /// Forces every block; uses the rayon pool.
    pub fn precompute(&self) {
        let b = self.bags.len();
        (0..b).into_par_iter().for_each(|i| {
            self.self_sums(i);
        });
        let pairs: Vec<(usize, usize)> = (0..b)
            .flat_map(|i| ((i + 1)..b).map(move |j| (i, j)))
            .collect();
        pairs.par_iter().for_each(|&(i, j)| {
            self.block_sum(i, j);
        });
    }

    /// Matrix of plug-in inner products between all empirical embeddings.
    pub fn plugin_gram(&self) -> Array2<f64> {
        self.precompute();
        let b = self.bags.len();
        Array2::from_shape_fn((b, b), |(i, j)| self.plugin_inner(i, j))
    }

    /// Matrix of unbiased squared MMD estimates.
    pub fn mmd_matrix(&self) -> Result<Array2<f64>> {
        self.precompute();
        let b = self.bags.len();
        let mut u = Array2::zeros((b, b));
        for i in 0..b {
            for j in i..b {
                let v = self.mmd_u(i, j)?;
                u[[i, j]] = v;
                u[[j, i]] = v;
            }
        }
        Ok(u)
    }

    pub fn naive_mse_all(&self) -> Result<Vec<f64>> {
        (0..self.bags.len()).map(|i| self.naive_mse(i)).collect()
    }
}
