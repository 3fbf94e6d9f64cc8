//! Synthetic data: high-dimensional Gaussian mean models and small 2-D
//! bag collections with rotated anisotropic covariances.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::Bag;
use crate::rng::{stream, tags};

/// Layout of the task means in the Gaussian setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianKind {
    /// First 10 coordinates uniform on [-20, 20], the rest zero.
    Unif,
    /// 20 centres drawn from N(0, I); means scattered around their centre.
    Cluster,
    /// First 6 coordinates uniform on the sphere of radius 50, the rest zero.
    Sphere,
    /// Two distinct random coordinates uniform on [0, 20], the rest zero.
    Sparse,
}

impl GaussianKind {
    pub const ALL: [GaussianKind; 4] = [
        GaussianKind::Unif,
        GaussianKind::Cluster,
        GaussianKind::Sphere,
        GaussianKind::Sparse,
    ];

    pub fn default_dim(&self) -> usize {
        match self {
            GaussianKind::Sparse => 50,
            _ => 1000,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GaussianKind::Unif => "UNIF",
            GaussianKind::Cluster => "CLUSTER",
            GaussianKind::Sphere => "SPHERE",
            GaussianKind::Sparse => "SPARSE",
        }
    }
}

impl std::str::FromStr for GaussianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unif" => Ok(GaussianKind::Unif),
            "cluster" => Ok(GaussianKind::Cluster),
            "sphere" => Ok(GaussianKind::Sphere),
            "sparse" => Ok(GaussianKind::Sparse),
            _ => Err(invalid(format!("unknown Gaussian model `{s}`"))),
        }
    }
}

pub const UNIF_ACTIVE: usize = 10;
pub const UNIF_HALF_WIDTH: f64 = 20.0;
pub const CLUSTER_COUNT: usize = 20;
pub const SPHERE_ACTIVE: usize = 6;
pub const SPHERE_RADIUS: f64 = 50.0;
pub const SPARSE_MAX: f64 = 20.0;

/// Parameters of a Gaussian mean model. Observations are `mu_i + N(0, I_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub kind: GaussianKind,
    pub b: usize,
    pub d: usize,
    /// Standard deviation of each coordinate of a mean around its cluster centre.
    #[serde(default = "default_cluster_spread")]
    pub cluster_spread: f64,
    pub seed: u64,
}

fn default_cluster_spread() -> f64 {
    0.1
}

impl GaussianModel {
    /// Model with the default task count and dimension.
    pub fn new(kind: GaussianKind, seed: u64) -> Self {
        Self {
            kind,
            b: 2000,
            d: kind.default_dim(),
            cluster_spread: default_cluster_spread(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(invalid("B must be positive"));
        }
        let min_d = match self.kind {
            GaussianKind::Unif => UNIF_ACTIVE,
            GaussianKind::Sphere => SPHERE_ACTIVE,
            GaussianKind::Sparse => 2,
            GaussianKind::Cluster => 1,
        };
        if self.d < min_d {
            return Err(invalid(format!(
                "{} needs d >= {min_d}, got {}",
                self.kind.label(),
                self.d
            )));
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return Err(invalid("cluster spread must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Task means and one noisy observation per task, both stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianData {
    pub means: Array2<f64>,
    pub observations: Array2<f64>,
}

/// Draws means and observations for a Gaussian model.
pub fn gen_gaussian(model: &GaussianModel) -> Result<GaussianData> {
    model.validate()?;
    let (b, d) = (model.b, model.d);
    let centres = if model.kind == GaussianKind::Cluster {
        let mut rng = stream(model.seed, tags::CENTERS, 0);
        Array2::from_shape_fn((CLUSTER_COUNT, d), |_| rng.sample::<f64, _>(StandardNormal))
    } else {
        Array2::zeros((0, d))
    };
    let per_cluster = b.div_ceil(CLUSTER_COUNT);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(model.seed, tags::MEANS, i as u64);
            let mut mean = vec![0.0; d];
            match model.kind {
                GaussianKind::Unif => {
                    let u = Uniform::new_inclusive(-UNIF_HALF_WIDTH, UNIF_HALF_WIDTH);
                    for m in mean.iter_mut().take(UNIF_ACTIVE) {
                        *m = u.sample(&mut rng);
                    }
                }
                GaussianKind::Cluster => {
                    let c = (i / per_cluster).min(CLUSTER_COUNT - 1);
                    for (m, z) in mean.iter_mut().zip(centres.row(c)) {
                        *m = z + model.cluster_spread * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                GaussianKind::Sphere => {
                    let dir = unit_vector(&mut rng, SPHERE_ACTIVE);
                    for (m, u) in mean.iter_mut().zip(dir) {
                        *m = SPHERE_RADIUS * u;
                    }
                }
                GaussianKind::Sparse => {
                    let u = Uniform::new(0.0, SPARSE_MAX);
                    for k in sample(&mut rng, d, 2).into_iter() {
                        // Guard against an exact zero so the mean stays 2-sparse.
                        let mut v = 0.0;
                        while v == 0.0 {
                            v = u.sample(&mut rng);
                        }
                        mean[k] = v;
                    }
                }
            }
            let mut noise_rng = stream(model.seed, tags::NOISE, i as u64);
            let obs = mean
                .iter()
                .map(|m| m + noise_rng.sample::<f64, _>(StandardNormal))
                .collect();
            (mean, obs)
        })
        .collect();
    let mut means = Array2::zeros((b, d));
    let mut observations = Array2::zeros((b, d));
    for (i, (m, x)) in rows.into_iter().enumerate() {
        means.row_mut(i).assign(&ArrayView1::from(&m));
        observations.row_mut(i).assign(&ArrayView1::from(&x));
    }
    Ok(GaussianData {
        means,
        observations,
    })
}

/// Uniform direction on the unit sphere of R^d.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Which of the four toy experiments a collection belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    /// Common bag size `n`, varied across experiments.
    ABagSizes,
    /// Common bag size `n`, number of bags varied across experiments.
    BNumBags,
    /// Bag sizes spaced linearly from 10 to 300.
    CImbalanced,
    /// Ten consecutive bags share a centre; centres lie on a circle.
    DClustered,
}

impl std::str::FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "a_bag_sizes" => Ok(ToyKind::ABagSizes),
            "b" | "b_num_bags" => Ok(ToyKind::BNumBags),
            "c" | "c_imbalanced" => Ok(ToyKind::CImbalanced),
            "d" | "d_clustered" => Ok(ToyKind::DClustered),
            _ => Err(invalid(format!("unknown toy setup `{s}`"))),
        }
    }
}

pub const TOY_MIN_N: usize = 10;
pub const TOY_MAX_N: usize = 300;
pub const TOY_VARIANCES: [f64; 2] = [1.0, 10.0];
pub const TOY_TEST_BAG_SIZE: usize = 1000;

/// Parameters of a toy collection of 2-D bags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySetup {
    pub kind: ToyKind,
    pub b: usize,
    /// Common bag size; ignored by the imbalanced setup.
    pub n: usize,
    /// Radius of the circle carrying cluster centres; used by the clustered setup.
    #[serde(default)]
    pub circle_radius: f64,
}

impl ToySetup {
    pub fn new(kind: ToyKind) -> Self {
        Self {
            kind,
            b: 50,
            n: 50,
            circle_radius: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(invalid("B must be positive"));
        }
        if self.kind != ToyKind::CImbalanced && self.n == 0 {
            return Err(invalid("bag size must be positive"));
        }
        if self.kind == ToyKind::DClustered && (self.b < 10 || self.b % 10 != 0) {
            return Err(invalid(format!(
                "clustered setup needs B to be a positive multiple of 10, got {}",
                self.b
            )));
        }
        if !(self.circle_radius >= 0.0 && self.circle_radius.is_finite()) {
            return Err(invalid("circle radius must be finite and >= 0"));
        }
        Ok(())
    }

    /// Size of bag `i`.
    pub fn bag_size(&self, i: usize) -> usize {
        match self.kind {
            ToyKind::CImbalanced if self.b > 1 => {
                let span = (TOY_MAX_N - TOY_MIN_N) as f64;
                (TOY_MIN_N as f64 + span * i as f64 / (self.b - 1) as f64).round() as usize
            }
            ToyKind::CImbalanced => TOY_MIN_N,
            _ => self.n,
        }
    }

    /// Centre of bag `i`.
    pub fn centre(&self, i: usize) -> [f64; 2] {
        match self.kind {
            ToyKind::DClustered => {
                let clusters = self.b / 10;
                let angle = 2.0 * PI * (i / 10) as f64 / clusters as f64;
                [
                    self.circle_radius * angle.cos(),
                    self.circle_radius * angle.sin(),
                ]
            }
            _ => [0.0, 0.0],
        }
    }
}

/// Ground truth of one toy bag: `N(centre, R(angle) diag(1, 10) R(angle)^T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTruth {
    pub centre: [f64; 2],
    pub angle: f64,
}

impl ToyTruth {
    pub fn covariance(&self) -> Array2<f64> {
        let r = rotation(self.angle);
        let s = Array2::from_diag(&ndarray::arr1(&TOY_VARIANCES));
        r.dot(&s).dot(&r.t())
    }

    /// Draws `n` samples.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (s1, s2) = (TOY_VARIANCES[0].sqrt(), TOY_VARIANCES[1].sqrt());
        let mut out = Array2::zeros((n, 2));
        for mut row in out.rows_mut() {
            let u = s1 * rng.sample::<f64, _>(StandardNormal);
            let v = s2 * rng.sample::<f64, _>(StandardNormal);
            row[0] = self.centre[0] + c * u - s * v;
            row[1] = self.centre[1] + s * u + c * v;
        }
        out
    }
}

/// 2-D rotation by `angle`.
pub fn rotation(angle: f64) -> Array2<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    ndarray::arr2(&[[c, -s], [s, c]])
}

/// Toy bags together with their generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub bags: Vec<Bag>,
    pub truth: Vec<ToyTruth>,
}

/// Draws one toy collection.
pub fn gen_toy(setup: &ToySetup, seed: u64) -> Result<ToyData> {
    setup.validate()?;
    let angle = Uniform::new(-PI / 4.0, PI / 4.0);
    let out: Result<Vec<(Bag, ToyTruth)>> = (0..setup.b)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, tags::TOY_BAG, i as u64);
            let truth = ToyTruth {
                centre: setup.centre(i),
                angle: angle.sample(&mut rng),
            };
            let samples = truth.sample(&mut rng, setup.bag_size(i));
            Ok((Bag::new(format!("bag{i}"), samples)?, truth))
        })
        .collect();
    let (bags, truth) = out?.into_iter().unzip();
    Ok(ToyData { bags, truth })
}

/// Independent evaluation bags of size `m` from each ground truth.
pub fn gen_test_bags(truth: &[ToyTruth], m: usize, seed: u64) -> Result<Vec<Bag>> {
    truth
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut rng = stream(seed, tags::TOY_TEST, i as u64);
            Bag::new(format!("test{i}"), t.sample(&mut rng, m))
        })
        .collect()
}

/// `n` rows drawn without replacement.
pub fn subsample(bag: &Bag, n: usize, seed: u64) -> Result<Bag> {
    if n > bag.len() {
        return Err(Error::BagTooSmall {
            id: bag.id().to_string(),
            n: bag.len(),
            min: n,
        });
    }
    if n == 0 {
        return Err(invalid("subsample size must be positive"));
    }
    let mut rng = stream(seed, tags::SUBSAMPLE, 0);
    let idx = sample(&mut rng, bag.len(), n).into_vec();
    Bag::new(bag.id(), bag.samples().select(ndarray::Axis(0), &idx))
}
