//! Monte-Carlo checks of the deviation inequalities behind the similarity tests.
//!
//! Each check simulates a deviation event many times and compares the
//! observed frequency with the stated probability bound. The comparison is
//! one-sided: the empirical rate may not exceed the bound by more than three
//! Monte-Carlo standard errors.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{q_mmd, q_sigma};
use crate::datagen::unit_vector;
use crate::error::{invalid, Error, Result};
use crate::kernel::{inter_task_gram, mmd_u, Bag, KernelSpec};
use crate::rng::{stream, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `|Z| >= sqrt(|mu|^2 + sigma^2 d) + sigma sqrt(2t)`, bound `e^{-t}`.
    GaussNormUpper,
    /// `|Z| <= sqrt(|mu|^2 + sigma^2 d) - 2 sigma sqrt(2t)`, bound `e^{-t}`.
    GaussNormLower,
    /// `<X1, X2> >= sigma^2 (sqrt(2dt) + t)`, bound `e^{-t}`.
    GaussDot,
    /// Upper deviation of the squared norm of a bounded empirical mean, bound `2e^{-t}`.
    BoundedNormUpper,
    /// Lower deviation of the squared norm of a bounded empirical mean, bound `2e^{-t}`, `t >= 1`.
    BoundedNormLower,
    /// Upper deviation of the unbiased squared MMD, bound `8e^{-t}`.
    UstatUpper,
    /// Lower deviation of the unbiased squared MMD, bound `8e^{-t}`.
    UstatLower,
    /// Deterministic Frobenius inequality between true and estimated inter-task Gram matrices.
    GramFrobenius,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        CheckKind::GaussNormUpper,
        CheckKind::GaussNormLower,
        CheckKind::GaussDot,
        CheckKind::BoundedNormUpper,
        CheckKind::BoundedNormLower,
        CheckKind::UstatUpper,
        CheckKind::UstatLower,
        CheckKind::GramFrobenius,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::GaussNormUpper => "gauss_norm_upper",
            CheckKind::GaussNormLower => "gauss_norm_lower",
            CheckKind::GaussDot => "gauss_dot",
            CheckKind::BoundedNormUpper => "bounded_norm_upper",
            CheckKind::BoundedNormLower => "bounded_norm_lower",
            CheckKind::UstatUpper => "ustat_upper",
            CheckKind::UstatLower => "ustat_lower",
            CheckKind::GramFrobenius => "gram_frobenius",
        }
    }

    /// Multiplier `c` of the bound `c e^{-t}`; zero for the deterministic check.
    pub fn bound_multiplier(&self) -> f64 {
        match self {
            CheckKind::GaussNormUpper | CheckKind::GaussNormLower | CheckKind::GaussDot => 1.0,
            CheckKind::BoundedNormUpper | CheckKind::BoundedNormLower => 2.0,
            CheckKind::UstatUpper | CheckKind::UstatLower => 8.0,
            CheckKind::GramFrobenius => 0.0,
        }
    }

    /// Stated probability bound, capped at one.
    pub fn bound(&self, t: f64) -> f64 {
        (self.bound_multiplier() * (-t).exp()).min(1.0)
    }

    /// Parameters used when none are supplied.
    pub fn default_params(&self) -> CheckParams {
        match self {
            CheckKind::GaussNormUpper | CheckKind::GaussNormLower => CheckParams::Gaussian {
                mean: (0..50).map(|k| if k < 5 { 1.0 } else { 0.0 }).collect(),
                sigma: 1.0,
            },
            CheckKind::GaussDot => CheckParams::Gaussian {
                mean: vec![0.0; 50],
                sigma: 1.0,
            },
            CheckKind::BoundedNormUpper | CheckKind::BoundedNormLower => CheckParams::Sphere {
                centre: (0..20).map(|k| if k == 0 { 0.5 } else { 0.0 }).collect(),
                radius: 1.0,
                n: 20,
            },
            CheckKind::UstatUpper | CheckKind::UstatLower => CheckParams::SpherePair {
                centre_x: vec![0.0; 20],
                centre_y: (0..20).map(|k| if k == 0 { 0.3 } else { 0.0 }).collect(),
                radius: 1.0,
                n: 10,
            },
            CheckKind::GramFrobenius => CheckParams::GramInstances {
                b: 20,
                n: 10,
                d: 5,
                radius: 1.0,
                centre_scale: 1.0,
            },
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown check `{s}`")))
    }
}

/// Distribution families the checks can sample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CheckParams {
    /// `N(mean, sigma^2 I_d)` with `d = mean.len()`.
    Gaussian { mean: Vec<f64>, sigma: f64 },
    /// Empirical mean of `n` draws of `centre + radius u`, `u` uniform on the unit sphere.
    Sphere {
        centre: Vec<f64>,
        radius: f64,
        n: usize,
    },
    /// Two independent bags of `n` such draws with a common radius.
    SpherePair {
        centre_x: Vec<f64>,
        centre_y: Vec<f64>,
        radius: f64,
        n: usize,
    },
    /// Random instances of `b` tasks, each a bag of `n` such draws with
    /// centres of norm at most `centre_scale`.
    GramInstances {
        b: usize,
        n: usize,
        d: usize,
        radius: f64,
        centre_scale: f64,
    },
}

/// One Monte-Carlo verification job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCheck {
    pub kind: CheckKind,
    pub params: CheckParams,
    pub t: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Result of a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub kind: CheckKind,
    pub t: f64,
    pub reps: usize,
    pub bound: f64,
    pub violations: usize,
    pub rate: f64,
}

impl CheckOutcome {
    /// Largest rate still compatible with the bound at three standard errors.
    pub fn tolerance(&self) -> f64 {
        self.bound + 3.0 * (self.bound * (1.0 - self.bound) / self.reps as f64).sqrt()
    }

    pub fn passes(&self) -> bool {
        if self.kind == CheckKind::GramFrobenius {
            self.violations == 0
        } else {
            self.rate <= self.tolerance()
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sphere_mean<R: Rng>(rng: &mut R, centre: &[f64], radius: f64, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; centre.len()];
    for _ in 0..n {
        for (a, u) in acc.iter_mut().zip(unit_vector(rng, centre.len())) {
            *a += u;
        }
    }
    acc.iter()
        .zip(centre)
        .map(|(a, c)| c + radius * a / n as f64)
        .collect()
}

fn sphere_bag<R: Rng>(rng: &mut R, id: &str, centre: &[f64], radius: f64, n: usize) -> Result<Bag> {
    let d = centre.len();
    let mut out = Array2::zeros((n, d));
    for mut row in out.rows_mut() {
        for ((x, u), c) in row.iter_mut().zip(unit_vector(rng, d)).zip(centre) {
            *x = c + radius * u;
        }
    }
    Bag::new(id, out)
}

/// Event predicate for one replicate; the check counts how often it fires.
type Event = Box<dyn Fn(&mut rand_chacha::ChaCha8Rng) -> Result<bool> + Sync>;

fn unsupported(kind: CheckKind, params: &CheckParams) -> Error {
    let family = match params {
        CheckParams::Gaussian { .. } => "gaussian",
        CheckParams::Sphere { .. } => "sphere",
        CheckParams::SpherePair { .. } => "sphere_pair",
        CheckParams::GramInstances { .. } => "gram_instances",
    };
    invalid(format!("check {kind} does not support the {family} family"))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn build_event(check: &ConcentrationCheck) -> Result<Event> {
    let t = check.t;
    match (check.kind, check.params.clone()) {
        (
            CheckKind::GaussNormUpper | CheckKind::GaussNormLower,
            CheckParams::Gaussian { mean, sigma },
        ) => {
            positive("sigma", sigma)?;
            let d = mean.len() as f64;
            let centre = (norm2(&mean) + sigma * sigma * d).sqrt();
            let upper = check.kind == CheckKind::GaussNormUpper;
            let threshold = if upper {
                centre + sigma * (2.0 * t).sqrt()
            } else {
                centre - 2.0 * sigma * (2.0 * t).sqrt()
            };
            Ok(Box::new(move |rng| {
                let z: f64 = mean
                    .iter()
                    .map(|m| (m + sigma * rng.sample::<f64, _>(StandardNormal)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Ok(if upper {
                    z >= threshold
                } else {
                    z <= threshold
                })
            }))
        }
        (CheckKind::GaussDot, CheckParams::Gaussian { mean, sigma }) => {
            positive("sigma", sigma)?;
            if mean.iter().any(|&m| m != 0.0) {
                return Err(invalid("the scalar-product check needs centred variables"));
            }
            let d = mean.len();
            let threshold = sigma * sigma * ((2.0 * d as f64 * t).sqrt() + t);
            Ok(Box::new(move |rng| {
                let s: f64 = (0..d)
                    .map(|_| {
                        sigma
                            * sigma
                            * rng.sample::<f64, _>(StandardNormal)
                            * rng.sample::<f64, _>(StandardNormal)
                    })
                    .sum();
                Ok(s >= threshold)
            }))
        }
        (
            CheckKind::BoundedNormUpper | CheckKind::BoundedNormLower,
            CheckParams::Sphere { centre, radius, n },
        ) => {
            positive("radius", radius)?;
            if n == 0 || centre.is_empty() {
                return Err(invalid("sphere family needs n >= 1 and d >= 1"));
            }
            let upper = check.kind == CheckKind::BoundedNormUpper;
            if !upper && t < 1.0 {
                return Err(invalid("the lower bounded-norm deviation needs t >= 1"));
            }
            let d = centre.len() as f64;
            let mu = norm2(&centre).sqrt();
            let l = mu + radius;
            let trace = radius * radius;
            let q = q_sigma(t, trace, trace / d, n, l)?;
            let root = (trace / n as f64).sqrt();
            let threshold = if upper {
                mu * mu + (root + q).powi(2) + 2.0 * mu * q
            } else {
                mu * mu + (root - 4.0 * q).max(0.0).powi(2) - 2.0 * mu * q
            };
            Ok(Box::new(move |rng| {
                let v2 = norm2(&sphere_mean(rng, &centre, radius, n));
                Ok(if upper {
                    v2 >= threshold
                } else {
                    v2 <= threshold
                })
            }))
        }
        (
            CheckKind::UstatUpper | CheckKind::UstatLower,
            CheckParams::SpherePair {
                centre_x,
                centre_y,
                radius,
                n,
            },
        ) => {
            positive("radius", radius)?;
            if n < 2 {
                return Err(invalid("the U-statistic needs n >= 2"));
            }
            if t < 1.0 {
                return Err(invalid("the U-statistic deviations need t >= 1"));
            }
            if centre_x.len() != centre_y.len() || centre_x.is_empty() {
                return Err(Error::DimensionMismatch {
                    expected: centre_x.len(),
                    got: centre_y.len(),
                });
            }
            let d = centre_x.len() as f64;
            let l = norm2(&centre_x).sqrt().max(norm2(&centre_y).sqrt()) + radius;
            let sigma_bar2 = radius * radius / n as f64;
            let q = q_mmd(t, sigma_bar2, d, n, l)?;
            let delta2: f64 = centre_x
                .iter()
                .zip(&centre_y)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let delta = delta2.sqrt();
            let s = (2.0 * sigma_bar2).sqrt();
            let upper = check.kind == CheckKind::UstatUpper;
            let threshold = if upper {
                delta2 + 2.0 * delta * q + 2.0 * s * q + 11.0 * q * q
            } else {
                delta2 - 2.0 * delta * q - 8.0 * s * q - 32.0 * q * q
            };
            Ok(Box::new(move |rng| {
                let x = sphere_bag(rng, "x", &centre_x, radius, n)?;
                let y = sphere_bag(rng, "y", &centre_y, radius, n)?;
                let u = mmd_u(&x, &y, &KernelSpec::Linear)?;
                Ok(if upper {
                    u >= threshold
                } else {
                    u <= threshold
                })
            }))
        }
        (
            CheckKind::GramFrobenius,
            CheckParams::GramInstances {
                b,
                n,
                d,
                radius,
                centre_scale,
            },
        ) => {
            positive("radius", radius)?;
            if b == 0 || n == 0 || d == 0 || !(centre_scale >= 0.0) {
                return Err(invalid(
                    "gram instances need b, n, d >= 1 and a non-negative centre scale",
                ));
            }
            let l = centre_scale + radius;
            Ok(Box::new(move |rng| {
                let mut centres = Vec::with_capacity(b);
                let mut bags = Vec::with_capacity(b);
                for i in 0..b {
                    let scale = centre_scale * rng.gen::<f64>();
                    let c: Vec<f64> = unit_vector(rng, d).into_iter().map(|u| scale * u).collect();
                    bags.push(sphere_bag(rng, &format!("t{i}"), &c, radius, n)?);
                    centres.push(c);
                }
                let k_hat = inter_task_gram(&Array2::eye(b), &bags, &KernelSpec::Linear)?;
                let mut lhs = 0.0;
                for i in 0..b {
                    for j in 0..b {
                        let k = crate::kernel::dot(&centres[i], &centres[j]);
                        lhs += ((k - k_hat[[i, j]]) / b as f64).powi(2);
                    }
                }
                let err: f64 = bags
                    .iter()
                    .zip(&centres)
                    .map(|(bag, c)| {
                        bag.mean()
                            .iter()
                            .zip(c)
                            .map(|(a, m)| (a - m).powi(2))
                            .sum::<f64>()
                    })
                    .sum();
                let rhs = 4.0 * l * l / b as f64 * err;
                // Allow for rounding in the Gram computation.
                Ok(lhs > rhs * (1.0 + 1e-9) + 1e-12)
            }))
        }
        (kind, params) => Err(unsupported(kind, &params)),
    }
}

/// Runs a check and reports how often its deviation event occurred.
pub fn run_check(check: &ConcentrationCheck) -> Result<CheckOutcome> {
    if check.reps == 0 {
        return Err(invalid("reps must be positive"));
    }
    if !(check.t >= 0.0 && check.t.is_finite()) {
        return Err(invalid(format!(
            "t must be finite and >= 0, got {}",
            check.t
        )));
    }
    let event = build_event(check)?;
    let kind_tag = CheckKind::ALL
        .iter()
        .position(|k| *k == check.kind)
        .unwrap_or(0) as u64;
    let seed = crate::rng::derive_seed(check.seed, tags::CHECK, kind_tag);
    let hits: Result<Vec<bool>> = (0..check.reps)
        .into_par_iter()
        .map(|r| event(&mut stream(seed, check.t.to_bits(), r as u64)))
        .collect();
    let violations = hits?.into_iter().filter(|&h| h).count();
    Ok(CheckOutcome {
        kind: check.kind,
        t: check.t,
        reps: check.reps,
        bound: check.kind.bound(check.t),
        violations,
        rate: violations as f64 / check.reps as f64,
    })
}
