//! Experiment configuration, loadable from TOML.
//!
//! ```toml
//! seed = 7
//! methods = ["ne", "stb0", "stb_weight"]
//! trials_tune = 20
//! trials_eval = 50
//!
//! [source]
//! kind = "toy"
//! setup = "b_num_bags"
//! b = 300
//!
//! [kernel]
//! kind = "auto_rbf"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{GaussianKind, GaussianModel, ToyKind, ToySetup, TOY_TEST_BAG_SIZE};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::harness::eval::ParamPoint;
use crate::kernel::{pooled_feature_std, Bag, KernelSpec};

/// Where the bags of each trial come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// One noisy observation per task around generated means.
    Gaussian {
        model: GaussianKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cluster_spread: Option<f64>,
    },
    /// Two-dimensional Gaussian bags.
    Toy {
        setup: ToyKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        circle_radius: Option<f64>,
    },
    /// Bags read from a CSV file and resampled every trial.
    Csv {
        path: PathBuf,
        /// Samples drawn (without replacement) from every bag per trial.
        #[serde(default = "default_subsample")]
        subsample: usize,
        #[serde(default = "default_true")]
        standardize: bool,
        /// Fraction of bags in the training fold.
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_subsample() -> usize {
    20
}

fn default_true() -> bool {
    true
}

fn default_train_fraction() -> f64 {
    0.5
}

impl Source {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, Source::Gaussian { .. })
    }

    /// Generator parameters of a Gaussian source, with `seed` filled in.
    pub fn gaussian_model(&self, seed: u64) -> Option<GaussianModel> {
        match *self {
            Source::Gaussian {
                model,
                b,
                d,
                cluster_spread,
            } => {
                let base = GaussianModel::new(model, seed);
                Some(GaussianModel {
                    b: b.unwrap_or(base.b),
                    d: d.unwrap_or(base.d),
                    cluster_spread: cluster_spread.unwrap_or(base.cluster_spread),
                    ..base
                })
            }
            _ => None,
        }
    }

    pub fn toy_setup(&self) -> Option<ToySetup> {
        match *self {
            Source::Toy {
                setup,
                b,
                n,
                circle_radius,
            } => {
                let base = ToySetup::new(setup);
                Some(ToySetup {
                    b: b.unwrap_or(base.b),
                    n: n.unwrap_or(base.n),
                    circle_radius: circle_radius.unwrap_or(base.circle_radius),
                    ..base
                })
            }
            _ => None,
        }
    }
}

/// Kernel used in kernel mode. Ignored by Gaussian sources.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    Linear,
    GaussianRbf {
        width: f64,
    },
    /// RBF whose width is the mean pooled feature standard deviation of the
    /// bags at hand.
    #[default]
    AutoRbf,
}

impl KernelChoice {
    pub fn resolve(&self, bags: &[Bag]) -> Result<KernelSpec> {
        match *self {
            KernelChoice::Linear => Ok(KernelSpec::Linear),
            KernelChoice::GaussianRbf { width } => KernelSpec::gaussian_rbf(width),
            KernelChoice::AutoRbf => KernelSpec::gaussian_rbf(pooled_feature_std(bags)?),
        }
    }
}

/// How estimates of generated toy bags are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Unbiased loss against a fresh test bag per task.
    #[default]
    TestBag,
    /// Exact distance to the population embedding.
    Analytic,
}

/// How thresholds are tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Each method tunes its full grid.
    PerMethod,
    /// The threshold is tuned on STB-0 and shared by the other graph methods.
    SharedStb0,
}

/// Candidate values of every tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub zeta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub c: Vec<f64>,
    pub mta_gamma: Vec<f64>,
}

const BASE_ZETA: [f64; 9] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0];

impl Grids {
    /// Default grids for kernel-mode experiments.
    pub fn kernel_default() -> Self {
        Self {
            zeta: BASE_ZETA.to_vec(),
            gamma: (0..=10).map(|k| k as f64 / 10.0).collect(),
            c: (-8..=2).map(|k| 2f64.powi(k)).collect(),
            mta_gamma: (-30..=20).map(|k| 2f64.powi(k)).collect(),
        }
    }

    /// Kernel defaults plus a fine threshold grid on [2, 4], where the
    /// Gaussian-mode optimum lives.
    pub fn gaussian_default() -> Self {
        let mut g = Self::kernel_default();
        g.zeta
            .extend((0..=40).map(|k| (200 + 5 * k) as f64 / 100.0));
        g.normalize();
        g
    }

    /// Sort ascending and drop duplicates.
    pub fn normalize(&mut self) {
        for v in [
            &mut self.zeta,
            &mut self.gamma,
            &mut self.c,
            &mut self.mta_gamma,
        ] {
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    fn validate(&self, methods: &[Method]) -> Result<()> {
        let need = |name: &str, grid: &[f64], used: bool, lo: f64, hi: f64| -> Result<()> {
            if used && grid.is_empty() {
                return Err(Error::Config(format!(
                    "grid `{name}` is empty but a selected method tunes it"
                )));
            }
            if let Some(v) = grid.iter().find(|v| !(**v >= lo && **v <= hi)) {
                return Err(Error::Config(format!(
                    "grid `{name}` holds {v}, outside [{lo}, {hi}]"
                )));
            }
            Ok(())
        };
        let uses = |ms: &[Method]| methods.iter().any(|m| ms.contains(m));
        need(
            "zeta",
            &self.zeta,
            methods.iter().any(Method::uses_graph),
            0.0,
            f64::MAX,
        )?;
        need("gamma", &self.gamma, uses(&[Method::StbWeight]), 0.0, 1.0)?;
        need(
            "c",
            &self.c,
            uses(&[Method::StbTheory]),
            f64::MIN_POSITIVE,
            f64::MAX,
        )?;
        need(
            "mta_gamma",
            &self.mta_gamma,
            uses(&[Method::MtaConst, Method::MtaStb]),
            0.0,
            f64::MAX,
        )
    }

    /// All grid points of `method`, ordered by threshold, then by the second
    /// parameter, both ascending. The first minimum in this order wins ties.
    pub fn points(&self, method: Method) -> Vec<ParamPoint> {
        self.points_at(method, &self.zeta)
    }

    /// Like [`Grids::points`] with the threshold grid replaced by `zetas`.
    pub fn points_at(&self, method: Method, zetas: &[f64]) -> Vec<ParamPoint> {
        let pairs = |second: &[f64], f: &dyn Fn(f64, f64) -> ParamPoint| -> Vec<ParamPoint> {
            zetas
                .iter()
                .flat_map(|&z| second.iter().map(move |&s| (z, s)))
                .map(|(z, s)| f(z, s))
                .collect()
        };
        match method {
            Method::Ne | Method::RKmse | Method::PpJamesStein => vec![ParamPoint::default()],
            Method::MtaConst => self
                .mta_gamma
                .iter()
                .map(|&g| ParamPoint {
                    gamma: Some(g),
                    ..Default::default()
                })
                .collect(),
            Method::Stb0 => zetas
                .iter()
                .map(|&z| ParamPoint {
                    zeta: Some(z),
                    ..Default::default()
                })
                .collect(),
            Method::StbWeight => pairs(&self.gamma, &|z, g| ParamPoint {
                zeta: Some(z),
                gamma: Some(g),
                c: None,
            }),
            Method::StbTheory => pairs(&self.c, &|z, c| ParamPoint {
                zeta: Some(z),
                c: Some(c),
                gamma: None,
            }),
            Method::MtaStb => pairs(&self.mta_gamma, &|z, g| ParamPoint {
                zeta: Some(z),
                gamma: Some(g),
                c: None,
            }),
        }
    }
}

/// Full description of a tuning and benchmarking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub source: Source,
    #[serde(default)]
    pub kernel: KernelChoice,
    #[serde(default)]
    pub loss: LossMode,
    #[serde(default = "default_test_bag_size")]
    pub test_bag_size: usize,
    /// Methods to run; defaults depend on the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<Grids>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default = "default_trials_tune")]
    pub trials_tune: usize,
    #[serde(default = "default_trials_eval")]
    pub trials_eval: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Fixed parameters keyed by method name; such methods skip tuning.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamPoint>,
}

fn default_test_bag_size() -> usize {
    TOY_TEST_BAG_SIZE
}

fn default_trials_tune() -> usize {
    100
}

fn default_trials_eval() -> usize {
    200
}

impl ExperimentConfig {
    pub fn new(source: Source) -> Self {
        Self {
            seed: 0,
            source,
            kernel: KernelChoice::default(),
            loss: LossMode::default(),
            test_bag_size: default_test_bag_size(),
            methods: None,
            grids: None,
            protocol: None,
            trials_tune: default_trials_tune(),
            trials_eval: default_trials_eval(),
            output: None,
            params: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Methods to run, NE first.
    pub fn methods(&self) -> Vec<Method> {
        let mut ms = self.methods.clone().unwrap_or_else(|| {
            let fixed = if self.source.is_gaussian() {
                Method::PpJamesStein
            } else {
                Method::RKmse
            };
            let mut v = vec![fixed];
            v.extend([
                Method::MtaConst,
                Method::MtaStb,
                Method::Stb0,
                Method::StbTheory,
                Method::StbWeight,
            ]);
            v
        });
        ms.retain(|m| *m != Method::Ne);
        ms.insert(0, Method::Ne);
        let mut seen = Vec::new();
        ms.retain(|m| {
            let fresh = !seen.contains(m);
            seen.push(*m);
            fresh
        });
        ms
    }

    pub fn grids(&self) -> Grids {
        match &self.grids {
            Some(g) => {
                let mut g = g.clone();
                g.normalize();
                g
            }
            None if self.source.is_gaussian() => Grids::gaussian_default(),
            None => Grids::kernel_default(),
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol.unwrap_or(if self.source.is_gaussian() {
            Protocol::SharedStb0
        } else {
            Protocol::PerMethod
        })
    }

    /// Explicitly fixed parameters, keyed by method.
    pub fn fixed_params(&self) -> Result<BTreeMap<Method, ParamPoint>> {
        self.params
            .iter()
            .map(|(k, v)| {
                Ok((
                    k.parse::<Method>()
                        .map_err(|e| Error::Config(e.to_string()))?,
                    *v,
                ))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_tune == 0 || self.trials_eval == 0 {
            return Err(Error::Config("trial counts must be at least 1".into()));
        }
        let methods = self.methods();
        let gaussian = self.source.is_gaussian();
        for m in &methods {
            match m {
                Method::RKmse if gaussian => {
                    return Err(Error::Config("R-KMSE needs a kernel-mode source".into()))
                }
                Method::PpJamesStein if !gaussian => {
                    return Err(Error::Config("PP-JS needs a Gaussian source".into()));
                }
                _ => {}
            }
        }
        self.grids().validate(&methods)?;
        self.fixed_params()?;
        match &self.source {
            Source::Gaussian { .. } => self
                .source
                .gaussian_model(self.seed)
                .expect("gaussian source")
                .validate()?,
            Source::Toy { .. } => {
                self.source.toy_setup().expect("toy source").validate()?;
                if self.loss == LossMode::TestBag && self.test_bag_size < 2 {
                    return Err(Error::Config("test bags need at least 2 samples".into()));
                }
            }
            Source::Csv {
                subsample,
                train_fraction,
                ..
            } => {
                if *subsample == 0 {
                    return Err(Error::Config("subsample size must be positive".into()));
                }
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
                }
            }
        }
        if let KernelChoice::GaussianRbf { width } = self.kernel {
            KernelSpec::gaussian_rbf(width)?;
        }
        Ok(())
    }

    /// Copy with one numeric source parameter replaced; used by sweeps.
    pub fn with_override(&self, var: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "`{var}` needs a non-negative integer, got {value}"
                )))
            }
        };
        match (&mut out.source, var) {
            (Source::Gaussian { b, .. }, "b") | (Source::Toy { b, .. }, "b") => *b = Some(count()?),
            (Source::Gaussian { d, .. }, "d") => *d = Some(count()?),
            (Source::Gaussian { cluster_spread, .. }, "cluster_spread") => {
                *cluster_spread = Some(value)
            }
            (Source::Toy { n, .. }, "n") => *n = Some(count()?),
            (Source::Toy { circle_radius, .. }, "circle_radius") => *circle_radius = Some(value),
            (Source::Csv { subsample, .. }, "subsample") => *subsample = count()?,
            (_, "test_bag_size") => out.test_bag_size = count()?,
            _ => {
                return Err(Error::Config(format!(
                    "`{var}` cannot be swept for this source"
                )))
            }
        }
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ExperimentConfig {
        ExperimentConfig::new(Source::Toy {
            setup: ToyKind::BNumBags,
            b: Some(20),
            n: None,
            circle_radius: None,
        })
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = toy();
        cfg.methods = Some(vec![Method::Stb0, Method::RKmse]);
        cfg.params.insert(
            "stb0".into(),
            ParamPoint {
                zeta: Some(2.0),
                ..Default::default()
            },
        );
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg =
            ExperimentConfig::from_toml_str("[source]\nkind = \"gaussian\"\nmodel = \"sparse\"\n")
                .unwrap();
        assert_eq!(cfg.trials_tune, 100);
        assert_eq!(cfg.trials_eval, 200);
        assert_eq!(cfg.protocol(), Protocol::SharedStb0);
        assert_eq!(cfg.source.gaussian_model(0).unwrap().d, 50);
        assert_eq!(cfg.methods()[0], Method::Ne);
        assert!(cfg.methods().contains(&Method::PpJamesStein));
        assert!(cfg.grids().zeta.contains(&3.05));
    }

    #[test]
    fn mode_specific_methods_are_checked() {
        let mut cfg = toy();
        cfg.methods = Some(vec![Method::PpJamesStein]);
        assert!(cfg.validate().is_err());
        let mut g = ExperimentConfig::new(Source::Gaussian {
            model: GaussianKind::Unif,
            b: None,
            d: None,
            cluster_spread: None,
        });
        g.methods = Some(vec![Method::RKmse]);
        assert!(g.validate().is_err());
    }

    #[test]
    fn empty_grid_for_a_tuned_method_is_rejected() {
        let mut cfg = toy();
        let mut g = Grids::kernel_default();
        g.gamma.clear();
        cfg.grids = Some(g.clone());
        assert!(cfg.validate().is_err());
        cfg.methods = Some(vec![Method::Stb0]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_trials_are_rejected() {
        let mut cfg = toy();
        cfg.trials_eval = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn points_are_ordered_by_threshold_then_second_parameter() {
        let g = Grids {
            zeta: vec![2.0, 1.0],
            gamma: vec![0.5, 0.0],
            c: vec![1.0],
            mta_gamma: vec![1.0],
        };
        let mut g2 = g.clone();
        g2.normalize();
        let pts = g2.points(Method::StbWeight);
        let pairs: Vec<(f64, f64)> = pts
            .iter()
            .map(|p| (p.zeta.unwrap(), p.gamma.unwrap()))
            .collect();
        assert_eq!(pairs, vec![(1.0, 0.0), (1.0, 0.5), (2.0, 0.0), (2.0, 0.5)]);
        assert_eq!(g2.points(Method::Ne), vec![ParamPoint::default()]);
    }

    #[test]
    fn default_grids_contain_the_base_grids() {
        let g = Grids::gaussian_default();
        for z in BASE_ZETA {
            assert!(g.zeta.contains(&z));
        }
        for k in -6..=8 {
            assert!(g.mta_gamma.contains(&2f64.powi(k)));
        }
        for c in [0.25, 0.5, 1.0, 2.0, 4.0] {
            assert!(g.c.contains(&c));
        }
    }

    #[test]
    fn overrides_touch_only_the_named_field() {
        let cfg = toy().with_override("n", 80.0).unwrap();
        assert_eq!(cfg.source.toy_setup().unwrap().n, 80);
        assert!(toy().with_override("d", 3.0).is_err());
        assert!(toy().with_override("n", 2.5).is_err());
    }
}
