//! Oracle tuning, benchmarking and cross-validation over repeated trials.
//!
//! Every trial draws its data from an indexed seed stream. Tuning and
//! evaluation use different stream tags, so the datasets that select the
//! parameters never score them. Trials run in parallel and are reduced in
//! index order, which keeps reports bit-identical for any thread count.

use std::collections::BTreeMap;
use std::io::Write;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{gen_gaussian, gen_test_bags, gen_toy, subsample};
use crate::error::{invalid, Error, Result};
use crate::estimators::Method;
use crate::harness::config::{ExperimentConfig, LossMode, Protocol, Source};
use crate::harness::eval::{
    evaluate_methods, GaussianProblem, GaussianTask, KmeProblem, ParamPoint, Problem, Targets,
};
use crate::harness::io::{load_bags_csv, standardize};
use crate::kernel::Bag;
use crate::rng::{derive_seed, stream, tags};

/// Which stream a trial is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Tune,
    Eval,
}

/// Selected parameters of one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tuned {
    pub method: Method,
    pub params: ParamPoint,
    /// Mean tuning loss at the selected point; `None` when fixed by the user.
    pub tune_loss: Option<f64>,
}

/// One row of a benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    pub params: ParamPoint,
    pub mean_loss: f64,
    pub stderr: f64,
    /// `100 (1 - mean_loss / mean_loss_NE)`.
    pub pct_decrease: f64,
}

/// Per-method losses over evaluation trials. The first row is NE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// `trial_losses[r][t]`: task-averaged loss of row `r` in trial `t`.
    pub trial_losses: Vec<Vec<f64>>,
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

impl BenchReport {
    fn from_losses(params: &[(Method, ParamPoint)], trial_losses: Vec<Vec<f64>>) -> Result<Self> {
        if params.first().map(|p| p.0) != Some(Method::Ne) {
            return Err(invalid("benchmark reports need NE as their first method"));
        }
        let ne_mean = mean_and_stderr(&trial_losses[0]).0;
        let rows = params
            .iter()
            .zip(&trial_losses)
            .enumerate()
            .map(|(r, (&(method, p), losses))| {
                let (mean_loss, stderr) = mean_and_stderr(losses);
                let pct_decrease = if r == 0 {
                    0.0
                } else {
                    100.0 * (1.0 - mean_loss / ne_mean)
                };
                BenchRow {
                    method,
                    params: p,
                    mean_loss,
                    stderr,
                    pct_decrease,
                }
            })
            .collect();
        Ok(Self { rows, trial_losses })
    }

    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    fn losses(&self, method: Method) -> Result<&[f64]> {
        self.rows
            .iter()
            .position(|r| r.method == method)
            .map(|k| self.trial_losses[k].as_slice())
            .ok_or_else(|| invalid(format!("{method} is not in the report")))
    }

    /// Fractional decrease of `method` against NE with its standard error.
    /// The error treats the NE mean as fixed and uses the per-trial paired
    /// differences, which removes the trial-to-trial variation both share.
    pub fn decrease(&self, method: Method) -> Result<(f64, f64)> {
        self.gap(method, Method::Ne)
    }

    /// Difference of fractional decreases, `decrease(a) - decrease(b)`, with
    /// its paired standard error.
    pub fn gap(&self, a: Method, b: Method) -> Result<(f64, f64)> {
        let ne = mean_and_stderr(self.losses(Method::Ne)?).0;
        let diffs: Vec<f64> = self
            .losses(b)?
            .iter()
            .zip(self.losses(a)?)
            .map(|(lb, la)| (lb - la) / ne)
            .collect();
        Ok(mean_and_stderr(&diffs))
    }

    /// CSV with columns `method,param_json,mean_loss,stderr,pct_decrease`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "param_json",
            "mean_loss",
            "stderr",
            "pct_decrease",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.label().to_string(),
                r.params.to_json(),
                r.mean_loss.to_string(),
                r.stderr.to_string(),
                r.pct_decrease.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plot data of a sweep: columns `sweep_var,value,method,mean_loss,stderr,pct_decrease`.
pub fn write_sweep_csv<W: Write>(
    writer: W,
    var: &str,
    results: &[(f64, BenchReport)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "sweep_var",
        "value",
        "method",
        "mean_loss",
        "stderr",
        "pct_decrease",
    ])?;
    for (value, report) in results {
        for r in &report.rows {
            w.write_record([
                var.to_string(),
                value.to_string(),
                r.method.label().to_string(),
                r.mean_loss.to_string(),
                r.stderr.to_string(),
                r.pct_decrease.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// First strict minimum; non-finite losses never win.
fn argmin(losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in losses.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| v < losses[b]) {
            best = Some(k);
        }
    }
    best
}

type Requests = Vec<(Method, Vec<ParamPoint>)>;

/// A configured experiment with its data source prepared.
pub struct Experiment {
    config: ExperimentConfig,
    /// Loaded (and possibly standardized) bags of a CSV source.
    bags: Option<Vec<Bag>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let bags = match &config.source {
            Source::Csv {
                path,
                standardize: std,
                ..
            } => {
                let bags = load_bags_csv(path)?;
                Some(if *std { standardize(&bags)? } else { bags })
            }
            _ => None,
        };
        Self::check_bags(&config, bags.as_deref())?;
        Ok(Self { config, bags })
    }

    /// Experiment over bags already in memory; the source must be a CSV
    /// source, whose path is then ignored.
    pub fn with_bags(config: ExperimentConfig, bags: Vec<Bag>) -> Result<Self> {
        config.validate()?;
        let Source::Csv {
            standardize: std, ..
        } = &config.source
        else {
            return Err(Error::Config("in-memory bags need a csv source".into()));
        };
        let bags = if *std { standardize(&bags)? } else { bags };
        Self::check_bags(&config, Some(&bags))?;
        Ok(Self {
            config,
            bags: Some(bags),
        })
    }

    fn check_bags(config: &ExperimentConfig, bags: Option<&[Bag]>) -> Result<()> {
        if let (
            Source::Csv {
                subsample,
                train_fraction,
                ..
            },
            Some(bags),
        ) = (&config.source, bags)
        {
            if let Some(b) = bags.iter().find(|b| b.len() < *subsample) {
                return Err(Error::BagTooSmall {
                    id: b.id().to_string(),
                    n: b.len(),
                    min: *subsample,
                });
            }
            let train = (bags.len() as f64 * train_fraction).round() as usize;
            if train < 2 || bags.len() - train < 2 {
                return Err(Error::Config(format!(
                    "{} bags cannot be split into two folds of at least 2",
                    bags.len()
                )));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Seed of trial `t` of a phase.
    pub fn trial_seed(&self, phase: Phase, t: usize) -> u64 {
        let tag = match (phase, &self.config.source) {
            (_, Source::Csv { .. }) => tags::CV_TRIAL,
            (Phase::Tune, _) => tags::TUNE_TRIAL,
            (Phase::Eval, _) => tags::EVAL_TRIAL,
        };
        derive_seed(self.config.seed, tag, t as u64)
    }

    /// Problem of trial `t`. For CSV sources the tuning phase sees the
    /// training fold of the trial's split and the evaluation phase its test
    /// fold.
    pub fn problem(&self, phase: Phase, t: usize) -> Result<Box<dyn Problem>> {
        let seed = self.trial_seed(phase, t);
        let cfg = &self.config;
        match &cfg.source {
            Source::Gaussian { .. } => {
                let model = cfg.source.gaussian_model(seed).expect("gaussian source");
                let data = gen_gaussian(&model)?;
                Ok(Box::new(GaussianProblem::new(
                    data.observations,
                    data.means,
                    1,
                )?))
            }
            Source::Toy { .. } => {
                let setup = cfg.source.toy_setup().expect("toy source");
                let data = gen_toy(&setup, seed)?;
                let kernel = cfg.kernel.resolve(&data.bags)?;
                let problem = match cfg.loss {
                    LossMode::Analytic => {
                        let tasks: Vec<GaussianTask> =
                            data.truth.iter().map(GaussianTask::from).collect();
                        KmeProblem::new(&data.bags, kernel, Targets::Analytic(&tasks))?
                    }
                    LossMode::TestBag => {
                        let refs = gen_test_bags(&data.truth, cfg.test_bag_size, seed)?;
                        KmeProblem::new(&data.bags, kernel, Targets::Bags(&refs))?
                    }
                };
                Ok(Box::new(problem))
            }
            Source::Csv {
                subsample: n,
                train_fraction,
                ..
            } => {
                let all = self.bags.as_ref().expect("csv bags are loaded");
                let mut order: Vec<usize> = (0..all.len()).collect();
                order.shuffle(&mut stream(seed, tags::SPLIT, 0));
                let cut = (all.len() as f64 * train_fraction).round() as usize;
                let fold = match phase {
                    Phase::Tune => &order[..cut],
                    Phase::Eval => &order[cut..],
                };
                let full: Vec<Bag> = fold.iter().map(|&i| all[i].clone()).collect();
                let small: Result<Vec<Bag>> = fold
                    .par_iter()
                    .map(|&i| subsample(&all[i], *n, derive_seed(seed, tags::SUBSAMPLE, i as u64)))
                    .collect();
                let small = small?;
                let kernel = cfg.kernel.resolve(&small)?;
                Ok(Box::new(KmeProblem::new(
                    &small,
                    kernel,
                    Targets::Plugin(&full),
                )?))
            }
        }
    }

    /// Mean loss of every requested point over `trials` trials of `phase`.
    fn mean_losses(
        &self,
        phase: Phase,
        trials: std::ops::Range<usize>,
        requests: &Requests,
    ) -> Result<Vec<Vec<f64>>> {
        let reqs: Vec<(Method, &[ParamPoint])> =
            requests.iter().map(|(m, p)| (*m, p.as_slice())).collect();
        let count = trials.len() as f64;
        let per_trial: Result<Vec<Vec<Vec<f64>>>> = trials
            .into_par_iter()
            .map(|t| {
                let problem = self.problem(phase, t)?;
                evaluate_methods(problem.as_ref(), &reqs)
            })
            .collect();
        let per_trial = per_trial?;
        let mut sums: Vec<Vec<f64>> = requests.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        for trial in &per_trial {
            for (s, l) in sums.iter_mut().zip(trial) {
                s.iter_mut().zip(l).for_each(|(a, b)| *a += b);
            }
        }
        sums.iter_mut().flatten().for_each(|v| *v /= count);
        Ok(sums)
    }

    fn select(requests: &Requests, losses: &[Vec<f64>]) -> Result<Vec<Tuned>> {
        requests
            .iter()
            .zip(losses)
            .map(|((method, points), l)| {
                let k = argmin(l)
                    .ok_or_else(|| invalid(format!("{method}: no grid point has a finite loss")))?;
                Ok(Tuned {
                    method: *method,
                    params: points[k],
                    tune_loss: Some(l[k]),
                })
            })
            .collect()
    }

    /// Tune every method on `trials` trials of `phase`, following the
    /// configured protocol. Methods with fixed parameters are not tuned.
    fn tune_on(&self, phase: Phase, trials: std::ops::Range<usize>) -> Result<Vec<Tuned>> {
        let cfg = &self.config;
        let grids = cfg.grids();
        let fixed = cfg.fixed_params()?;
        let mut chosen: BTreeMap<Method, Tuned> = BTreeMap::new();
        for (&method, &params) in &fixed {
            chosen.insert(
                method,
                Tuned {
                    method,
                    params,
                    tune_loss: None,
                },
            );
        }
        let open: Vec<Method> = cfg
            .methods()
            .into_iter()
            .filter(|m| !fixed.contains_key(m))
            .collect();
        let shared = cfg.protocol() == Protocol::SharedStb0 && open.iter().any(|m| m.uses_graph());
        let first: Requests = open
            .iter()
            .filter(|m| !(shared && m.uses_graph()))
            .map(|&m| (m, grids.points(m)))
            .chain(
                (shared && !fixed.contains_key(&Method::Stb0))
                    .then(|| (Method::Stb0, grids.points(Method::Stb0))),
            )
            .collect();
        let losses = self.mean_losses(phase, trials.clone(), &first)?;
        for t in Self::select(&first, &losses)? {
            chosen.insert(t.method, t);
        }
        if shared {
            let zeta = chosen[&Method::Stb0]
                .params
                .zeta
                .ok_or_else(|| Error::Config("fixed STB-0 parameters need zeta".into()))?;
            info!("shared threshold zeta = {zeta}");
            let second: Requests = open
                .iter()
                .filter(|m| m.uses_graph() && **m != Method::Stb0)
                .map(|&m| (m, grids.points_at(m, &[zeta])))
                .collect();
            if !second.is_empty() {
                let losses = self.mean_losses(phase, trials, &second)?;
                for t in Self::select(&second, &losses)? {
                    chosen.insert(t.method, t);
                }
            }
        }
        Ok(cfg.methods().into_iter().map(|m| chosen[&m]).collect())
    }

    /// Oracle tuning over `trials_tune` trials of the tuning stream.
    pub fn tune(&self) -> Result<Vec<Tuned>> {
        info!("tuning on {} trials", self.config.trials_tune);
        self.tune_on(Phase::Tune, 0..self.config.trials_tune)
    }

    /// Loss of each method at fixed parameters over `trials_eval` fresh
    /// trials. NE is added in front when missing.
    pub fn run_benchmark(&self, params: &[(Method, ParamPoint)]) -> Result<BenchReport> {
        let mut params: Vec<(Method, ParamPoint)> = params
            .iter()
            .copied()
            .filter(|p| p.0 != Method::Ne)
            .collect();
        params.insert(0, (Method::Ne, ParamPoint::default()));
        let requests: Requests = params.iter().map(|&(m, p)| (m, vec![p])).collect();
        let reqs: Vec<(Method, &[ParamPoint])> =
            requests.iter().map(|(m, p)| (*m, p.as_slice())).collect();
        info!("evaluating on {} trials", self.config.trials_eval);
        let per_trial: Result<Vec<Vec<f64>>> = (0..self.config.trials_eval)
            .into_par_iter()
            .map(|t| {
                let problem = self.problem(Phase::Eval, t)?;
                Ok(evaluate_methods(problem.as_ref(), &reqs)?
                    .into_iter()
                    .map(|v| v[0])
                    .collect())
            })
            .collect();
        let per_trial = per_trial?;
        let losses = (0..params.len())
            .map(|r| per_trial.iter().map(|t| t[r]).collect())
            .collect();
        BenchReport::from_losses(&params, losses)
    }

    /// Cross-validation on a CSV source: in every trial the parameters are
    /// tuned on the training fold and scored on the test fold. The reported
    /// parameters are those selected most often.
    pub fn cross_validate(&self) -> Result<BenchReport> {
        if self.bags.is_none() {
            return Err(Error::Config("cross-validation needs a csv source".into()));
        }
        let methods = self.config.methods();
        let trials = self.config.trials_eval;
        info!("cross-validating over {trials} splits");
        let per_trial: Result<Vec<(Vec<ParamPoint>, Vec<f64>)>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let tuned = self.tune_on(Phase::Tune, t..t + 1)?;
                let requests: Requests = tuned.iter().map(|x| (x.method, vec![x.params])).collect();
                let reqs: Vec<(Method, &[ParamPoint])> =
                    requests.iter().map(|(m, p)| (*m, p.as_slice())).collect();
                let problem = self.problem(Phase::Eval, t)?;
                let losses = evaluate_methods(problem.as_ref(), &reqs)?
                    .into_iter()
                    .map(|v| v[0])
                    .collect();
                Ok((tuned.iter().map(|x| x.params).collect(), losses))
            })
            .collect();
        let per_trial = per_trial?;
        let params: Vec<(Method, ParamPoint)> = methods
            .iter()
            .enumerate()
            .map(|(r, &m)| {
                let mut counts: Vec<(ParamPoint, usize)> = Vec::new();
                for (p, _) in &per_trial {
                    match counts.iter_mut().find(|(q, _)| *q == p[r]) {
                        Some(c) => c.1 += 1,
                        None => counts.push((p[r], 1)),
                    }
                }
                // Most frequent, earliest first seen on ties.
                let best = counts
                    .iter()
                    .fold(None::<&(ParamPoint, usize)>, |b, c| match b {
                        Some(b) if b.1 >= c.1 => Some(b),
                        _ => Some(c),
                    });
                (m, best.expect("at least one trial").0)
            })
            .collect();
        let losses = (0..methods.len())
            .map(|r| per_trial.iter().map(|(_, l)| l[r]).collect())
            .collect();
        BenchReport::from_losses(&params, losses)
    }

    /// Full run: cross-validation for CSV sources, otherwise oracle tuning
    /// followed by the benchmark.
    pub fn run(&self) -> Result<BenchReport> {
        if self.bags.is_some() {
            return self.cross_validate();
        }
        let tuned = self.tune()?;
        for t in &tuned {
            info!("{}: {}", t.method, t.params.to_json());
        }
        let params: Vec<(Method, ParamPoint)> =
            tuned.iter().map(|t| (t.method, t.params)).collect();
        self.run_benchmark(&params)
    }
}

/// Run the full experiment once per value of a source parameter.
pub fn run_sweep(
    config: &ExperimentConfig,
    var: &str,
    values: &[f64],
) -> Result<Vec<(f64, BenchReport)>> {
    values
        .iter()
        .map(|&v| {
            info!("sweep {var} = {v}");
            Ok((v, Experiment::new(config.with_override(var, v)?)?.run()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ToyKind;
    use crate::harness::config::{Grids, KernelChoice};
    use ndarray::Array2;

    fn toy_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(Source::Toy {
            setup: ToyKind::BNumBags,
            b: Some(12),
            n: Some(10),
            circle_radius: None,
        });
        cfg.trials_tune = 3;
        cfg.trials_eval = 4;
        cfg.loss = LossMode::Analytic;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn argmin_prefers_the_first_minimum() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin(&[f64::NAN]), None);
    }

    #[test]
    fn single_point_grid_selects_that_point() {
        let mut cfg = toy_config();
        cfg.methods = Some(vec![Method::StbWeight]);
        cfg.grids = Some(Grids {
            zeta: vec![2.0],
            gamma: vec![0.4],
            c: vec![1.0],
            mta_gamma: vec![1.0],
        });
        let tuned = Experiment::new(cfg).unwrap().tune().unwrap();
        assert_eq!(tuned[0].params, ParamPoint::default());
        assert_eq!(
            tuned[1].params,
            ParamPoint {
                zeta: Some(2.0),
                gamma: Some(0.4),
                c: None
            }
        );
    }

    #[test]
    fn ne_only_report_has_zero_decrease() {
        let mut cfg = toy_config();
        cfg.methods = Some(vec![Method::Ne]);
        let report = Experiment::new(cfg).unwrap().run().unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].pct_decrease, 0.0);
        assert_eq!(report.decrease(Method::Ne).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn tune_and_eval_streams_differ() {
        let e = Experiment::new(toy_config()).unwrap();
        assert_ne!(e.trial_seed(Phase::Tune, 0), e.trial_seed(Phase::Eval, 0));
    }

    #[test]
    fn fixed_parameters_skip_tuning() {
        let mut cfg = toy_config();
        cfg.methods = Some(vec![Method::Stb0]);
        cfg.params.insert(
            "stb0".into(),
            ParamPoint {
                zeta: Some(123.0),
                ..Default::default()
            },
        );
        let tuned = Experiment::new(cfg).unwrap().tune().unwrap();
        assert_eq!(tuned[1].params.zeta, Some(123.0));
        assert_eq!(tuned[1].tune_loss, None);
    }

    #[test]
    fn shared_protocol_reuses_the_stb0_threshold() {
        let mut cfg = toy_config();
        cfg.protocol = Some(Protocol::SharedStb0);
        cfg.methods = Some(vec![Method::StbWeight, Method::MtaStb]);
        let tuned = Experiment::new(cfg).unwrap().tune().unwrap();
        assert_eq!(tuned.len(), 3);
        assert_eq!(tuned[1].params.zeta, tuned[2].params.zeta);
    }

    #[test]
    fn csv_cross_validation_runs() {
        let bags: Vec<Bag> = (0..8)
            .map(|i| {
                let x = Array2::from_shape_fn((6, 2), |(r, c)| {
                    ((i * 7 + r * 3 + c * 5) % 11) as f64 + (i / 4) as f64
                });
                Bag::new(format!("b{i}"), x).unwrap()
            })
            .collect();
        let mut cfg = ExperimentConfig::new(Source::Csv {
            path: "unused.csv".into(),
            subsample: 4,
            standardize: true,
            train_fraction: 0.5,
        });
        cfg.kernel = KernelChoice::GaussianRbf { width: 1.0 };
        cfg.trials_eval = 3;
        cfg.methods = Some(vec![Method::RKmse, Method::Stb0]);
        let e = Experiment::with_bags(cfg, bags).unwrap();
        let a = e.run().unwrap();
        assert_eq!(a, e.run().unwrap());
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.trial_losses[0].len(), 3);
    }

    #[test]
    fn report_csv_has_the_documented_header() {
        let mut cfg = toy_config();
        cfg.methods = Some(vec![Method::RKmse]);
        let report = Experiment::new(cfg).unwrap().run().unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("method,param_json,mean_loss,stderr,pct_decrease\nNE,{},"));
        assert_eq!(text.lines().count(), 3);
    }
}
