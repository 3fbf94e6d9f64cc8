//! `mtshrink` command-line harness.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mtshrink::concentration::{run_check, CheckKind, ConcentrationCheck};
use mtshrink::datagen::{
    gen_gaussian, gen_test_bags, gen_toy, GaussianKind, GaussianModel, ToyKind, ToySetup,
};
use mtshrink::estimators::{one_sample_gamma, Method};
use mtshrink::harness::config::{ExperimentConfig, KernelChoice, LossMode, Source};
use mtshrink::harness::estimate::{estimate, neighbor_graph, Setting};
use mtshrink::harness::eval::ParamPoint;
use mtshrink::harness::experiment::{run_sweep, write_sweep_csv, Experiment, Tuned};
use mtshrink::harness::io::{
    load_bags_csv, write_bags_csv, write_graph_csv, write_labeled_matrix, write_vectors_csv,
};
use mtshrink::Bag;

#[derive(Parser)]
#[command(
    name = "mtshrink",
    version,
    about = "Multi-task mean and kernel-mean shrinkage estimators"
)]
struct Cli {
    /// Master seed; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate bags from a synthetic model and write them as CSV.
    Generate(GenerateArgs),
    /// Run the pairwise similarity tests and write the neighbour graph.
    Test(TestArgs),
    /// Estimate all bag means with one method.
    Estimate(EstimateArgs),
    /// Tune method parameters on generated or resampled data.
    Tune(ExperimentArgs),
    /// Tune (unless parameters are fixed) and evaluate on fresh trials.
    Bench(BenchArgs),
    /// Monte-Carlo check of the concentration inequalities.
    VerifyBounds(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Gaussian mean model (one observation per task).
    #[arg(long, value_parser = parse_from_str::<GaussianKind>, conflicts_with = "toy")]
    model: Option<GaussianKind>,
    /// Toy setup a, b, c or d (two-dimensional bags).
    #[arg(long, value_parser = parse_from_str::<ToyKind>)]
    toy: Option<ToyKind>,
    /// Number of tasks.
    #[arg(long)]
    b: Option<usize>,
    /// Dimension (Gaussian models).
    #[arg(long)]
    d: Option<usize>,
    /// Bag size (toy setups).
    #[arg(long)]
    n: Option<usize>,
    /// Per-coordinate standard deviation of means around their cluster centre.
    #[arg(long)]
    cluster_spread: Option<f64>,
    /// Radius of the circle of cluster centres (toy setup d).
    #[arg(long)]
    circle_radius: Option<f64>,
    /// Bag CSV output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the true means (Gaussian models) to this CSV.
    #[arg(long)]
    means_out: Option<PathBuf>,
    /// Also write one held-out test bag of this size per task (toy setups).
    #[arg(long, requires = "test_out")]
    test_size: Option<usize>,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Vector means, threshold zeta * d / N.
    Gaussian,
    /// Kernel mean embeddings, threshold zeta * naive MSE.
    Kme,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum, default_value = "kme")]
    mode: ModeArg,
    /// Kernel in kme mode.
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// RBF width; defaults to the mean pooled feature standard deviation.
    #[arg(long)]
    width: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    Rbf,
}

impl KernelArgs {
    fn setting(&self, bags: &[Bag]) -> Result<Setting> {
        Ok(match self.mode {
            ModeArg::Gaussian => Setting::Gaussian,
            ModeArg::Kme => Setting::Kernel(self.choice().resolve(bags)?),
        })
    }

    fn choice(&self) -> KernelChoice {
        match (self.kernel, self.width) {
            (KernelArg::Linear, _) => KernelChoice::Linear,
            (KernelArg::Rbf, Some(width)) => KernelChoice::GaussianRbf { width },
            (KernelArg::Rbf, None) => KernelChoice::AutoRbf,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    /// Bag CSV (`bag_id,f0,...`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    zeta: f64,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Graph CSV output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_from_str::<Method>)]
    method: Method,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Use the one-sample own-weight tau / (1 + tau) with STB-weight.
    #[arg(long, requires = "tau")]
    gamma_one_sample: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Estimated means CSV, when they can be formed explicitly (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight matrix CSV.
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Gaussian mean model, when no config file is given.
    #[arg(long, value_parser = parse_from_str::<GaussianKind>)]
    model: Option<GaussianKind>,
    /// Toy setup, when no config file is given.
    #[arg(long, value_parser = parse_from_str::<ToyKind>)]
    toy: Option<ToyKind>,
    /// Bag CSV for cross-validation, when no config file is given.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<Method>)]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    trials_tune: Option<usize>,
    #[arg(long)]
    trials_eval: Option<usize>,
    /// Score toy estimates against population embeddings instead of test bags.
    #[arg(long)]
    analytic: bool,
    /// CSV output (default: the config's output, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Fixed parameters from a `tune` output CSV.
    #[arg(long)]
    tuned: Option<PathBuf>,
    /// Sweep a source parameter: `var=v1,v2,...` (b, d, n, circle_radius, ...).
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check kinds (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<CheckKind>)]
    kinds: Option<Vec<CheckKind>>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    t: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<Vec<Bag>> {
    load_bags_csv(path).with_context(|| format!("reading bags from {}", path.display()))
}

fn ids(bags: &[Bag]) -> Vec<&str> {
    bags.iter().map(Bag::id).collect()
}

fn generate(args: &GenerateArgs, seed: u64) -> Result<()> {
    match (args.model, args.toy) {
        (Some(kind), None) => {
            let base = GaussianModel::new(kind, seed);
            let model = GaussianModel {
                b: args.b.unwrap_or(base.b),
                d: args.d.unwrap_or(base.d),
                cluster_spread: args.cluster_spread.unwrap_or(base.cluster_spread),
                ..base
            };
            let data = gen_gaussian(&model)?;
            let bags: Vec<Bag> = data
                .observations
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    Bag::new(
                        format!("task{i}"),
                        r.to_owned().insert_axis(ndarray::Axis(0)),
                    )
                })
                .collect::<mtshrink::Result<_>>()?;
            write_bags_csv(output(args.out.as_deref())?, &bags)?;
            if let Some(p) = &args.means_out {
                write_vectors_csv(output(Some(p))?, &ids(&bags), &data.means)?;
            }
        }
        (None, Some(kind)) => {
            let base = ToySetup::new(kind);
            let setup = ToySetup {
                b: args.b.unwrap_or(base.b),
                n: args.n.unwrap_or(base.n),
                circle_radius: args.circle_radius.unwrap_or(base.circle_radius),
                ..base
            };
            let data = gen_toy(&setup, seed)?;
            write_bags_csv(output(args.out.as_deref())?, &data.bags)?;
            if let (Some(m), Some(p)) = (args.test_size, &args.test_out) {
                write_bags_csv(output(Some(p))?, &gen_test_bags(&data.truth, m, seed)?)?;
            }
        }
        _ => bail!("pass exactly one of --model or --toy"),
    }
    Ok(())
}

fn test(args: &TestArgs) -> Result<()> {
    let bags = load(&args.input)?;
    let graph = neighbor_graph(&bags, args.kernel.setting(&bags)?, args.zeta)?;
    info!("{} edges among {} bags", graph.edge_count(), bags.len());
    write_graph_csv(output(args.out.as_deref())?, &ids(&bags), &graph)?;
    Ok(())
}

fn estimate_cmd(args: &EstimateArgs) -> Result<()> {
    let bags = load(&args.input)?;
    let mut point = ParamPoint {
        zeta: args.zeta,
        gamma: args.gamma,
        c: args.c,
    };
    if args.gamma_one_sample {
        if args.method != Method::StbWeight {
            bail!("--gamma-one-sample applies to stb_weight only");
        }
        point.gamma = Some(one_sample_gamma(args.tau.expect("clap enforces --tau")));
    }
    let est = estimate(&bags, args.kernel.setting(&bags)?, args.method, &point)?;
    let names = ids(&bags);
    if let (Some(p), Some(w)) = (&args.weights_out, &est.weights) {
        write_labeled_matrix(output(Some(p))?, &names, &w.values)?;
    }
    match &est.means {
        Some(m) => write_vectors_csv(output(args.out.as_deref())?, &names, m)?,
        None if args.weights_out.is_none() => {
            bail!(
                "{} embeddings have no explicit form; pass --weights-out",
                args.method
            )
        }
        None => {}
    }
    Ok(())
}

fn experiment_config(cli: &Cli, args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, args.model, args.toy, &args.input) {
        (Some(p), None, None, None) => {
            ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        (None, Some(model), None, None) => ExperimentConfig::new(Source::Gaussian {
            model,
            b: None,
            d: None,
            cluster_spread: None,
        }),
        (None, None, Some(setup), None) => ExperimentConfig::new(Source::Toy {
            setup,
            b: None,
            n: None,
            circle_radius: None,
        }),
        (None, None, None, Some(path)) => ExperimentConfig::new(Source::Csv {
            path: path.clone(),
            subsample: 20,
            standardize: true,
            train_fraction: 0.5,
        }),
        _ => bail!("pass exactly one of --config, --model, --toy or --input"),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.methods {
        cfg.methods = Some(m.clone());
    }
    if let Some(t) = args.trials_tune {
        cfg.trials_tune = t;
    }
    if let Some(t) = args.trials_eval {
        cfg.trials_eval = t;
    }
    if args.analytic {
        cfg.loss = LossMode::Analytic;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_tuned<W: Write>(w: W, tuned: &[Tuned]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "param_json", "tune_loss"])?;
    for t in tuned {
        let loss = t.tune_loss.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([t.method.label().to_string(), t.params.to_json(), loss])?;
    }
    w.flush()?;
    Ok(())
}

/// Method parameters from a `tune` output CSV.
fn read_tuned(path: &Path) -> Result<Vec<(Method, ParamPoint)>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let (method, json) = (
                rec.get(0).unwrap_or_default(),
                rec.get(1).unwrap_or_default(),
            );
            let point: ParamPoint =
                serde_json::from_str(json).with_context(|| format!("bad parameters `{json}`"))?;
            Ok((method.parse::<Method>()?, point))
        })
        .collect()
}

fn tune(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(cli, args)?;
    let out = cfg.output.clone();
    let tuned = Experiment::new(cfg)?.tune()?;
    write_tuned(output(out.as_deref())?, &tuned)
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let mut cfg = experiment_config(cli, &args.exp)?;
    if let Some(p) = &args.tuned {
        for (method, point) in read_tuned(p)? {
            cfg.params.insert(method.label().to_string(), point);
        }
        cfg.validate()?;
    }
    let out = cfg.output.clone();
    match &args.sweep {
        Some(spec) => {
            let (var, values) = spec
                .split_once('=')
                .context("--sweep expects var=v1,v2,...")?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad sweep value `{v}`"))
                })
                .collect::<Result<_>>()?;
            let results = run_sweep(&cfg, var.trim(), &values)?;
            write_sweep_csv(output(out.as_deref())?, var.trim(), &results)?;
        }
        None => {
            let report = Experiment::new(cfg)?.run()?;
            for r in &report.rows {
                info!(
                    "{:<11} {:>10.5} ± {:.5}  {:>7.2}%",
                    r.method.label(),
                    r.mean_loss,
                    r.stderr,
                    r.pct_decrease
                );
            }
            report.write_csv(output(out.as_deref())?)?;
        }
    }
    Ok(())
}

fn verify_bounds(args: &VerifyArgs, seed: u64) -> Result<()> {
    let kinds = args
        .kinds
        .clone()
        .unwrap_or_else(|| CheckKind::ALL.to_vec());
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["kind", "t", "reps", "bound", "violations", "rate", "pass"])?;
    let mut all_pass = true;
    for kind in kinds {
        for &t in &args.t {
            let check = ConcentrationCheck {
                kind,
                params: kind.default_params(),
                t,
                reps: args.reps,
                seed,
            };
            let o = run_check(&check)?;
            all_pass &= o.passes();
            w.write_record([
                kind.name().to_string(),
                t.to_string(),
                o.reps.to_string(),
                o.bound.to_string(),
                o.violations.to_string(),
                o.rate.to_string(),
                o.passes().to_string(),
            ])?;
        }
    }
    w.flush()?;
    if !all_pass {
        bail!("at least one concentration check exceeded its bound");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Generate(a) => generate(a, seed),
        Command::Test(a) => test(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Tune(a) => tune(&cli, a),
        Command::Bench(a) => bench(&cli, a),
        Command::VerifyBounds(a) => verify_bounds(a, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn tuned_csv_roundtrip() {
        let tuned = vec![
            Tuned {
                method: Method::Ne,
                params: ParamPoint::default(),
                tune_loss: None,
            },
            Tuned {
                method: Method::StbWeight,
                params: ParamPoint {
                    zeta: Some(2.5),
                    gamma: Some(0.3),
                    c: None,
                },
                tune_loss: Some(0.25),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_tuned(File::create(&p).unwrap(), &tuned).unwrap();
        let back = read_tuned(&p).unwrap();
        assert_eq!(back[1], (Method::StbWeight, tuned[1].params));
        assert_eq!(back[0].1, ParamPoint::default());
    }
}
