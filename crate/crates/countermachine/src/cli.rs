//! Command-line front end.
//!
//! Machine-readable JSON goes to stdout, human summaries to stderr. Exit
//! codes: 0 success, 1 runtime failure, 2 usage error.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Context;
use axum::http::HeaderValue;
use clap::{Args, Parser, Subcommand};
use countermachine_core::data::{self, generate_synthetic, split_balanced};
use countermachine_core::training::fit;
use countermachine_core::{
    find_counterfactual, AnnealConfig, Consequent, CounterfactualQuery, FeatureVector,
    GroundTruth, TrainConfig, TskModel,
};
use serde_json::json;

use crate::{csv_io, model_file, service};

/// Features locked by `--realistic-locks`: attributes a policy cannot move.
pub const REALISTIC_LOCKS: [&str; 3] = ["distance", "contiguity", "major_power"];

#[derive(Debug, Parser)]
#[command(name = "countermachine", version, about = "Rational counterfactuals over a fuzzy conflict model")]
pub struct Cli {
    /// Seed for data generation, splitting and search.
    #[arg(long, global = true, env = "COUNTERMACHINE_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dyad CSV.
    Gen(GenArgs),
    /// Normalize, split, fit and save a model.
    Train(TrainArgs),
    /// Evaluate a model at a normalized feature vector.
    Eval(EvalArgs),
    /// Search for a rational counterfactual.
    Cf(CfArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Probability of flipping each ground-truth label.
    #[arg(long, default_value_t = GroundTruth::default().label_noise)]
    pub label_noise: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 392)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().mfs_per_input)]
    pub mfs_per_input: usize,
    #[arg(long, default_value_t = TrainConfig::default().premise_learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().ridge_lambda)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated normalized values in model feature order.
    #[arg(long)]
    pub features: String,
}

#[derive(Debug, Args)]
pub struct AnnealArgs {
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub cooling: Option<f64>,
    #[arg(long)]
    pub max_evals: Option<u64>,
    #[arg(long)]
    pub restarts: Option<u32>,
}

impl AnnealArgs {
    fn config(&self, seed: u64) -> AnnealConfig {
        let d = AnnealConfig::default();
        AnnealConfig {
            initial_temperature: self.t0.unwrap_or(d.initial_temperature),
            cooling_factor: self.cooling.unwrap_or(d.cooling_factor),
            max_evaluations: self.max_evals.unwrap_or(d.max_evaluations),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed,
            ..d
        }
    }
}

#[derive(Debug, Args)]
pub struct CfArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Factual antecedent, comma-separated normalized values.
    #[arg(long)]
    pub features: String,
    #[arg(long)]
    pub target: Consequent,
    /// Features the search may change; `""` locks everything. Default: all.
    #[arg(long, conflicts_with = "realistic_locks")]
    pub free: Option<String>,
    /// Lock distance, contiguity and major_power.
    #[arg(long)]
    pub realistic_locks: bool,
    #[command(flatten)]
    pub anneal: AnnealArgs,
    /// Write the accepted-move trace as CSV.
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Origin allowed by CORS, e.g. the explorer UI's dev server.
    #[arg(long)]
    pub allow_origin: Option<String>,
    /// Per-request evaluation budget ceiling and default.
    #[arg(long)]
    pub max_evals: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match run(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = match &e {
                CliError::Usage(msg) => writeln!(stderr, "error: {msg}"),
                CliError::Runtime(err) => writeln!(stderr, "error: {err:#}"),
            };
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Gen(a) => gen(a, seed, stdout, stderr),
        Command::Train(a) => train(a, seed, stdout, stderr),
        Command::Eval(a) => eval(a, stdout, stderr),
        Command::Cf(a) => cf(a, seed, stdout, stderr),
        Command::Serve(a) => serve(a, seed),
    }
}

fn emit(stdout: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string(value).context("serializing output")?;
    writeln!(stdout, "{text}").context("writing stdout")?;
    Ok(())
}

fn gen(a: GenArgs, seed: u64, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if a.rows == 0 {
        return Err(usage("--rows must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a.label_noise) {
        return Err(usage("--label-noise must lie in [0, 1]"));
    }
    let truth = GroundTruth {
        label_noise: a.label_noise,
        ..GroundTruth::default()
    };
    let records = generate_synthetic(a.rows, seed, &truth);
    csv_io::save_csv(&a.out, &records).map_err(anyhow::Error::from)?;
    let war = records.iter().filter(|r| r.label == Consequent::War).count();
    let peace = records.len() - war;
    let _ = writeln!(stderr, "wrote {} rows ({war} war, {peace} peace) to {}", records.len(), a.out.display());
    emit(stdout, &json!({"rows": records.len(), "war": war, "peace": peace}))
}

fn train(a: TrainArgs, seed: u64, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let config = TrainConfig {
        mfs_per_input: a.mfs_per_input,
        epochs: a.epochs,
        premise_learning_rate: a.learning_rate,
        ridge_lambda: a.ridge,
        seed,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    if a.train_per_class == 0 {
        return Err(usage("--train-per-class must be at least 1"));
    }

    let records = csv_io::load_csv(&a.data).map_err(anyhow::Error::from)?;
    let dataset = data::normalize(&records).with_context(|| format!("normalizing {}", a.data.display()))?;
    let (train, test) = split_balanced(&dataset, a.train_per_class, a.test_per_class, seed)
        .with_context(|| format!("splitting {}", a.data.display()))?;
    let enc = Default::default();
    let (model, report) = fit(&dataset.feature_names, &train.samples(&enc), &test.samples(&enc), &config)
        .context("training failed")?;
    model_file::save(&a.out, &model).map_err(anyhow::Error::from)?;
    let _ = writeln!(
        stderr,
        "trained {} rules; train accuracy {:.4}, test accuracy {:.4}; model written to {}",
        model.rules().len(),
        report.train_acc,
        report.test_acc,
        a.out.display()
    );
    writeln!(stdout, "{}", model_file::report_json(&report)).context("writing stdout")?;
    Ok(())
}

fn parse_features(text: &str, model: &TskModel) -> Result<FeatureVector, CliError> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--features: `{}` is not a number", s.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != model.n_inputs() {
        return Err(usage(format!(
            "--features: expected {} values ({}), got {}",
            model.n_inputs(),
            model.feature_names().join(","),
            values.len()
        )));
    }
    FeatureVector::new(values).map_err(|e| usage(format!("--features: {e}")))
}

fn load_model(path: &std::path::Path) -> Result<TskModel, CliError> {
    Ok(model_file::load(path).map_err(anyhow::Error::from)?)
}

fn eval(a: EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let x = parse_features(&a.features, &model)?;
    let e = model.evaluate(&x).context("evaluating")?;
    let class = model.label_encoding().classify(e.y);
    let _ = writeln!(stderr, "y = {:.6} -> {class}", e.y);
    emit(stdout, &json!({"y": e.y, "class": class, "degenerate": e.degenerate}))
}

fn free_mask(a: &CfArgs, model: &TskModel) -> Result<Vec<bool>, CliError> {
    let names = model.feature_names();
    if a.realistic_locks {
        return Ok(names.iter().map(|n| !REALISTIC_LOCKS.contains(&n.as_str())).collect());
    }
    let Some(free) = &a.free else {
        return Ok(vec![true; names.len()]);
    };
    let mut mask = vec![false; names.len()];
    for name in free.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let i = names.iter().position(|n| n == name).ok_or_else(|| {
            usage(format!("--free: unknown feature `{name}` (known: {})", names.join(",")))
        })?;
        mask[i] = true;
    }
    Ok(mask)
}

fn cf(a: CfArgs, seed: u64, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let factual = parse_features(&a.features, &model)?;
    let mut query = CounterfactualQuery::new(factual, model.label_encoding().value_of(a.target));
    query.free_mask = free_mask(&a, &model)?;
    query.anneal = a.anneal.config(seed);
    query.anneal.validate().map_err(|e| usage(e.to_string()))?;

    let result = find_counterfactual(&model, &query).context("counterfactual search failed")?;
    if let Some(path) = &a.trace_csv {
        std::fs::write(path, result.trace.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if result.no_free_variables {
        let _ = writeln!(stderr, "no free variables; factual returned unchanged");
    }
    let changed: Vec<_> = result
        .deltas
        .iter()
        .filter(|d| d.direction != countermachine_core::Direction::Unchanged)
        .map(|d| format!("{} {:.3} -> {:.3}", d.name, d.factual, d.counterfactual))
        .collect();
    let _ = writeln!(
        stderr,
        "{}: y = {:.4} ({}) after {} evaluations; changed: {}",
        if result.success { "success" } else { "no success" },
        result.achieved_y,
        result.achieved_class,
        result.evaluations,
        if changed.is_empty() { "none".to_owned() } else { changed.join(", ") }
    );
    emit(stdout, &service::result_json(&result))
}

fn serve(a: ServeArgs, seed: u64) -> Result<(), CliError> {
    let allow_origin = a
        .allow_origin
        .as_deref()
        .map(HeaderValue::from_str)
        .transpose()
        .map_err(|_| usage("--allow-origin is not a valid header value"))?;
    let mut anneal = AnnealConfig {
        seed,
        ..AnnealConfig::default()
    };
    if let Some(n) = a.max_evals {
        anneal.max_evaluations = n;
    }
    anneal.validate().map_err(|e| usage(e.to_string()))?;
    let model = load_model(&a.model)?;
    let app = service::router(service::ServiceState::new(model, anneal), allow_origin);
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(service::serve(app, SocketAddr::new(a.host, a.port)))
        .with_context(|| format!("serving on {}:{}", a.host, a.port))?;
    Ok(())
}
