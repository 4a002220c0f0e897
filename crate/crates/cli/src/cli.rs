use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use optproxy::instance::ProblemKind;
use optproxy::primal::{Architecture, Regime};
use serde::Serialize;

use crate::config::parse_line_limit;

#[derive(Debug, Parser)]
#[command(name = "optproxy", version, about = "Optimization proxies for power dispatch: data, oracles, training, evaluation and risk studies")]
pub struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output root; defaults to $OPTPROXY_OUT, then ./runs.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run directory name under the output root; defaults to the command
    /// followed by a hash of the resolved configuration.
    #[arg(long, global = true)]
    pub run: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset of instances and label it with the oracle.
    Gen(GenArgs),
    /// Solve one instance with the reference solver.
    Solve(SolveArgs),
    /// Train a primal, dual or primal-dual proxy.
    Train(TrainArgs),
    /// Score a trained model or the replayed oracle on a dataset.
    Eval(EvalArgs),
    /// Monte-Carlo adverse-event probabilities over a day of dispatches.
    Risk(RiskArgs),
    /// Merge the tables of several runs.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gen(_) => "gen",
            Self::Solve(_) => "solve",
            Self::Train(_) => "train",
            Self::Eval(_) => "eval",
            Self::Risk(_) => "risk",
            Self::Report(_) => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProblemArg {
    Ed,
    Dcopf,
    Scopf,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Ed => ProblemKind::Ed,
            ProblemArg::Dcopf => ProblemKind::Dcopf,
            ProblemArg::Scopf => ProblemKind::Scopf,
        }
    }
}

/// Network selection and line-limit overrides shared by most commands.
#[derive(Clone, Debug, Default, Args, Serialize)]
pub struct NetworkArgs {
    /// Bundled case (case3, case30, scopf3) or grid file.
    #[arg(long)]
    pub network: Option<String>,
    /// Replace a line limit, as `id=MW`; repeatable.
    #[arg(long = "line-limit", value_name = "ID=MW", value_parser = parse_line_limit)]
    pub line_limits: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Number of sampled instances.
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemArg>,
    /// Skip oracle labelling.
    #[arg(long)]
    pub no_labels: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolveProblem {
    Ed,
    Dcopf,
    Scopf,
    /// L1 projection of `--prediction` onto the dispatch constraints.
    Project,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Instance JSON; the nominal instance when absent.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ed")]
    pub problem: SolveProblem,
    /// JSON array of generator outputs to project.
    #[arg(long)]
    pub prediction: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    E2elr,
    Dc3,
    Deepopf,
    Naive,
    Doplp,
    PdlScopf,
    /// Primal network trained with a fixed penalty and no dual network.
    PenaltyScopf,
}

impl ModelKind {
    pub fn architecture(self) -> Option<Architecture> {
        match self {
            Self::E2elr => Some(Architecture::E2elr),
            Self::Dc3 => Some(Architecture::Dc3),
            Self::Deepopf => Some(Architecture::Deepopf),
            Self::Naive => Some(Architecture::Naive),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RegimeArg {
    Sl,
    Ld,
    Ssl,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Sl => Regime::Sl,
            RegimeArg::Ld => Regime::Ld,
            RegimeArg::Ssl => Regime::Ssl,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "ssl")]
    pub regime: RegimeArg,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Outer iterations of primal-dual training.
    #[arg(long)]
    pub outer: Option<usize>,
    /// Primal and dual steps per outer iteration.
    #[arg(long)]
    pub inner: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// `model.json` written by `train`.
    #[arg(long, conflicts_with = "replay")]
    pub model_file: Option<PathBuf>,
    /// Score the dataset labels themselves.
    #[arg(long)]
    pub replay: bool,
    /// Evaluate dual bounds instead of primal dispatches.
    #[arg(long)]
    pub dual: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RiskArgs {
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Primal `model.json`; the oracle is the engine when absent.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Also run the oracle for comparison.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Run directories to merge.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}
