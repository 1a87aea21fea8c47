use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsnmf::model::{DEFAULT_A_LARGE, DEFAULT_A_SMALL, DEFAULT_A_T, DEFAULT_B_LAMBDA, DEFAULT_B_T};

/// Group-sparse variational Bayesian NMF.
///
/// Matrices are read as binary GSNM files or CSV (detected from content) and
/// written as CSV when the output path ends in `.csv`, binary otherwise.
/// Label files hold 1-based integers, one per line. Every command is
/// deterministic given its flags.
#[derive(Debug, Parser)]
#[command(name = "gsnmf", version, about, long_about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a data matrix and its latent variables from the generative model.
    Generate(GenerateArgs),
    /// Fit a model with multiple restarts and keep the best bound.
    Train(TrainArgs),
    /// Project data onto a trained dictionary by nonnegative least squares.
    Project(ProjectArgs),
    /// Classify test columns by nearest neighbour in a trained feature space.
    Classify(ClassifyArgs),
    /// Repeated stratified crossvalidation of one prior setting.
    Evaluate(EvaluateArgs),
    /// Crossvalidate every prior setting of a JSON grid and pick the best.
    Sweep(SweepArgs),
    /// Per-label coefficient mass of a trained model, drawn as a heatmap.
    Prevalence(PrevalenceArgs),
}

/// Rate and dictionary priors.
#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Rate shape on a group's own feature block (small = weak shrinkage).
    #[arg(long, default_value_t = DEFAULT_A_SMALL)]
    pub a_small: f64,
    /// Rate shape on the other groups' feature blocks.
    #[arg(long, default_value_t = DEFAULT_A_LARGE)]
    pub a_large: f64,
    /// Rate scale for every feature and group.
    #[arg(long, default_value_t = DEFAULT_B_LAMBDA)]
    pub b_lambda: f64,
    /// Dictionary gamma shape.
    #[arg(long, default_value_t = DEFAULT_A_T)]
    pub a_t: f64,
    /// Dictionary gamma scale.
    #[arg(long, default_value_t = DEFAULT_B_T)]
    pub b_t: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output data matrix (V × T).
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for the latent variables: dictionary.bin, coefficients.bin,
    /// rates.bin and labels.csv.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write the sample labels to this file.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Observed dimensions, features, groups and samples as V,I,C,T.
    #[arg(long, default_value = "40,6,3,90", value_parser = parse_dims)]
    pub dims: [usize; 4],
    /// Features per group; must equal I / C when given. Without it feature i
    /// belongs to group ⌊i·C/I⌋.
    #[arg(long)]
    pub per_group: Option<usize>,
    /// Draw sample groups from a flat Dirichlet instead of assigning T/C
    /// consecutive samples to each group.
    #[arg(long)]
    pub latent: bool,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_dims(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("{p:?} is not a positive integer"))
        })
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [v, i, c, t] if v > 0 && i > 0 && c > 0 && t > 0 => Ok([v, i, c, t]),
        [_, _, _, _] => Err("dimensions must be positive".into()),
        _ => Err(format!("expected V,I,C,T, got {} values", parts.len())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Sample groups are the given labels.
    Observed,
    /// Sample groups are inferred under a flat Dirichlet prior.
    Latent,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Data matrix (V × T).
    #[arg(long)]
    pub data: PathBuf,
    /// Sample labels; required in observed mode.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of groups; defaults to the largest label, and to 1 in latent
    /// mode without labels.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Dictionary size I; defaults to per-group × groups.
    #[arg(long, required_unless_present = "per_group")]
    pub dict_size: Option<usize>,
    /// Features per group; feature i belongs to group ⌊i·C/I⌋.
    #[arg(long)]
    pub per_group: Option<usize>,
    /// How sample groups are handled.
    #[arg(long, value_enum, default_value_t = Mode::Observed)]
    pub mode: Mode,
    /// Sweeps per restart.
    #[arg(long, default_value_t = 300)]
    pub sweeps: usize,
    /// Random restarts; the best final bound is kept.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Stop a restart early when the relative bound gain drops below this (0 disables).
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model archive.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the best restart's bound per sweep as headerless `sweep,bound` CSV.
    #[arg(long)]
    pub bound_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Trained model archive.
    #[arg(long)]
    pub model: PathBuf,
    /// Data matrix (V × T).
    #[arg(long)]
    pub data: PathBuf,
    /// Output coefficients (I × T).
    #[arg(long)]
    pub out: PathBuf,
    /// Optimality tolerance of the NNLS solver.
    #[arg(long, default_value_t = gsnmf::projection::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Trained model archive whose posterior mean dictionary defines the features.
    #[arg(long)]
    pub model: PathBuf,
    /// Reference data matrix.
    #[arg(long)]
    pub train_data: PathBuf,
    /// Labels of the reference columns.
    #[arg(long)]
    pub train_labels: PathBuf,
    /// Data matrix to classify.
    #[arg(long)]
    pub test_data: PathBuf,
    /// Output predicted labels.
    #[arg(long)]
    pub out: PathBuf,
    /// True test labels; when given the accuracy is reported.
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorKind {
    /// Label-driven block prior with per-group features per class.
    Group,
    /// Single group with dict-size features, ignoring labels.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    /// Best restart in every fold, then the mean over runs and folds.
    PerFoldMax,
    /// Mean over runs and folds for every restart, then the best restart.
    MeanThenMax,
}

/// Crossvalidation protocol.
#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    /// Data matrix (V × T).
    #[arg(long)]
    pub data: PathBuf,
    /// Sample labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Folds per run.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Independent fold assignments.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Restarts per fold.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Sweeps per fit.
    #[arg(long, default_value_t = 300)]
    pub sweeps: usize,
    /// How restarts are combined into max_accuracy.
    #[arg(long, value_enum, default_value_t = AggregationArg::PerFoldMax)]
    pub aggregation: AggregationArg,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON report.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub cv: CvArgs,
    /// Prior family.
    #[arg(long, value_enum, default_value_t = PriorKind::Group)]
    pub prior_kind: PriorKind,
    /// Features per class for the group prior.
    #[arg(long, default_value_t = 1)]
    pub per_group: usize,
    /// Dictionary size for the plain prior; defaults to per-group × classes.
    #[arg(long)]
    pub dict_size: Option<usize>,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cv: CvArgs,
    /// JSON array of settings, e.g. [{"prior": "group", "per_group": 2},
    /// {"prior": "plain", "dict_size": 6, "a_small": 8}]; omitted prior
    /// values come from the flags below.
    #[arg(long)]
    pub grid: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    /// Square side proportional to √magnitude.
    Hinton,
    /// Shade proportional to magnitude.
    Magnitude,
}

#[derive(Debug, Args)]
pub struct PrevalenceArgs {
    /// Trained model archive.
    #[arg(long)]
    pub model: PathBuf,
    /// Labels of the training columns; defaults to the model's observed groups.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output PGM heatmap (labels as rows, features as columns).
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap style.
    #[arg(long, value_enum, default_value_t = StyleArg::Hinton)]
    pub style: StyleArg,
    /// Pixels per matrix cell.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u16).range(1..))]
    pub cell_px: u16,
    /// Keep raw per-label means instead of normalizing each row to sum 1.
    #[arg(long)]
    pub raw: bool,
    /// Also write the prevalence matrix (C × I).
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}
