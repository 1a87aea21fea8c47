//! Supervised evaluation: dictionaries are learned on the training part of
//! each crossvalidation fold with class labels as groups, held-out samples
//! are projected onto the learned dictionary by nonnegative least squares and
//! classified by their nearest training sample under cosine distance.
//!
//! Every (run, fold, restart) cell gets a seed derived from
//! [`CvConfig::seed`] and its indices, so results do not depend on the order
//! in which cells are computed.

mod classify;
mod folds;
mod prevalence;

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, Array3, Axis};
use thiserror::Error;

pub use classify::knn_cosine_classify;
pub use folds::{stratified_folds, Fold, Folds};
pub use prevalence::{diagonal_block_mass, group_prevalence, normalize_rows};

use crate::engine::{fit, EngineError, FitConfig};
use crate::model::{
    build_group_hyperprior, DataMatrix, GroupAssignment, Hyperparameters, ModelError,
    DEFAULT_A_LARGE, DEFAULT_A_SMALL, DEFAULT_A_T, DEFAULT_B_LAMBDA, DEFAULT_B_T,
};
use crate::projection::{project_matrix, ProjectionError};
use crate::seeds;

const FOLD_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("{what}: expected length {expected}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("label {label} of sample {sample} is outside 0..{classes}")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        classes: usize,
    },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("class {class} has {count} sample(s); at least 2 are required")]
    SmallClass { class: usize, count: usize },
    #[error("{samples} samples cannot be split into {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("building priors for run {run}, fold {fold}: {source}")]
    Prior {
        run: usize,
        fold: usize,
        source: ModelError,
    },
    #[error("fit failed in run {run}, fold {fold}, restart {restart}: {source}")]
    Fit {
        run: usize,
        fold: usize,
        restart: usize,
        source: EngineError,
    },
    #[error("projection failed in run {run}, fold {fold}, restart {restart}: {source}")]
    Projection {
        run: usize,
        fold: usize,
        restart: usize,
        source: ProjectionError,
    },
}

/// Data with one class label (`0..classes`) per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    data: DataMatrix,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    /// Every class in `0..classes` needs at least two samples.
    pub fn new(
        data: DataMatrix,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, PipelineError> {
        if labels.len() != data.cols() {
            return Err(PipelineError::Length {
                what: "labels",
                expected: data.cols(),
                found: labels.len(),
            });
        }
        let mut counts = vec![0usize; classes];
        for (sample, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(PipelineError::LabelOutOfRange {
                    sample,
                    label,
                    classes,
                });
            }
            counts[label] += 1;
        }
        if classes == 0 {
            return Err(PipelineError::Config("at least one class is required"));
        }
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(if count == 0 {
                PipelineError::EmptyClass(class)
            } else {
                PipelineError::SmallClass { class, count }
            });
        }
        Ok(Self {
            data,
            labels,
            classes,
        })
    }

    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// The same data with labels rearranged by `perm` (`new[t] = old[perm[t]]`).
    pub fn with_permuted_labels(&self, perm: &[usize]) -> Result<Self, PipelineError> {
        if perm.len() != self.labels.len() {
            return Err(PipelineError::Length {
                what: "permutation",
                expected: self.labels.len(),
                found: perm.len(),
            });
        }
        let labels = perm.iter().map(|&p| self.labels[p]).collect();
        Self::new(self.data.clone(), labels, self.classes)
    }
}

/// Builds the priors and group assignment for one training set.
pub trait HyperBuilder {
    fn build(
        &self,
        train: &DataMatrix,
        labels: &[usize],
        classes: usize,
    ) -> Result<(Hyperparameters, GroupAssignment), ModelError>;
}

/// The label-driven prior: `per_group` features per class, rate shapes
/// `a_small` on the class's own block and `a_large` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSparse {
    pub per_group: usize,
    pub a_small: f64,
    pub a_large: f64,
    pub rate_scale: f64,
    pub dictionary_shape: f64,
    pub dictionary_scale: f64,
}

impl GroupSparse {
    pub fn new(per_group: usize) -> Self {
        Self {
            per_group,
            a_small: DEFAULT_A_SMALL,
            a_large: DEFAULT_A_LARGE,
            rate_scale: DEFAULT_B_LAMBDA,
            dictionary_shape: DEFAULT_A_T,
            dictionary_scale: DEFAULT_B_T,
        }
    }
}

impl HyperBuilder for GroupSparse {
    fn build(
        &self,
        train: &DataMatrix,
        labels: &[usize],
        classes: usize,
    ) -> Result<(Hyperparameters, GroupAssignment), ModelError> {
        let (rate_shape, rate_scale) = build_group_hyperprior(
            classes,
            self.per_group,
            self.a_small,
            self.a_large,
            self.rate_scale,
        )?;
        let features = classes * self.per_group;
        let hyper = Hyperparameters::new(
            Array2::from_elem((train.rows(), features), self.dictionary_shape),
            Array2::from_elem((train.rows(), features), self.dictionary_scale),
            rate_shape,
            rate_scale,
            Array2::ones((train.cols(), classes)),
        )?;
        Ok((hyper, GroupAssignment::observed(labels.to_vec(), classes)?))
    }
}

/// Label-agnostic baseline: a single group, every rate with shape
/// `rate_shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlainSparse {
    pub features: usize,
    pub rate_shape: f64,
    pub rate_scale: f64,
    pub dictionary_shape: f64,
    pub dictionary_scale: f64,
}

impl PlainSparse {
    pub fn new(features: usize) -> Self {
        Self {
            features,
            rate_shape: DEFAULT_A_SMALL,
            rate_scale: DEFAULT_B_LAMBDA,
            dictionary_shape: DEFAULT_A_T,
            dictionary_scale: DEFAULT_B_T,
        }
    }
}

impl HyperBuilder for PlainSparse {
    fn build(
        &self,
        train: &DataMatrix,
        _labels: &[usize],
        _classes: usize,
    ) -> Result<(Hyperparameters, GroupAssignment), ModelError> {
        let (rate_shape, rate_scale) = build_group_hyperprior(
            1,
            self.features,
            self.rate_shape,
            self.rate_shape,
            self.rate_scale,
        )?;
        let hyper = Hyperparameters::new(
            Array2::from_elem((train.rows(), self.features), self.dictionary_shape),
            Array2::from_elem((train.rows(), self.features), self.dictionary_scale),
            rate_shape,
            rate_scale,
            Array2::ones((train.cols(), 1)),
        )?;
        Ok((hyper, GroupAssignment::observed(vec![0; train.cols()], 1)?))
    }
}

/// Either prior family, e.g. for a mixed parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSetting {
    GroupSparse(GroupSparse),
    PlainSparse(PlainSparse),
}

impl PriorSetting {
    /// Dictionary size for a dataset with `classes` classes.
    pub fn features(&self, classes: usize) -> usize {
        match self {
            Self::GroupSparse(g) => g.per_group * classes,
            Self::PlainSparse(p) => p.features,
        }
    }
}

impl HyperBuilder for PriorSetting {
    fn build(
        &self,
        train: &DataMatrix,
        labels: &[usize],
        classes: usize,
    ) -> Result<(Hyperparameters, GroupAssignment), ModelError> {
        match self {
            Self::GroupSparse(g) => g.build(train, labels, classes),
            Self::PlainSparse(p) => p.build(train, labels, classes),
        }
    }
}

/// How restarts are combined into `max_accuracy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Best restart within every (run, fold), averaged over runs and folds.
    #[default]
    PerFoldMaxThenMean,
    /// Average over runs and folds for every restart index, then the best
    /// restart index.
    MeanThenMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub runs: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Per-fit settings; `fit.seed` and `fit.restarts` are ignored.
    pub fit: FitConfig,
    pub aggregation: Aggregation,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            runs: 5,
            restarts: 10,
            seed: 0,
            // Only the final bound is needed; skipping the others saves time.
            fit: FitConfig {
                compute_bound_every: 300,
                ..FitConfig::default()
            },
            aggregation: Aggregation::default(),
        }
    }
}

impl CvConfig {
    fn validate(&self) -> Result<(), PipelineError> {
        if self.folds < 2 {
            return Err(PipelineError::Config("folds must be at least 2"));
        }
        if self.runs == 0 {
            return Err(PipelineError::Config("runs must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(PipelineError::Config("restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// Crossvalidated estimate of the accuracy of the best restart.
    pub max_accuracy: f64,
    /// Mean over all (run, fold, restart) cells.
    pub mean_accuracy: f64,
    /// Unbiased sample variance over all cells; 0 for a single cell.
    pub variance: f64,
    /// Raw accuracies indexed (run, fold, restart).
    pub per_fold: Array3<f64>,
    /// Dictionary size `I`.
    pub subspace_dimension: usize,
    /// Classes too small to appear in every test fold.
    pub undersized_classes: Vec<usize>,
}

impl AccuracyReport {
    fn from_cells(
        per_fold: Array3<f64>,
        aggregation: Aggregation,
        subspace_dimension: usize,
        undersized_classes: Vec<usize>,
    ) -> Self {
        let n = per_fold.len() as f64;
        let mean_accuracy = shifted_mean(per_fold.iter().copied());
        // Deviations from the first cell keep the variance exactly 0 when
        // every cell is equal.
        let variance = if per_fold.len() > 1 {
            let first = per_fold.iter().next().copied().unwrap_or(0.0);
            let (sum, sum_sq) = per_fold
                .iter()
                .map(|a| a - first)
                .fold((0.0, 0.0), |(s, q), d| (s + d, q + d * d));
            ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let max_accuracy = match aggregation {
            Aggregation::PerFoldMaxThenMean => {
                shifted_mean(per_fold.outer_iter().flat_map(|run| {
                    run.outer_iter()
                        .map(|fold| fold.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                        .collect::<Vec<_>>()
                }))
            }
            Aggregation::MeanThenMax => (0..per_fold.dim().2)
                .map(|k| shifted_mean(per_fold.index_axis(Axis(2), k).iter().copied()))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        Self {
            max_accuracy,
            mean_accuracy,
            variance,
            per_fold,
            subspace_dimension,
            undersized_classes,
        }
    }
}

/// Repeated stratified crossvalidation with restarts.
///
/// For every run, fold and restart: fit on the training columns with labels
/// as observed groups, take the training features from the posterior mean
/// coefficients, project the test columns onto the posterior mean dictionary
/// and classify them by 1-nearest-neighbour under cosine distance.
pub fn evaluate<B: HyperBuilder + ?Sized>(
    dataset: &LabeledDataset,
    builder: &B,
    config: &CvConfig,
) -> Result<AccuracyReport, PipelineError> {
    config.validate()?;
    let labels = dataset.labels();
    let mut per_fold = Array3::zeros((config.runs, config.folds, config.restarts));
    let mut subspace_dimension = 0;
    let mut undersized_classes = Vec::new();
    for run in 0..config.runs {
        let fold_seed = seeds::derive(config.seed, &[FOLD_STREAM, run as u64]);
        let split = stratified_folds(labels, dataset.classes(), config.folds, fold_seed)?;
        undersized_classes = split.undersized_classes;
        for (f, fold) in split.folds.iter().enumerate() {
            let train = dataset.data().select_columns(&fold.train);
            let test = dataset.data().select_columns(&fold.test);
            let train_labels: Vec<usize> = fold.train.iter().map(|&t| labels[t]).collect();
            let test_labels: Vec<usize> = fold.test.iter().map(|&t| labels[t]).collect();
            let (hyper, groups) = builder
                .build(&train, &train_labels, dataset.classes())
                .map_err(|source| PipelineError::Prior {
                    run,
                    fold: f,
                    source,
                })?;
            subspace_dimension = hyper.dims().features;
            for restart in 0..config.restarts {
                let seed = seeds::derive(
                    config.seed,
                    &[FIT_STREAM, run as u64, f as u64, restart as u64],
                );
                let result = fit(
                    &train,
                    &hyper,
                    &groups,
                    &FitConfig {
                        seed,
                        ..config.fit.clone()
                    },
                )
                .map_err(|source| PipelineError::Fit {
                    run,
                    fold: f,
                    restart,
                    source,
                })?;
                let projected =
                    project_matrix(result.state.dictionary.mean.view(), test.values().view())
                        .map_err(|source| PipelineError::Projection {
                            run,
                            fold: f,
                            restart,
                            source,
                        })?;
                let predicted = knn_cosine_classify(
                    result.state.coefficients.mean.view(),
                    &train_labels,
                    projected.coefficients.view(),
                )?;
                let correct = predicted
                    .iter()
                    .zip(&test_labels)
                    .filter(|(p, l)| p == l)
                    .count();
                per_fold[[run, f, restart]] = correct as f64 / test_labels.len() as f64;
            }
        }
    }
    Ok(AccuracyReport::from_cells(
        per_fold,
        config.aggregation,
        subspace_dimension,
        undersized_classes,
    ))
}

/// Mean computed as `x₀ + Σ(x − x₀)/n`, exact for constant input and
/// independent of how the cells are grouped when the same values are fed in
/// the same order.
fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        let f = *first.get_or_insert(v);
        sum += v - f;
        n += 1;
    }
    first.map_or(f64::NAN, |f| f + sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Index into the grid of the selected setting.
    pub best: usize,
    /// One report per grid entry, in grid order.
    pub reports: Vec<AccuracyReport>,
}

/// Evaluates every setting with the same `config` and picks the highest
/// `max_accuracy`; ties go to the smaller dictionary, then to the earlier
/// setting.
pub fn parameter_sweep<B: HyperBuilder>(
    dataset: &LabeledDataset,
    grid: &[B],
    config: &CvConfig,
) -> Result<SweepOutcome, PipelineError> {
    if grid.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    let reports = grid
        .iter()
        .map(|setting| evaluate(dataset, setting, config))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (k, report) in reports.iter().enumerate().skip(1) {
        let current = &reports[best];
        let better = report.max_accuracy > current.max_accuracy
            || (report.max_accuracy == current.max_accuracy
                && report.subspace_dimension < current.subspace_dimension);
        if better {
            best = k;
        }
    }
    Ok(SweepOutcome { best, reports })
}
