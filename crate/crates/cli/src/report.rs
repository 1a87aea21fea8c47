//! JSON shapes of crossvalidation reports and parameter grids. Labels and
//! classes are 1-based, as in label files.

use gsnmf::pipeline::{
    AccuracyReport, Aggregation, CvConfig, GroupSparse, PlainSparse, PriorSetting,
};
use serde::{Deserialize, Serialize};

use crate::args::PriorArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "lowercase", deny_unknown_fields)]
pub enum Setting {
    Group {
        per_group: usize,
        a_small: f64,
        a_large: f64,
        b_lambda: f64,
        a_t: f64,
        b_t: f64,
    },
    Plain {
        dict_size: usize,
        a_small: f64,
        b_lambda: f64,
        a_t: f64,
        b_t: f64,
    },
}

impl Setting {
    pub fn to_prior(&self) -> PriorSetting {
        match *self {
            Self::Group {
                per_group,
                a_small,
                a_large,
                b_lambda,
                a_t,
                b_t,
            } => PriorSetting::GroupSparse(GroupSparse {
                per_group,
                a_small,
                a_large,
                rate_scale: b_lambda,
                dictionary_shape: a_t,
                dictionary_scale: b_t,
            }),
            Self::Plain {
                dict_size,
                a_small,
                b_lambda,
                a_t,
                b_t,
            } => PriorSetting::PlainSparse(PlainSparse {
                features: dict_size,
                rate_shape: a_small,
                rate_scale: b_lambda,
                dictionary_shape: a_t,
                dictionary_scale: b_t,
            }),
        }
    }
}

/// A grid entry; missing prior values are filled from the command line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "prior", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridEntry {
    Group {
        per_group: usize,
        a_small: Option<f64>,
        a_large: Option<f64>,
        b_lambda: Option<f64>,
        a_t: Option<f64>,
        b_t: Option<f64>,
    },
    Plain {
        dict_size: usize,
        a_small: Option<f64>,
        b_lambda: Option<f64>,
        a_t: Option<f64>,
        b_t: Option<f64>,
    },
}

impl GridEntry {
    pub fn resolve(&self, d: &PriorArgs) -> Setting {
        match *self {
            Self::Group {
                per_group,
                a_small,
                a_large,
                b_lambda,
                a_t,
                b_t,
            } => Setting::Group {
                per_group,
                a_small: a_small.unwrap_or(d.a_small),
                a_large: a_large.unwrap_or(d.a_large),
                b_lambda: b_lambda.unwrap_or(d.b_lambda),
                a_t: a_t.unwrap_or(d.a_t),
                b_t: b_t.unwrap_or(d.b_t),
            },
            Self::Plain {
                dict_size,
                a_small,
                b_lambda,
                a_t,
                b_t,
            } => Setting::Plain {
                dict_size,
                a_small: a_small.unwrap_or(d.a_small),
                b_lambda: b_lambda.unwrap_or(d.b_lambda),
                a_t: a_t.unwrap_or(d.a_t),
                b_t: b_t.unwrap_or(d.b_t),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub folds: usize,
    pub runs: usize,
    pub restarts: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub aggregation: String,
}

impl Protocol {
    pub fn new(config: &CvConfig) -> Self {
        Self {
            folds: config.folds,
            runs: config.runs,
            restarts: config.restarts,
            sweeps: config.fit.max_sweeps,
            seed: config.seed,
            aggregation: match config.aggregation {
                Aggregation::PerFoldMaxThenMean => "per-fold-max",
                Aggregation::MeanThenMax => "mean-then-max",
            }
            .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub max_accuracy: f64,
    pub mean_accuracy: f64,
    pub variance: f64,
    pub subspace_dimension: usize,
    /// Classes with fewer samples than folds.
    pub undersized_classes: Vec<usize>,
    /// Accuracy per run, fold and restart.
    pub per_fold: Vec<Vec<Vec<f64>>>,
    pub setting: Setting,
    pub protocol: Protocol,
}

impl Report {
    pub fn new(report: &AccuracyReport, setting: Setting, protocol: Protocol) -> Self {
        let per_fold = report
            .per_fold
            .outer_iter()
            .map(|run| run.outer_iter().map(|fold| fold.to_vec()).collect())
            .collect();
        Self {
            max_accuracy: report.max_accuracy,
            mean_accuracy: report.mean_accuracy,
            variance: report.variance,
            subspace_dimension: report.subspace_dimension,
            undersized_classes: report.undersized_classes.iter().map(|c| c + 1).collect(),
            per_fold,
            setting,
            protocol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// 0-based index into `results` (and the grid) of the selected setting.
    pub best: usize,
    pub results: Vec<Report>,
}
