use std::fs;
use std::path::Path;

use gsnmf::engine::multi_restart_fit;
use gsnmf::model::{sample_model, GroupAssignment, Hyperparameters};
use gsnmf::pipeline::{
    diagonal_block_mass, evaluate, group_prevalence, knn_cosine_classify, normalize_rows,
    parameter_sweep, Aggregation, CvConfig, LabeledDataset,
};
use gsnmf::projection::project_matrix_with_tol;
use gsnmf::{DataMatrix, FitConfig};
use ndarray::Array2;

use crate::args::*;
use crate::error::CliError;
use crate::io::{self, HeatmapStyle, MatrixFormat, ModelArchive, RestartTrace};
use crate::report::{GridEntry, Protocol, Report, Setting, SweepReport};

/// Runs one command and returns the one-line summary for stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Project(a) => project(a),
        Command::Classify(a) => classify(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Prevalence(a) => prevalence(a),
    }
}

fn read_matrix(flag: &str, path: &Path) -> Result<Array2<f64>, CliError> {
    io::load_matrix(path).map_err(|e| CliError::file(flag, path, e))
}

fn read_data(flag: &str, path: &Path) -> Result<DataMatrix, CliError> {
    DataMatrix::new(read_matrix(flag, path)?).map_err(|e| CliError::file(flag, path, e.into()))
}

fn read_labels(flag: &str, path: &Path, samples: usize) -> Result<Vec<usize>, CliError> {
    let labels = io::load_labels(path).map_err(|e| CliError::file(flag, path, e))?;
    if labels.len() != samples {
        return Err(CliError::Data(format!(
            "--{flag} {}: {} labels for {samples} samples",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels)
}

fn read_archive(path: &Path) -> Result<ModelArchive, CliError> {
    io::load_archive(path).map_err(|e| CliError::file("model", path, e))
}

fn write_matrix(flag: &str, matrix: &Array2<f64>, path: &Path) -> Result<(), CliError> {
    io::save_matrix(matrix, path, MatrixFormat::from_path(path))
        .map_err(|e| CliError::file(flag, path, e))
}

fn write_bytes(flag: &str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    io::write_atomic(path, bytes).map_err(|e| CliError::file(flag, path, e))
}

fn write_json<T: serde::Serialize>(flag: &str, path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(flag, path, &bytes)
}

fn class_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}

/// Rate shapes with feature `i` in block `⌊i·C/I⌋`.
fn block_rate_shape(features: usize, groups: usize, a_small: f64, a_large: f64) -> Array2<f64> {
    Array2::from_shape_fn((features, groups), |(i, c)| {
        if i * groups / features == c {
            a_small
        } else {
            a_large
        }
    })
}

fn hyperparameters(
    prior: &PriorArgs,
    observed: usize,
    features: usize,
    groups: usize,
    samples: usize,
) -> Result<Hyperparameters, CliError> {
    Ok(Hyperparameters::new(
        Array2::from_elem((observed, features), prior.a_t),
        Array2::from_elem((observed, features), prior.b_t),
        block_rate_shape(features, groups, prior.a_small, prior.a_large),
        Array2::from_elem((features, groups), prior.b_lambda),
        Array2::ones((samples, groups)),
    )?)
}

fn generate(a: GenerateArgs) -> Result<String, CliError> {
    let [v, i, c, t] = a.dims;
    if let Some(k) = a.per_group {
        if k * c != i {
            return Err(CliError::Usage(format!(
                "--per-group {k} with {c} groups needs I = {}, got {i}",
                k * c
            )));
        }
    }
    let hyper = hyperparameters(&a.prior, v, i, c, t)?;
    let groups = if a.latent {
        GroupAssignment::latent(c)?
    } else {
        GroupAssignment::observed((0..t).map(|tau| tau * c / t).collect(), c)?
    };
    let (data, truth) = sample_model(&hyper, &groups, a.seed)?;
    write_matrix("out", data.values(), &a.out)?;
    if let Some(dir) = &a.truth {
        fs::create_dir_all(dir).map_err(|source| {
            CliError::file(
                "truth",
                dir,
                io::IoError::Io {
                    path: dir.clone(),
                    source,
                },
            )
        })?;
        write_matrix("truth", &truth.dictionary, &dir.join("dictionary.bin"))?;
        write_matrix("truth", &truth.coefficients, &dir.join("coefficients.bin"))?;
        write_matrix("truth", &truth.rates, &dir.join("rates.bin"))?;
        write_bytes(
            "truth",
            &dir.join("labels.csv"),
            io::format_labels(&truth.labels).as_bytes(),
        )?;
    }
    if let Some(path) = &a.labels_out {
        write_bytes(
            "labels-out",
            path,
            io::format_labels(&truth.labels).as_bytes(),
        )?;
    }
    let total: f64 = data.values().sum();
    Ok(format!(
        "generated {v}×{t} matrix with {i} features and {c} groups, total count {total}"
    ))
}

fn train(a: TrainArgs) -> Result<String, CliError> {
    let data = read_data("data", &a.data)?;
    let labels = a
        .labels
        .as_deref()
        .map(|p| read_labels("labels", p, data.cols()))
        .transpose()?;
    let groups = match (a.groups, &labels) {
        (Some(0), _) => return Err(CliError::Usage("--groups must be positive".into())),
        (Some(g), Some(l)) if class_count(l) > g => {
            return Err(CliError::Data(format!(
                "labels go up to {} but --groups is {g}",
                class_count(l)
            )))
        }
        (Some(g), _) => g,
        (None, Some(l)) => class_count(l),
        (None, None) if a.mode == Mode::Latent => 1,
        (None, None) => return Err(CliError::Usage("--mode observed requires --labels".into())),
    };
    let features = match (a.dict_size, a.per_group) {
        (Some(i), Some(k)) if i != k * groups => {
            return Err(CliError::Usage(format!(
                "--dict-size {i} disagrees with --per-group {k} × {groups} groups"
            )))
        }
        (Some(0), _) | (_, Some(0)) => {
            return Err(CliError::Usage("dictionary size must be positive".into()))
        }
        (Some(i), _) => i,
        (None, Some(k)) => k * groups,
        (None, None) => {
            return Err(CliError::Usage(
                "one of --dict-size or --per-group is required".into(),
            ))
        }
    };
    let hyper = hyperparameters(&a.prior, data.rows(), features, groups, data.cols())?;
    let assignment = match (a.mode, labels) {
        (Mode::Observed, Some(l)) => GroupAssignment::observed(l, groups)?,
        (Mode::Observed, None) => {
            return Err(CliError::Usage("--mode observed requires --labels".into()))
        }
        (Mode::Latent, _) => GroupAssignment::latent(groups)?,
    };
    let config = FitConfig {
        max_sweeps: a.sweeps,
        bound_tol: a.tol,
        compute_bound_every: 1,
        restarts: a.restarts,
        seed: a.seed,
    };
    let outcome = multi_restart_fit(&data, &hyper, &assignment, &config)?;
    let best = outcome.best();
    let summary = format!(
        "trained {features} features, {groups} groups, {} restarts; best bound {} after {} sweeps (restart seed {})",
        outcome.results.len(),
        best.final_bound(),
        best.state.sweeps,
        best.seed
    );
    let archive = ModelArchive {
        seed: a.seed,
        hyperparameters: hyper,
        groups: assignment,
        state: best.state.clone(),
        traces: outcome
            .results
            .iter()
            .map(|r| RestartTrace {
                seed: r.seed,
                bound: r.bound_trace.clone(),
            })
            .collect(),
    };
    if let Some(path) = &a.bound_trace {
        let mut csv = String::new();
        for &(sweep, bound) in &best.bound_trace {
            csv.push_str(&format!("{sweep},{bound}\n"));
        }
        write_bytes("bound-trace", path, csv.as_bytes())?;
    }
    io::save_archive(&archive, &a.out).map_err(|e| CliError::file("out", &a.out, e))?;
    Ok(summary)
}

fn project_onto(
    archive: &ModelArchive,
    flag: &str,
    data: &Array2<f64>,
    tol: f64,
) -> Result<(Array2<f64>, usize), CliError> {
    let dictionary = &archive.state.dictionary.mean;
    if data.nrows() != dictionary.nrows() {
        return Err(CliError::Data(format!(
            "--{flag}: data has {} rows, the model dictionary has {}",
            data.nrows(),
            dictionary.nrows()
        )));
    }
    let projection = project_matrix_with_tol(dictionary.view(), data.view(), tol)?;
    Ok((
        projection.coefficients,
        projection.non_optimal_columns.len(),
    ))
}

fn project(a: ProjectArgs) -> Result<String, CliError> {
    let archive = read_archive(&a.model)?;
    let data = read_data("data", &a.data)?;
    let (coefficients, non_optimal) = project_onto(&archive, "data", data.values(), a.tol)?;
    if non_optimal > 0 {
        eprintln!("warning: {non_optimal} column(s) stopped at the iteration limit");
    }
    write_matrix("out", &coefficients, &a.out)?;
    Ok(format!(
        "projected {} columns onto {} features",
        coefficients.ncols(),
        coefficients.nrows()
    ))
}

fn classify(a: ClassifyArgs) -> Result<String, CliError> {
    let archive = read_archive(&a.model)?;
    let train = read_data("train-data", &a.train_data)?;
    let train_labels = read_labels("train-labels", &a.train_labels, train.cols())?;
    let test = read_data("test-data", &a.test_data)?;
    let tol = gsnmf::projection::DEFAULT_TOL;
    let (train_features, _) = project_onto(&archive, "train-data", train.values(), tol)?;
    let (test_features, _) = project_onto(&archive, "test-data", test.values(), tol)?;
    let predicted =
        knn_cosine_classify(train_features.view(), &train_labels, test_features.view())?;
    write_bytes("out", &a.out, io::format_labels(&predicted).as_bytes())?;
    match &a.test_labels {
        Some(path) => {
            let truth = read_labels("test-labels", path, test.cols())?;
            let correct = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
            Ok(format!(
                "classified {} samples; accuracy {}",
                predicted.len(),
                correct as f64 / predicted.len() as f64
            ))
        }
        None => Ok(format!("classified {} samples", predicted.len())),
    }
}

fn dataset(cv: &CvArgs) -> Result<LabeledDataset, CliError> {
    let data = read_data("data", &cv.data)?;
    let labels = read_labels("labels", &cv.labels, data.cols())?;
    let classes = class_count(&labels);
    LabeledDataset::new(data, labels, classes).map_err(|e| CliError::Data(format!("--labels: {e}")))
}

fn cv_config(cv: &CvArgs) -> CvConfig {
    CvConfig {
        folds: cv.folds,
        runs: cv.runs,
        restarts: cv.restarts,
        seed: cv.seed,
        fit: FitConfig {
            max_sweeps: cv.sweeps,
            compute_bound_every: cv.sweeps.max(1),
            ..FitConfig::default()
        },
        aggregation: match cv.aggregation {
            AggregationArg::PerFoldMax => Aggregation::PerFoldMaxThenMean,
            AggregationArg::MeanThenMax => Aggregation::MeanThenMax,
        },
    }
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<String, CliError> {
    let data = dataset(&a.cv)?;
    let p = &a.prior;
    let setting = match a.prior_kind {
        PriorKind::Group => Setting::Group {
            per_group: a.per_group,
            a_small: p.a_small,
            a_large: p.a_large,
            b_lambda: p.b_lambda,
            a_t: p.a_t,
            b_t: p.b_t,
        },
        PriorKind::Plain => Setting::Plain {
            dict_size: a.dict_size.unwrap_or(a.per_group * data.classes()),
            a_small: p.a_small,
            b_lambda: p.b_lambda,
            a_t: p.a_t,
            b_t: p.b_t,
        },
    };
    let config = cv_config(&a.cv);
    let report = evaluate(&data, &setting.to_prior(), &config)?;
    let out = Report::new(&report, setting, Protocol::new(&config));
    write_json("report", &a.cv.report, &out)?;
    Ok(format!(
        "max accuracy {}, mean accuracy {}, variance {}, subspace dimension {}",
        out.max_accuracy, out.mean_accuracy, out.variance, out.subspace_dimension
    ))
}

fn sweep(a: SweepArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&a.grid).map_err(|source| {
        CliError::file(
            "grid",
            &a.grid,
            io::IoError::Io {
                path: a.grid.clone(),
                source,
            },
        )
    })?;
    let grid: Vec<GridEntry> = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("--grid {}: {e}", a.grid.display())))?;
    let settings: Vec<Setting> = grid.iter().map(|g| g.resolve(&a.prior)).collect();
    let data = dataset(&a.cv)?;
    let config = cv_config(&a.cv);
    let priors: Vec<_> = settings.iter().map(Setting::to_prior).collect();
    let outcome = parameter_sweep(&data, &priors, &config)?;
    let protocol = Protocol::new(&config);
    let results: Vec<Report> = outcome
        .reports
        .iter()
        .zip(settings)
        .map(|(r, s)| Report::new(r, s, protocol.clone()))
        .collect();
    let best = &results[outcome.best];
    let summary = format!(
        "best setting {} of {}: max accuracy {}, subspace dimension {}",
        outcome.best + 1,
        results.len(),
        best.max_accuracy,
        best.subspace_dimension
    );
    write_json(
        "report",
        &a.cv.report,
        &SweepReport {
            best: outcome.best,
            results,
        },
    )?;
    Ok(summary)
}

fn prevalence(a: PrevalenceArgs) -> Result<String, CliError> {
    let archive = read_archive(&a.model)?;
    let coefficients = &archive.state.coefficients.mean;
    let (labels, classes) = match (&a.labels, archive.groups.labels()) {
        (Some(path), _) => {
            let l = read_labels("labels", path, coefficients.ncols())?;
            let c = class_count(&l);
            (l, c)
        }
        (None, Some(l)) => (l.to_vec(), archive.groups.groups()),
        (None, None) => {
            return Err(CliError::Usage(
                "the model has latent groups; pass --labels".into(),
            ))
        }
    };
    let mut matrix = group_prevalence(coefficients.view(), &labels, classes)?;
    if !a.raw {
        matrix = normalize_rows(matrix);
    }
    let style = match a.style {
        StyleArg::Hinton => HeatmapStyle::Hinton,
        StyleArg::Magnitude => HeatmapStyle::Magnitude,
    };
    io::export_heatmap(matrix.view(), &a.out, style, a.cell_px as usize)
        .map_err(|e| CliError::file("out", &a.out, e))?;
    if let Some(path) = &a.matrix_out {
        write_matrix("matrix-out", &matrix, path)?;
    }
    Ok(format!(
        "diagonal block mass {}",
        diagonal_block_mass(matrix.view())
    ))
}
