use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use gsnmf::pipeline::{diagonal_block_mass, group_prevalence, normalize_rows};
use gsnmf_cli::io::{load_archive, load_labels, load_matrix, load_pgm};
use gsnmf_cli::report::{Report, SweepReport};
use gsnmf_cli::Cli;

fn gsnmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsnmf"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = gsnmf(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    gsnmf(args).status.code().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_owned()
    }

    /// 3 groups, 2 features each, strong block contrast.
    fn planted(&self, samples: usize, seed: u64) -> (String, String) {
        let (x, y) = (self.path("x.bin"), self.path("y.csv"));
        let dims = format!("30,6,3,{samples}");
        let seed = seed.to_string();
        ok(&[
            "generate",
            "--out",
            &x,
            "--labels-out",
            &y,
            "--dims",
            &dims,
            "--per-group",
            "2",
            "--a-small",
            "1",
            "--a-large",
            "64",
            "--b-lambda",
            "1",
            "--seed",
            &seed,
        ]);
        (x, y)
    }

    fn train(&self, x: &str, y: &str, extra: &[&str]) -> String {
        let model = self.path("model.gsnm");
        let mut args = vec![
            "train",
            "--data",
            x,
            "--labels",
            y,
            "--per-group",
            "2",
            "--a-small",
            "1",
        ];
        args.extend(["--a-large", "64", "--b-lambda", "1", "--out", &model]);
        args.extend(extra);
        ok(&args);
        model
    }
}

const PRIOR: [&str; 6] = ["--a-small", "1", "--a-large", "64", "--b-lambda", "1"];

#[test]
fn generate_with_defaults() {
    let ws = Workspace::new();
    let (x, truth) = (ws.path("x.bin"), ws.path("truth"));
    ok(&["generate", "--out", &x, "--truth", &truth, "--seed", "7"]);
    let data = load_matrix(Path::new(&x)).unwrap();
    assert_eq!(data.dim(), (40, 90));
    assert!(data.iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
    for name in [
        "dictionary.bin",
        "coefficients.bin",
        "rates.bin",
        "labels.csv",
    ] {
        assert!(Path::new(&truth).join(name).exists(), "{name}");
    }
    let first = std::fs::read(&x).unwrap();
    ok(&["generate", "--out", &x, "--seed", "7"]);
    assert_eq!(std::fs::read(&x).unwrap(), first);
    ok(&["generate", "--out", &x, "--seed", "8"]);
    let labels = load_labels(&Path::new(&truth).join("labels.csv")).unwrap();
    assert_eq!(labels.len(), 90);
    assert_eq!(labels[..3], [0, 0, 0]);
    assert_eq!(labels[89], 2);
}

fn planted_prevalence(ws: &Workspace, a_small: &str, a_large: &str) -> f64 {
    let truth = ws.path(&format!("truth-{a_small}-{a_large}"));
    ok(&[
        "generate",
        "--out",
        &ws.path("x.bin"),
        "--truth",
        &truth,
        "--dims",
        "10,6,3,900",
        "--per-group",
        "2",
        "--a-small",
        a_small,
        "--a-large",
        a_large,
        "--b-lambda",
        "1",
        "--seed",
        "3",
    ]);
    let v = load_matrix(&Path::new(&truth).join("coefficients.bin")).unwrap();
    let labels = load_labels(&Path::new(&truth).join("labels.csv")).unwrap();
    diagonal_block_mass(normalize_rows(group_prevalence(v.view(), &labels, 3).unwrap()).view())
}

#[test]
fn generator_contrast_controls_block_structure() {
    let ws = Workspace::new();
    // equal shapes: every block carries about a third of the mass
    let flat = planted_prevalence(&ws, "64", "64");
    assert!(
        (flat - 1.0 / 3.0).abs() < 0.05,
        "flat prior gave block mass {flat}"
    );
    let contrast = planted_prevalence(&ws, "1", "64");
    assert!(
        contrast > 0.8,
        "contrasting prior gave block mass {contrast}"
    );
}

#[test]
fn train_writes_archive_and_trace() {
    let ws = Workspace::new();
    let (x, y) = ws.planted(30, 1);
    let trace = ws.path("trace.csv");
    let model = ws.train(
        &x,
        &y,
        &["--sweeps", "1", "--restarts", "2", "--bound-trace", &trace],
    );
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 1);
    let archive = load_archive(Path::new(&model)).unwrap();
    assert_eq!(archive.traces.len(), 2);
    assert_eq!(archive.state.sweeps, 1);

    ws.train(
        &x,
        &y,
        &["--sweeps", "80", "--restarts", "2", "--bound-trace", &trace],
    );
    let bounds: Vec<f64> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(n, line)| {
            let (sweep, bound) = line.split_once(',').unwrap();
            assert_eq!(sweep.parse::<usize>().unwrap(), n + 1);
            bound.parse().unwrap()
        })
        .collect();
    assert_eq!(bounds.len(), 80);
    assert!(bounds.windows(2).all(|w| w[1] >= w[0] - w[0].abs() * 1e-9));
}

#[test]
fn latent_training_without_labels() {
    let ws = Workspace::new();
    let (x, _) = ws.planted(30, 2);
    let model = ws.path("latent.gsnm");
    ok(&[
        "train",
        "--data",
        &x,
        "--mode",
        "latent",
        "--groups",
        "3",
        "--dict-size",
        "6",
        "--sweeps",
        "20",
        "--restarts",
        "2",
        "--out",
        &model,
    ]);
    let archive = load_archive(Path::new(&model)).unwrap();
    assert!(archive.groups.is_latent());
    assert!(archive
        .hyperparameters
        .dirichlet()
        .iter()
        .all(|&u| u == 1.0));
    for row in archive.state.responsibilities.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn project_and_classify() {
    let ws = Workspace::new();
    let (x, y) = ws.planted(45, 3);
    let model = ws.train(&x, &y, &["--sweeps", "100", "--restarts", "2"]);
    let v = ws.path("v.csv");
    ok(&["project", "--model", &model, "--data", &x, "--out", &v]);
    let coefficients = load_matrix(Path::new(&v)).unwrap();
    assert_eq!(coefficients.dim(), (6, 45));
    assert!(coefficients.iter().all(|&c| c >= 0.0));

    let pred = ws.path("pred.csv");
    let summary = ok(&[
        "classify",
        "--model",
        &model,
        "--train-data",
        &x,
        "--train-labels",
        &y,
        "--test-data",
        &x,
        "--test-labels",
        &y,
        "--out",
        &pred,
    ]);
    assert!(summary.contains("accuracy 1"), "{summary}");
    assert_eq!(
        load_labels(Path::new(&pred)).unwrap(),
        load_labels(Path::new(&y)).unwrap()
    );
}

#[test]
fn evaluate_separable_data() {
    let ws = Workspace::new();
    let (x, y) = ws.planted(45, 4);
    let report = ws.path("report.json");
    let mut args = vec![
        "evaluate",
        "--data",
        &x,
        "--labels",
        &y,
        "--per-group",
        "2",
        "--folds",
        "5",
        "--runs",
        "2",
    ];
    args.extend(["--restarts", "2", "--sweeps", "100", "--report", &report]);
    args.extend(PRIOR);
    ok(&args);
    let r: Report = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.max_accuracy, 1.0);
    assert_eq!(r.subspace_dimension, 6);
    assert_eq!(
        (
            r.per_fold.len(),
            r.per_fold[0].len(),
            r.per_fold[0][0].len()
        ),
        (2, 5, 2)
    );
    assert_eq!(r.protocol.sweeps, 100);
}

#[test]
fn sweep_selects_from_grid() {
    let ws = Workspace::new();
    let (x, y) = ws.planted(45, 5);
    let grid = ws.path("grid.json");
    std::fs::write(
        &grid,
        r#"[{"prior": "group", "per_group": 2}, {"prior": "plain", "dict_size": 6, "a_small": 1}]"#,
    )
    .unwrap();
    let report = ws.path("sweep.json");
    let mut args = vec![
        "sweep", "--data", &x, "--labels", &y, "--grid", &grid, "--folds", "3", "--runs", "1",
    ];
    args.extend(["--restarts", "1", "--sweeps", "60", "--report", &report]);
    args.extend(PRIOR);
    ok(&args);
    let r: SweepReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.results.len(), 2);
    let best = r.results[r.best].max_accuracy;
    assert!(r.results.iter().all(|x| x.max_accuracy <= best));

    std::fs::write(&grid, "[]").unwrap();
    assert_eq!(code(&args), 3);
}

#[test]
fn prevalence_of_a_block_model() {
    let ws = Workspace::new();
    let (x, y) = ws.planted(60, 6);
    let model = ws.train(&x, &y, &["--sweeps", "150", "--restarts", "3"]);
    let (heat, matrix) = (ws.path("heat.pgm"), ws.path("prev.csv"));
    let summary = ok(&[
        "prevalence",
        "--model",
        &model,
        "--out",
        &heat,
        "--matrix-out",
        &matrix,
        "--cell-px",
        "5",
    ]);
    let mass: f64 = summary.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(mass > 0.7, "{summary}");
    let prevalence = load_matrix(Path::new(&matrix)).unwrap();
    assert_eq!(prevalence.dim(), (3, 6));
    assert_eq!(diagonal_block_mass(prevalence.view()), mass);
    let img = load_pgm(Path::new(&heat)).unwrap();
    assert_eq!(img.pixels.dim(), (15, 30));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let (x, y) = ws.planted(12, 7);
    let model = ws.path("m.gsnm");
    // usage
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["train", "--data", &x]), 2);
    assert_eq!(
        code(&["train", "--data", &x, "--per-group", "2", "--out", &model]),
        2
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            &x,
            "--labels",
            &y,
            "--dict-size",
            "5",
            "--per-group",
            "2",
            "--out",
            &model
        ]),
        2
    );
    assert_eq!(code(&["generate", "--out", &model, "--dims", "1,2,3"]), 2);
    // data
    assert_eq!(
        code(&[
            "train",
            "--data",
            &ws.path("missing"),
            "--labels",
            &y,
            "--per-group",
            "1",
            "--out",
            &model
        ]),
        3
    );
    let short = ws.path("short.csv");
    std::fs::write(&short, "1\n2\n").unwrap();
    assert_eq!(
        code(&[
            "train",
            "--data",
            &x,
            "--labels",
            &short,
            "--per-group",
            "1",
            "--out",
            &model
        ]),
        3
    );
    let ragged = ws.path("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_eq!(
        code(&["project", "--model", &x, "--data", &ragged, "--out", &model]),
        3
    );
    // numerical
    let big = ws.path("big.csv");
    std::fs::write(&big, "1e308,1e308\n1e308,1e308\n").unwrap();
    let out = gsnmf(&[
        "train",
        "--data",
        &big,
        "--mode",
        "latent",
        "--dict-size",
        "1",
        "--sweeps",
        "3",
        "--restarts",
        "1",
        "--out",
        &model,
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    assert!(!Path::new(&model).exists());
}

#[test]
fn every_flag_is_documented_with_its_default() {
    let cli = Cli::command();
    let mut checked = 0;
    for sub in cli.get_subcommands() {
        let help = sub.clone().render_long_help().to_string();
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            if long == "help" {
                continue;
            }
            assert!(
                arg.get_help().is_some(),
                "{} --{long} has no help",
                sub.get_name()
            );
            assert!(
                help.contains(&format!("--{long}")),
                "{} --{long} missing from help",
                sub.get_name()
            );
            for default in arg.get_default_values() {
                let shown = format!("[default: {}]", default.to_str().unwrap());
                assert!(
                    help.contains(&shown),
                    "{} --{long} does not show {shown}",
                    sub.get_name()
                );
            }
            checked += 1;
        }
    }
    assert!(checked > 50);
    let train = cli
        .find_subcommand("train")
        .unwrap()
        .clone()
        .render_long_help()
        .to_string();
    for default in [
        "[default: 300]",
        "[default: 10]",
        "[default: 0.6]",
        "[default: 20]",
        "[default: 32]",
        "[default: 256]",
        "[default: 1000000]",
    ] {
        assert!(train.contains(default), "train help lacks {default}");
    }
    let evaluate = cli
        .find_subcommand("evaluate")
        .unwrap()
        .clone()
        .render_long_help()
        .to_string();
    assert!(evaluate.contains("--runs <RUNS>") && evaluate.contains("[default: 5]"));
}

#[test]
fn help_exits_successfully() {
    for sub in [
        "generate",
        "train",
        "project",
        "classify",
        "evaluate",
        "sweep",
        "prevalence",
    ] {
        let out = gsnmf(&[sub, "--help"]);
        assert!(out.status.success());
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn every_subcommand_is_deterministic() {
    let run = |ws: &Workspace| -> Vec<(PathBuf, Vec<u8>)> {
        let (x, y) = ws.planted(24, 9);
        let model = ws.train(
            &x,
            &y,
            &[
                "--sweeps",
                "30",
                "--restarts",
                "2",
                "--seed",
                "4",
                "--bound-trace",
                &ws.path("t.csv"),
            ],
        );
        ok(&[
            "project",
            "--model",
            &model,
            "--data",
            &x,
            "--out",
            &ws.path("v.bin"),
        ]);
        ok(&[
            "classify",
            "--model",
            &model,
            "--train-data",
            &x,
            "--train-labels",
            &y,
            "--test-data",
            &x,
            "--out",
            &ws.path("p.csv"),
        ]);
        let mut args = vec![
            "evaluate",
            "--data",
            &x,
            "--labels",
            &y,
            "--folds",
            "3",
            "--runs",
            "1",
            "--restarts",
            "2",
        ];
        let report = ws.path("r.json");
        args.extend(["--sweeps", "20", "--report", &report]);
        ok(&args);
        let grid = ws.path("g.json");
        std::fs::write(
            &grid,
            r#"[{"prior": "group", "per_group": 1}, {"prior": "plain", "dict_size": 3}]"#,
        )
        .unwrap();
        let sweep_report = ws.path("s.json");
        ok(&[
            "sweep",
            "--data",
            &x,
            "--labels",
            &y,
            "--grid",
            &grid,
            "--folds",
            "3",
            "--runs",
            "1",
            "--restarts",
            "1",
            "--sweeps",
            "20",
            "--report",
            &sweep_report,
        ]);
        ok(&[
            "prevalence",
            "--model",
            &model,
            "--out",
            &ws.path("h.pgm"),
            "--style",
            "magnitude",
        ]);
        let mut files: Vec<_> = std::fs::read_dir(ws.dir.path())
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                let bytes = std::fs::read(&p).unwrap();
                (p.file_name().unwrap().into(), bytes)
            })
            .collect();
        files.sort();
        files
    };
    let (a, b) = (run(&Workspace::new()), run(&Workspace::new()));
    assert_eq!(a.len(), 10);
    assert_eq!(a, b);
}
