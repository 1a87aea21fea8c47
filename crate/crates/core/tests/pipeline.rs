use gsnmf::model::build_group_hyperprior;
use gsnmf::pipeline::{
    diagonal_block_mass, evaluate, group_prevalence, knn_cosine_classify, parameter_sweep,
    Aggregation, CvConfig, GroupSparse, LabeledDataset, PlainSparse, PriorSetting,
};
use gsnmf::{sample_model, FitConfig, GroupAssignment, Hyperparameters};
use ndarray::{array, Array2};
use proptest::prelude::*;

/// Brute-force cosine distances, written out independently of the library.
fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

#[test]
fn cosine_example_against_distance_table() {
    let train = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
    let test = [0.9, 1.0];
    let distances: Vec<f64> = train
        .columns()
        .into_iter()
        .map(|c| cosine_distance(&test, &c.to_vec()))
        .collect();
    assert!((distances[2] - 0.001382).abs() < 1e-6);
    assert!((distances[1] - 0.256706).abs() < 1e-6);
    assert!(distances[2] < distances[1] && distances[1] < distances[0]);
    // Labels A = 0, B = 1.
    let predicted =
        knn_cosine_classify(train.view(), &[0, 1, 0], array![[0.9], [1.0]].view()).unwrap();
    assert_eq!(predicted, vec![0]);
}

proptest! {
    #[test]
    fn classification_is_scale_invariant(
        train in proptest::collection::vec(0.01f64..1.0, 12),
        test in proptest::collection::vec(0.01f64..1.0, 6),
        k in 1e-3f64..1e3,
    ) {
        let train = Array2::from_shape_vec((3, 4), train).unwrap();
        let test = Array2::from_shape_vec((3, 2), test).unwrap();
        let labels = [0, 1, 2, 3];
        let base = knn_cosine_classify(train.view(), &labels, test.view()).unwrap();
        let scaled = knn_cosine_classify((&train * k).view(), &labels, (&test * k).view()).unwrap();
        prop_assert_eq!(base, scaled);
    }
}

/// Planted data: C = 3 classes, two features per class, strong contrast.
fn planted(samples_per_class: usize, seed: u64) -> LabeledDataset {
    let classes = 3;
    let t = classes * samples_per_class;
    let (rate_shape, rate_scale) = build_group_hyperprior(classes, 2, 1.0, 64.0, 1.0).unwrap();
    let hyper = Hyperparameters::new(
        Array2::from_elem((30, 6), 0.6),
        Array2::from_elem((30, 6), 20.0),
        rate_shape,
        rate_scale,
        Array2::ones((t, classes)),
    )
    .unwrap();
    let labels: Vec<usize> = (0..t).map(|tau| tau % classes).collect();
    let groups = GroupAssignment::observed(labels.clone(), classes).unwrap();
    let (data, _) = sample_model(&hyper, &groups, seed).unwrap();
    LabeledDataset::new(data, labels, classes).unwrap()
}

fn matching_prior() -> GroupSparse {
    GroupSparse {
        a_small: 1.0,
        a_large: 64.0,
        rate_scale: 1.0,
        ..GroupSparse::new(2)
    }
}

fn quick_config(seed: u64) -> CvConfig {
    CvConfig {
        folds: 5,
        runs: 1,
        restarts: 2,
        seed,
        fit: FitConfig {
            max_sweeps: 100,
            compute_bound_every: 100,
            ..FitConfig::default()
        },
        aggregation: Aggregation::default(),
    }
}

#[test]
fn evaluate_is_deterministic_and_consistent() {
    let dataset = planted(10, 3);
    let config = quick_config(5);
    let a = evaluate(&dataset, &matching_prior(), &config).unwrap();
    let b = evaluate(&dataset, &matching_prior(), &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_fold.dim(), (1, 5, 2));
    assert_eq!(a.subspace_dimension, 6);
    let (min, max) = a
        .per_fold
        .iter()
        .fold((1.0f64, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    assert!(a.mean_accuracy >= min && a.mean_accuracy <= max);
    assert!(a.max_accuracy >= a.mean_accuracy);
    assert!(a.variance >= 0.0);
}

#[test]
fn separable_data_is_classified_perfectly() {
    // Check first that the classifier separates the planted coefficients.
    let dataset = planted(10, 4);
    let report = evaluate(&dataset, &matching_prior(), &quick_config(1)).unwrap();
    assert_eq!(report.max_accuracy, 1.0, "{:?}", report.per_fold);
}

#[test]
fn single_restart_single_run() {
    let dataset = planted(6, 2);
    let config = CvConfig {
        restarts: 1,
        folds: 3,
        ..quick_config(9)
    };
    let report = evaluate(&dataset, &PlainSparse::new(4), &config).unwrap();
    assert_eq!(report.max_accuracy, report.mean_accuracy);
    assert_eq!(report.subspace_dimension, 4);
}

#[test]
fn sweep_selection_rules() {
    let dataset = planted(6, 5);
    let config = CvConfig {
        folds: 3,
        restarts: 1,
        ..quick_config(2)
    };
    let setting = PriorSetting::GroupSparse(matching_prior());
    let single = parameter_sweep(&dataset, &[setting], &config).unwrap();
    assert_eq!(single.best, 0);
    let twice = parameter_sweep(&dataset, &[setting, setting], &config).unwrap();
    assert_eq!(twice.reports[0], twice.reports[1]);
    assert_eq!(twice.best, 0);
}

#[test]
fn prevalence_of_planted_truth_is_block_diagonal() {
    let dataset = planted(10, 6);
    let (rate_shape, rate_scale) = build_group_hyperprior(3, 2, 1.0, 64.0, 1.0).unwrap();
    let hyper = Hyperparameters::new(
        Array2::from_elem((30, 6), 0.6),
        Array2::from_elem((30, 6), 20.0),
        rate_shape,
        rate_scale,
        Array2::ones((30, 3)),
    )
    .unwrap();
    let groups = GroupAssignment::observed(dataset.labels().to_vec(), 3).unwrap();
    let (_, truth) = sample_model(&hyper, &groups, 6).unwrap();
    let p = group_prevalence(truth.coefficients.view(), dataset.labels(), 3).unwrap();
    assert!(diagonal_block_mass(p.view()) > 0.8);
}
