use alloc::vec::Vec;

use ndarray::ArrayView2;

use super::PipelineError;

/// 1-nearest-neighbour labels under cosine distance `1 − a·b / (‖a‖‖b‖)`.
///
/// Features are columns. A zero vector on either side is at distance 1 from
/// everything. Ties go to the lowest train index.
pub fn knn_cosine_classify(
    train_features: ArrayView2<f64>,
    train_labels: &[usize],
    test_features: ArrayView2<f64>,
) -> Result<Vec<usize>, PipelineError> {
    if train_features.ncols() == 0 {
        return Err(PipelineError::EmptyTrainingSet);
    }
    if train_labels.len() != train_features.ncols() {
        return Err(PipelineError::Length {
            what: "train labels",
            expected: train_features.ncols(),
            found: train_labels.len(),
        });
    }
    if test_features.nrows() != train_features.nrows() {
        return Err(PipelineError::Length {
            what: "test feature rows",
            expected: train_features.nrows(),
            found: test_features.nrows(),
        });
    }
    let norm = |c: ndarray::ArrayView1<f64>| libm::sqrt(c.dot(&c));
    let train_norms: Vec<f64> = train_features.columns().into_iter().map(norm).collect();
    let predictions = test_features
        .columns()
        .into_iter()
        .map(|test| {
            let test_norm = norm(test);
            let mut best = (f64::INFINITY, 0);
            for (n, (train, &train_norm)) in train_features
                .columns()
                .into_iter()
                .zip(&train_norms)
                .enumerate()
            {
                let d = cosine_distance(test, test_norm, train, train_norm);
                if d < best.0 {
                    best = (d, n);
                }
            }
            train_labels[best.1]
        })
        .collect();
    Ok(predictions)
}

fn cosine_distance(
    a: ndarray::ArrayView1<f64>,
    a_norm: f64,
    b: ndarray::ArrayView1<f64>,
    b_norm: f64,
) -> f64 {
    if a_norm == 0.0 || b_norm == 0.0 {
        1.0
    } else {
        1.0 - a.dot(&b) / (a_norm * b_norm)
    }
}
