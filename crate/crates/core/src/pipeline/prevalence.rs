use alloc::vec;

use ndarray::{Array2, ArrayView2};

use super::PipelineError;

/// Mean coefficient of each feature over the samples of each label.
///
/// Returns a `C × I` matrix: rows are labels, columns features.
pub fn group_prevalence(
    coefficients: ArrayView2<f64>,
    labels: &[usize],
    classes: usize,
) -> Result<Array2<f64>, PipelineError> {
    if labels.len() != coefficients.ncols() {
        return Err(PipelineError::Length {
            what: "labels",
            expected: coefficients.ncols(),
            found: labels.len(),
        });
    }
    let mut prevalence = Array2::zeros((classes, coefficients.nrows()));
    let mut counts = vec![0usize; classes];
    for (tau, (&label, column)) in labels.iter().zip(coefficients.columns()).enumerate() {
        if label >= classes {
            return Err(PipelineError::LabelOutOfRange {
                sample: tau,
                label,
                classes,
            });
        }
        counts[label] += 1;
        let mut row = prevalence.row_mut(label);
        row += &column.mapv(f64::abs);
    }
    for (c, (mut row, &n)) in prevalence.rows_mut().into_iter().zip(&counts).enumerate() {
        if n == 0 {
            return Err(PipelineError::EmptyClass(c));
        }
        row /= n as f64;
    }
    Ok(prevalence)
}

/// Scales each row to sum to 1; all-zero rows are left at zero.
pub fn normalize_rows(mut prevalence: Array2<f64>) -> Array2<f64> {
    for mut row in prevalence.rows_mut() {
        let total = row.sum();
        if total > 0.0 {
            row /= total;
        }
    }
    prevalence
}

/// Fraction of the total mass of a `C × I` prevalence matrix lying on its
/// diagonal blocks, with feature `i` belonging to block `⌊i·C/I⌋`.
///
/// Returns NaN for an all-zero matrix.
pub fn diagonal_block_mass(prevalence: ArrayView2<f64>) -> f64 {
    let (classes, features) = prevalence.dim();
    let mut diagonal = 0.0;
    let mut total = 0.0;
    for ((c, i), &p) in prevalence.indexed_iter() {
        total += p;
        if i * classes / features == c {
            diagonal += p;
        }
    }
    diagonal / total
}
