use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PipelineError;

/// One crossvalidation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub folds: Vec<Fold>,
    /// Classes with fewer samples than folds; they are missing from the test
    /// side of some folds.
    pub undersized_classes: Vec<usize>,
}

/// Stratified k-fold partition of `labels` (classes `0..classes`).
///
/// Each class is shuffled and dealt round-robin over the folds. The dealing
/// position carries over from one class to the next, so fold sizes differ by
/// at most one overall as well as per class.
pub fn stratified_folds(
    labels: &[usize],
    classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Folds, PipelineError> {
    if folds < 2 {
        return Err(PipelineError::Config("folds must be at least 2"));
    }
    if labels.len() < folds {
        return Err(PipelineError::TooFewSamples {
            samples: labels.len(),
            folds,
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (tau, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(PipelineError::LabelOutOfRange {
                sample: tau,
                label,
                classes,
            });
        }
        members[label].push(tau);
    }
    if let Some(class) = members.iter().position(Vec::is_empty) {
        return Err(PipelineError::EmptyClass(class));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut position = 0;
    let mut undersized_classes = Vec::new();
    for (class, indices) in members.iter_mut().enumerate() {
        if indices.len() < folds {
            undersized_classes.push(class);
        }
        indices.shuffle(&mut rng);
        for &tau in indices.iter() {
            test[position % folds].push(tau);
            position += 1;
        }
    }

    let folds = test
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            test.iter().for_each(|&t| in_test[t] = true);
            let train = (0..labels.len()).filter(|&t| !in_test[t]).collect();
            Fold { train, test }
        })
        .collect();
    Ok(Folds {
        folds,
        undersized_classes,
    })
}
