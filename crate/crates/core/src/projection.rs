//! Nonnegative least squares, used to map held-out samples onto a learned
//! dictionary.
//!
//! [`nnls`] is the Lawson-Hanson active-set method. Each unconstrained
//! subproblem is solved with a fresh Householder QR of the passive columns,
//! which also detects columns that are numerically dependent on the passive
//! set; such columns are skipped rather than entered.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView1, ArrayView2};
use thiserror::Error;

/// Default absolute tolerance on gradient components.
pub const DEFAULT_TOL: f64 = 1e-8;

/// A diagonal entry of R below this fraction of the column norm marks the
/// column as dependent on the passive set.
const RANK_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("target has length {found}, dictionary has {expected} rows")]
    Length { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    /// Length `I`, nonnegative.
    pub coefficients: Vec<f64>,
    /// `‖target − dictionary · coefficients‖₂`
    pub residual_norm: f64,
    /// Outer iterations, i.e. variables entered into the passive set.
    pub iterations: usize,
    /// False when the iteration cap was hit; `coefficients` is then the best
    /// iterate seen.
    pub optimal: bool,
    /// All-zero dictionary columns; their coefficients are 0.
    pub dropped_columns: Vec<usize>,
}

/// [`nnls_with_limit`] with the default cap of `3·I` iterations.
pub fn nnls(
    dictionary: ArrayView2<f64>,
    target: ArrayView1<f64>,
    tol: f64,
) -> Result<NnlsSolution, ProjectionError> {
    nnls_with_limit(dictionary, target, tol, 3 * dictionary.ncols())
}

/// Minimizes `½‖target − dictionary · v‖²` subject to `v ≥ 0`.
///
/// On return either every zero coefficient has gradient `≥ −tol` (optimal) or
/// `max_iterations` variables have been entered.
pub fn nnls_with_limit(
    dictionary: ArrayView2<f64>,
    target: ArrayView1<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<NnlsSolution, ProjectionError> {
    let (rows, cols) = dictionary.dim();
    if rows == 0 || cols == 0 {
        return Err(ProjectionError::EmptyDictionary);
    }
    if target.len() != rows {
        return Err(ProjectionError::Length {
            expected: rows,
            found: target.len(),
        });
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(ProjectionError::Tolerance(tol));
    }
    if !dictionary.iter().all(|v| v.is_finite()) {
        return Err(ProjectionError::NonFinite("dictionary"));
    }
    if !target.iter().all(|v| v.is_finite()) {
        return Err(ProjectionError::NonFinite("target"));
    }

    let dropped_columns: Vec<usize> = (0..cols)
        .filter(|&j| dictionary.column(j).iter().all(|&v| v == 0.0))
        .collect();
    let dropped = {
        let mut mask = vec![false; cols];
        dropped_columns.iter().for_each(|&j| mask[j] = true);
        mask
    };

    let mut x = vec![0.0; cols];
    let mut passive: Vec<usize> = Vec::new();
    let mut excluded = dropped.clone();
    let mut iterations = 0;
    let mut best = (x.clone(), residual(dictionary, target, &x));
    let mut optimal = false;

    loop {
        let w = gradient(dictionary, target, &x);
        let candidate = (0..cols)
            .filter(|&j| !excluded[j] && !passive.contains(&j) && w[j] > tol)
            .fold(None, |acc: Option<usize>, j| match acc {
                Some(k) if w[k] >= w[j] => Some(k),
                _ => Some(j),
            });
        let Some(j) = candidate else {
            // Skipped dependent columns with a positive gradient mean the
            // problem is too ill-conditioned to certify.
            optimal = (0..cols).all(|k| dropped[k] || !excluded[k] || w[k] <= tol);
            break;
        };
        if iterations == max_iterations {
            break;
        }

        passive.push(j);
        let z = match solve_passive(dictionary, target, &passive) {
            Some(z) if *z.last().expect("passive set is nonempty") > 0.0 => z,
            _ => {
                passive.pop();
                excluded[j] = true;
                continue;
            }
        };
        iterations += 1;
        excluded.copy_from_slice(&dropped);

        let mut z = z;
        loop {
            if z.iter().all(|&v| v > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                passive.iter().zip(&z).for_each(|(&p, &v)| x[p] = v);
                break;
            }
            // Step from x towards z until the first passive variable hits 0.
            let (alpha, blocking) = passive
                .iter()
                .zip(&z)
                .enumerate()
                .filter(|(_, (_, &zp))| zp <= 0.0)
                .map(|(k, (&p, &zp))| (x[p] / (x[p] - zp), k))
                .fold(
                    (f64::INFINITY, 0),
                    |acc, cur| if cur.0 < acc.0 { cur } else { acc },
                );
            for (&p, &zp) in passive.iter().zip(&z) {
                x[p] += alpha * (zp - x[p]);
            }
            x[passive[blocking]] = 0.0;
            passive.retain(|&p| x[p] > 0.0);
            for (k, v) in x.iter_mut().enumerate() {
                if !passive.contains(&k) {
                    *v = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
            z = match solve_passive(dictionary, target, &passive) {
                Some(z) => z,
                // Subsets of an independent set stay independent; this is
                // reached only through rounding. Keep the feasible x.
                None => break,
            };
        }

        let r = residual(dictionary, target, &x);
        if r < best.1 {
            best = (x.clone(), r);
        }
    }

    let (coefficients, residual_norm) = if optimal {
        let r = residual(dictionary, target, &x);
        (x, r)
    } else {
        best
    };
    Ok(NnlsSolution {
        coefficients,
        residual_norm,
        iterations,
        optimal,
        dropped_columns,
    })
}

fn residual(a: ArrayView2<f64>, b: ArrayView1<f64>, x: &[f64]) -> f64 {
    libm::sqrt(residual_vector(a, b, x).iter().map(|r| r * r).sum())
}

fn residual_vector(a: ArrayView2<f64>, b: ArrayView1<f64>, x: &[f64]) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(b.iter())
        .map(|(row, &bi)| bi - row.iter().zip(x).map(|(aij, xj)| aij * xj).sum::<f64>())
        .collect()
}

/// `Aᵀ(b − A x)`, the negative gradient of `½‖b − A x‖²`.
fn gradient(a: ArrayView2<f64>, b: ArrayView1<f64>, x: &[f64]) -> Vec<f64> {
    let r = residual_vector(a, b, x);
    a.columns()
        .into_iter()
        .map(|col| col.iter().zip(&r).map(|(aij, ri)| aij * ri).sum())
        .collect()
}

/// Least squares on the columns `cols` of `a` by Householder QR. Returns
/// `None` when the columns are numerically dependent.
fn solve_passive(a: ArrayView2<f64>, b: ArrayView1<f64>, cols: &[usize]) -> Option<Vec<f64>> {
    let m = a.nrows();
    let k = cols.len();
    if k > m {
        return None;
    }
    // Column-major copy of the passive columns.
    let mut r: Vec<f64> = cols.iter().flat_map(|&j| a.column(j).to_vec()).collect();
    let norms: Vec<f64> = (0..k)
        .map(|j| libm::sqrt(r[j * m..(j + 1) * m].iter().map(|v| v * v).sum()))
        .collect();
    let mut qtb = b.to_vec();
    let mut diag = vec![0.0; k];
    let mut v = vec![0.0; m];

    for j in 0..k {
        let col = &r[j * m..(j + 1) * m];
        let norm = libm::sqrt(col[j..].iter().map(|x| x * x).sum());
        if norm <= RANK_TOL * norms[j] || norm == 0.0 {
            return None;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        v[j..].copy_from_slice(&col[j..]);
        v[j] -= alpha;
        let vv: f64 = v[j..].iter().map(|x| x * x).sum();
        diag[j] = alpha;
        if vv > 0.0 {
            for l in j + 1..k {
                let c = &mut r[l * m..(l + 1) * m];
                let s = 2.0 * v[j..].iter().zip(&c[j..]).map(|(a, b)| a * b).sum::<f64>() / vv;
                c[j..]
                    .iter_mut()
                    .zip(&v[j..])
                    .for_each(|(cx, vx)| *cx -= s * vx);
            }
            let s = 2.0
                * v[j..]
                    .iter()
                    .zip(&qtb[j..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                / vv;
            qtb[j..]
                .iter_mut()
                .zip(&v[j..])
                .for_each(|(q, vx)| *q -= s * vx);
        }
    }

    let mut z = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = qtb[j];
        for l in j + 1..k {
            s -= r[l * m + j] * z[l];
        }
        z[j] = s / diag[j];
    }
    Some(z)
}

/// Coefficients of many samples on one dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `I × M`, column `m` solves the problem for sample `m`.
    pub coefficients: Array2<f64>,
    /// Samples whose solve hit the iteration cap.
    pub non_optimal_columns: Vec<usize>,
    /// All-zero dictionary columns.
    pub dropped_columns: Vec<usize>,
}

/// [`nnls`] applied to every column of `samples` with [`DEFAULT_TOL`].
pub fn project_matrix(
    dictionary: ArrayView2<f64>,
    samples: ArrayView2<f64>,
) -> Result<Projection, ProjectionError> {
    project_matrix_with_tol(dictionary, samples, DEFAULT_TOL)
}

pub fn project_matrix_with_tol(
    dictionary: ArrayView2<f64>,
    samples: ArrayView2<f64>,
    tol: f64,
) -> Result<Projection, ProjectionError> {
    let features = dictionary.ncols();
    if dictionary.nrows() == 0 || features == 0 {
        return Err(ProjectionError::EmptyDictionary);
    }
    if samples.nrows() != dictionary.nrows() {
        return Err(ProjectionError::Length {
            expected: dictionary.nrows(),
            found: samples.nrows(),
        });
    }
    let mut coefficients = Array2::zeros((features, samples.ncols()));
    let mut non_optimal_columns = Vec::new();
    let mut dropped_columns = Vec::new();
    for (m, sample) in samples.columns().into_iter().enumerate() {
        let solution = nnls(dictionary, sample, tol)?;
        if !solution.optimal {
            non_optimal_columns.push(m);
        }
        coefficients
            .column_mut(m)
            .iter_mut()
            .zip(&solution.coefficients)
            .for_each(|(c, &v)| *c = v);
        dropped_columns = solution.dropped_columns;
    }
    Ok(Projection {
        coefficients,
        non_optimal_columns,
        dropped_columns,
    })
}
