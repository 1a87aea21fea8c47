//! Mean-field coordinate ascent for the group-sparse Poisson factorization.
//!
//! A sweep updates, in order: the allocation q(S), the dictionary q(T), the
//! coefficients q(V), the group rates q(λ) and, when groups are latent, the
//! responsibilities q(z) and mixture weights q(π). Every step is the exact
//! maximizer of the variational bound with the other factors held at their
//! current values, so the bound never decreases.

mod bound;
mod state;
mod sweep;

use alloc::vec::Vec;

use thiserror::Error;

pub use bound::{bound_terms, variational_bound, BoundTerms};
pub use state::{init_state, GammaFactor, VariationalState};
pub use sweep::{update_sweep, update_sweep_with_bound};

use crate::model::{DataMatrix, GroupAssignment, Hyperparameters, ModelError};
use crate::numerics::NumericsError;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite values in {matrix} during sweep {sweep}")]
    NonFinite { matrix: &'static str, sweep: usize },
    #[error("non-finite {term} term of the variational bound at sweep {sweep}")]
    NonFiniteBound { term: &'static str, sweep: usize },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Settings of a single fit and of the restart driver.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Number of sweeps to run (300 by default).
    pub max_sweeps: usize,
    /// Stop once the relative bound improvement between two recorded bounds
    /// falls below this value. Zero disables early stopping.
    pub bound_tol: f64,
    /// Record the bound every this many sweeps; the last sweep is always
    /// recorded.
    pub compute_bound_every: usize,
    /// Number of random restarts for [`multi_restart_fit`].
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 300,
            bound_tol: 0.0,
            compute_bound_every: 1,
            restarts: 10,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<(), EngineError> {
        if self.max_sweeps == 0 {
            return Err(EngineError::Config("max_sweeps must be at least 1"));
        }
        if self.compute_bound_every == 0 {
            return Err(EngineError::Config(
                "compute_bound_every must be at least 1",
            ));
        }
        if !(self.bound_tol >= 0.0) {
            return Err(EngineError::Config("bound_tol must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub state: VariationalState,
    /// (sweep number starting at 1, bound) pairs.
    pub bound_trace: Vec<(usize, f64)>,
    /// True when the run stopped early on `bound_tol`.
    pub converged: bool,
    pub seed: u64,
}

impl FitResult {
    /// The last recorded bound.
    pub fn final_bound(&self) -> f64 {
        self.bound_trace
            .last()
            .map_or(f64::NEG_INFINITY, |&(_, b)| b)
    }
}

/// Runs sweeps from a random initialization seeded by `config.seed`.
pub fn fit(
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    config: &FitConfig,
) -> Result<FitResult, EngineError> {
    config.validate()?;
    let mut dims = hyper.dims();
    dims.samples = data.cols();
    let mut state = init_state(hyper, groups, dims, config.seed)?;
    if data.rows() != dims.observed {
        return Err(EngineError::Dimension {
            what: "data rows",
            expected: dims.observed,
            found: data.rows(),
        });
    }
    let constants = bound::DataConstants::new(data, hyper);
    let mut bound_trace = Vec::new();
    let mut converged = false;
    for n in 1..=config.max_sweeps {
        let record = n % config.compute_bound_every == 0 || n == config.max_sweeps;
        let value = sweep::sweep(
            &mut state,
            data,
            hyper,
            groups,
            record.then_some(&constants),
        )?;
        if let Some(value) = value {
            let previous = bound_trace.last().map(|&(_, b)| b);
            bound_trace.push((n, value));
            if let Some(previous) = previous {
                if config.bound_tol > 0.0
                    && (value - previous) / libm::fabs(previous) < config.bound_tol
                {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(FitResult {
        state,
        bound_trace,
        converged,
        seed: config.seed,
    })
}

/// All restarts of a multi-start fit, sorted by final bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    /// Sorted by final bound, best first; ties keep seed order.
    pub results: Vec<FitResult>,
    /// Index of the best-bound result (always 0 after sorting).
    pub best: usize,
}

impl RestartOutcome {
    pub fn best(&self) -> &FitResult {
        &self.results[self.best]
    }
}

/// Seeds used by [`multi_restart_fit`] for `config.restarts` restarts.
pub fn restart_seeds(config: &FitConfig) -> Vec<u64> {
    (0..config.restarts as u64)
        .map(|k| seeds::derive(config.seed, &[k]))
        .collect()
}

/// Independent fits from seeds derived from `config.seed`.
pub fn multi_restart_fit(
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    config: &FitConfig,
) -> Result<RestartOutcome, EngineError> {
    multi_restart_fit_with_seeds(data, hyper, groups, config, &restart_seeds(config))
}

/// Independent fits, one per seed in `seeds`.
pub fn multi_restart_fit_with_seeds(
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    config: &FitConfig,
    seeds: &[u64],
) -> Result<RestartOutcome, EngineError> {
    if seeds.is_empty() {
        return Err(EngineError::Config("at least one restart is required"));
    }
    let mut results = seeds
        .iter()
        .map(|&seed| {
            fit(
                data,
                hyper,
                groups,
                &FitConfig {
                    seed,
                    ..config.clone()
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| b.final_bound().total_cmp(&a.final_bound()));
    Ok(RestartOutcome { results, best: 0 })
}
