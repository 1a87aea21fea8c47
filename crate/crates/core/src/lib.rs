//! Variational Bayesian nonnegative matrix factorization with group-sparse
//! priors on the coefficient matrix.
//!
//! A nonnegative `V × T` matrix `X` is modelled as Poisson counts with mean
//! `T · V`, where the dictionary `T` carries gamma priors and each coefficient
//! `v_iτ` is exponential with a rate `λ_ic` selected by the group `c` of sample
//! `τ`. Gamma hyperpriors on the rates make some features prevalent in some
//! groups only. When groups are class labels, the learned dictionaries are
//! label driven.
//!
//! Crate layout:
//!
//! * [`numerics`]: digamma, log-gamma and closed-form moments.
//! * [`model`]: data, hyperparameters, the group hyperprior builder and the
//!   generative sampler.
//! * [`engine`]: mean-field coordinate ascent, the variational bound and the
//!   fit / restart drivers.
//! * [`projection`]: active-set nonnegative least squares.
//! * [`pipeline`]: nearest-neighbour classification, stratified
//!   crossvalidation, parameter sweeps and prevalence diagnostics.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod engine;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod projection;

mod seeds;

pub use engine::{
    fit, init_state, multi_restart_fit, update_sweep, variational_bound, EngineError, FitConfig,
    FitResult, RestartOutcome, VariationalState,
};
pub use model::{
    build_group_hyperprior, default_hyperparameters, sample_model, DataMatrix, GroundTruth,
    GroupAssignment, GroupMode, Hyperparameters, ModelError,
};
pub use projection::{nnls, project_matrix, NnlsSolution, Projection};
