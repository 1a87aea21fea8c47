use ndarray::{Array2, Axis};

use super::state::{check_dims, VariationalState};
use super::sweep::DENOMINATOR_FLOOR;
use super::EngineError;
use crate::model::{DataMatrix, GroupAssignment, Hyperparameters};
use crate::numerics::{gamma_entropy_from_log_mean, ln_gamma_unchecked};

/// The variational bound split by the factor each term belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// ⟨ln p(X|S)⟩ + ⟨ln p(S|T,V)⟩ + H[q(S)].
    pub allocation: f64,
    /// ⟨ln p(T)⟩ + H[q(T)].
    pub dictionary: f64,
    /// ⟨ln p(V|λ,z)⟩ + H[q(V)].
    pub coefficients: f64,
    /// ⟨ln p(λ)⟩ + H[q(λ)].
    pub rates: f64,
    /// Latent mode: ⟨ln p(z|π)⟩ + H[q(z)] + ⟨ln p(π)⟩ + H[q(π)]; zero otherwise.
    pub assignments: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.allocation + self.dictionary + self.coefficients + self.rates + self.assignments
    }

    pub(crate) fn checked_total(&self, sweep: usize) -> Result<f64, EngineError> {
        let named = [
            ("allocation", self.allocation),
            ("dictionary", self.dictionary),
            ("coefficients", self.coefficients),
            ("rates", self.rates),
            ("assignments", self.assignments),
        ];
        for (term, value) in named {
            if !value.is_finite() {
                return Err(EngineError::NonFiniteBound { term, sweep });
            }
        }
        Ok(self.total())
    }
}

// Sums run over `iter()`, i.e. in logical row-major order, so their rounding
// does not depend on the memory layout of intermediate products.

/// Parts of the bound that depend only on data and hyperparameters.
#[derive(Debug, Clone)]
pub(crate) struct DataConstants {
    ln_factorials: f64,
    dictionary_prior: f64,
    rate_prior: f64,
    dirichlet_prior: f64,
}

fn gamma_normalizers(shape: &Array2<f64>, scale: &Array2<f64>) -> f64 {
    shape.iter().zip(scale.iter()).fold(0.0, |acc, (&a, &b)| {
        acc - a * libm::log(b) - ln_gamma_unchecked(a)
    })
}

impl DataConstants {
    pub(crate) fn new(data: &DataMatrix, hyper: &Hyperparameters) -> Self {
        let ln_factorials = data
            .values()
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| ln_gamma_unchecked(x + 1.0))
            .sum();
        let dirichlet_prior = hyper
            .dirichlet()
            .rows()
            .into_iter()
            .map(|u| {
                ln_gamma_unchecked(u.sum())
                    - u.iter().map(|&uc| ln_gamma_unchecked(uc)).sum::<f64>()
            })
            .sum();
        Self {
            ln_factorials,
            dictionary_prior: gamma_normalizers(hyper.dictionary_shape(), hyper.dictionary_scale()),
            rate_prior: gamma_normalizers(hyper.rate_shape(), hyper.rate_scale()),
            dirichlet_prior,
        }
    }
}

fn entropy_sum(factor: &super::state::GammaFactor) -> f64 {
    factor
        .shape
        .iter()
        .zip(factor.scale.iter())
        .zip(factor.log_mean.iter())
        .fold(0.0, |acc, ((&a, &b), &l)| {
            acc + gamma_entropy_from_log_mean(a, b, l)
        })
}

/// Σ over a gamma factor of `⟨ln Gamma(x | a, b)⟩` without the normalizer
/// plus the entropy of the factor.
fn gamma_prior_and_entropy(
    factor: &super::state::GammaFactor,
    prior_shape: &Array2<f64>,
    prior_scale: &Array2<f64>,
) -> f64 {
    let entropy = entropy_sum(factor);
    let prior = prior_shape
        .iter()
        .zip(prior_scale.iter())
        .zip(factor.mean.iter().zip(factor.log_mean.iter()))
        .fold(0.0, |acc, ((&a, &b), (&mean, &log_mean))| {
            acc - mean / b + (a - 1.0) * log_mean
        });
    entropy + prior
}

pub(crate) fn bound_terms_with(
    state: &VariationalState,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    constants: &DataConstants,
) -> BoundTerms {
    let x = data.values();

    // q(S) allocates with p_i ∝ w_d[v,i] w_c[i,τ]. Combined with the Poisson
    // likelihood and the delta constraint, the per-cell contribution is
    //   x Σ_i p_i (L_t + L_v − ln w_d − ln w_c) + x ln Σ_i w_d w_c
    //   − Σ_i E_t E_v − ln Γ(x + 1).
    let w_d = state.allocation_dictionary.mapv(libm::exp);
    let w_c = state.allocation_coefficients.mapv(libm::exp);
    let recon = w_d.dot(&w_c);
    let d_shift = (&state.dictionary.log_mean - &state.allocation_dictionary) * &w_d;
    let c_shift = (&state.coefficients.log_mean - &state.allocation_coefficients) * &w_c;
    let shift = d_shift.dot(&w_c) + w_d.dot(&c_shift);
    let weighted = x
        .iter()
        .zip(recon.iter())
        .zip(shift.iter())
        .fold(0.0, |acc, ((&x, &r), &s)| {
            if x == 0.0 {
                acc
            } else {
                let r = r.max(DENOMINATOR_FLOOR);
                acc + x * (s / r + libm::log(r))
            }
        });
    let mass: f64 = state
        .dictionary
        .mean
        .sum_axis(Axis(0))
        .iter()
        .zip(state.coefficients.mean.sum_axis(Axis(1)).iter())
        .map(|(a, b)| a * b)
        .sum();
    let allocation = weighted - mass - constants.ln_factorials;

    let dictionary = gamma_prior_and_entropy(
        &state.dictionary,
        hyper.dictionary_shape(),
        hyper.dictionary_scale(),
    ) + constants.dictionary_prior;

    // ⟨ln Exponential(v | λ_{z})⟩ = Σ_c Δ_τc (⟨ln λ_ic⟩ − ⟨λ_ic⟩⟨v_iτ⟩).
    let log_rate = state.rates.log_mean.dot(&state.responsibilities.t());
    let rate = state.rates.mean.dot(&state.responsibilities.t());
    let coefficients = log_rate
        .iter()
        .zip(rate.iter())
        .zip(state.coefficients.mean.iter())
        .fold(0.0, |acc, ((&l, &r), &v)| acc + l - r * v)
        + entropy_sum(&state.coefficients);

    let rates = gamma_prior_and_entropy(&state.rates, hyper.rate_shape(), hyper.rate_scale())
        + constants.rate_prior;

    let assignments = if groups.is_latent() {
        assignment_terms(state, hyper) + constants.dirichlet_prior
    } else {
        0.0
    };

    BoundTerms {
        allocation,
        dictionary,
        coefficients,
        rates,
        assignments,
    }
}

/// Discrete and Dirichlet terms. The Dirichlet entropy uses
/// Ψ(Y_c) = Π_c + Ψ(Σ Y), which removes its digamma terms entirely.
fn assignment_terms(state: &VariationalState, hyper: &Hyperparameters) -> f64 {
    let mut total = 0.0;
    let rows = state
        .responsibilities
        .rows()
        .into_iter()
        .zip(state.log_weights.rows())
        .zip(state.weight_concentration.rows())
        .zip(hyper.dirichlet().rows());
    for (((delta, pi), y), u) in rows {
        total -= ln_gamma_unchecked(y.sum());
        for (((&d, &p), &yc), &uc) in delta.iter().zip(pi.iter()).zip(y.iter()).zip(u.iter()) {
            total += d * p + (uc - 1.0) * p - (yc - 1.0) * p + ln_gamma_unchecked(yc);
            if d > 0.0 {
                total -= d * libm::log(d);
            }
        }
    }
    total
}

/// All bound terms for the factors currently held in `state`.
pub fn bound_terms(
    state: &VariationalState,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
) -> Result<BoundTerms, EngineError> {
    let dims = state.dims();
    check_dims(hyper, groups, dims)?;
    if data.values().dim() != (dims.observed, dims.samples) {
        return Err(EngineError::Dimension {
            what: "data columns",
            expected: dims.samples,
            found: data.cols(),
        });
    }
    Ok(bound_terms_with(
        state,
        data,
        hyper,
        groups,
        &DataConstants::new(data, hyper),
    ))
}

/// The variational lower bound on ln p(X | θ) for the current factors.
pub fn variational_bound(
    state: &VariationalState,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
) -> Result<f64, EngineError> {
    bound_terms(state, data, hyper, groups)?.checked_total(state.sweeps)
}
