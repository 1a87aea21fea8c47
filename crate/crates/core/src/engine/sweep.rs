use ndarray::{Array2, Axis, Zip};

use super::bound::{bound_terms_with, DataConstants};
use super::state::{check_dims, GammaFactor, VariationalState};
use super::EngineError;
use crate::model::{DataMatrix, GroupAssignment, Hyperparameters};
use crate::numerics::digamma_unchecked;

/// Floor for the reconstruction `exp(L_t)·exp(L_v)` where the data is nonzero.
pub(crate) const DENOMINATOR_FLOOR: f64 = 1e-300;

/// One full coordinate-ascent sweep over q(S), q(T), q(V), q(λ) and, in
/// latent mode, q(z) and q(π).
pub fn update_sweep(
    state: &mut VariationalState,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
) -> Result<(), EngineError> {
    sweep(state, data, hyper, groups, None).map(|_| ())
}

/// Like [`update_sweep`], returning the variational bound evaluated after the
/// q(V) update and before the q(λ) update. At that point every factor is a
/// consistent snapshot, so the value is a valid lower bound.
pub fn update_sweep_with_bound(
    state: &mut VariationalState,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
) -> Result<f64, EngineError> {
    let constants = DataConstants::new(data, hyper);
    sweep(state, data, hyper, groups, Some(&constants)).map(|b| b.unwrap_or(f64::NAN))
}

fn ensure_finite(matrix: &'static str, m: &Array2<f64>, sweep: usize) -> Result<(), EngineError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::NonFinite { matrix, sweep })
    }
}

fn ensure_factor(matrix: &'static str, f: &GammaFactor, sweep: usize) -> Result<(), EngineError> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(EngineError::NonFinite { matrix, sweep })
    }
}

pub(crate) fn sweep(
    state: &mut VariationalState,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    bound: Option<&DataConstants>,
) -> Result<Option<f64>, EngineError> {
    let dims = state.dims();
    check_dims(hyper, groups, dims)?;
    if data.values().dim() != (dims.observed, dims.samples) {
        return Err(EngineError::Dimension {
            what: "data columns",
            expected: dims.samples,
            found: data.cols(),
        });
    }
    let n = state.sweeps + 1;
    let x = data.values();

    // q(S): multinomial allocation of each count over features.
    let w_t = state.dictionary.log_mean.mapv(libm::exp);
    let w_v = state.coefficients.log_mean.mapv(libm::exp);
    let recon = w_t.dot(&w_v);
    let xi = Zip::from(x).and(&recon).map_collect(|&x, &r| {
        if x == 0.0 {
            0.0
        } else {
            x / r.max(DENOMINATOR_FLOOR)
        }
    });
    state.coefficient_counts = &w_v * &w_t.t().dot(&xi);
    state.dictionary_counts = &w_t * &xi.dot(&w_v.t());
    ensure_finite("coefficient counts", &state.coefficient_counts, n)?;
    ensure_finite("dictionary counts", &state.dictionary_counts, n)?;
    state
        .allocation_dictionary
        .assign(&state.dictionary.log_mean);
    state
        .allocation_coefficients
        .assign(&state.coefficients.log_mean);

    // q(T)
    let coefficient_totals = state.coefficients.mean.sum_axis(Axis(1));
    let shape = hyper.dictionary_shape() + &state.dictionary_counts;
    let mut scale = hyper.dictionary_scale().clone();
    for mut row in scale.rows_mut() {
        row.zip_mut_with(&coefficient_totals, |b, &total| {
            *b = 1.0 / (1.0 / *b + total)
        });
    }
    state.dictionary = GammaFactor::from_parameters(shape, scale);
    ensure_factor("dictionary", &state.dictionary, n)?;

    // q(V)
    let dictionary_totals = state.dictionary.mean.sum_axis(Axis(0));
    // Scale is 1 / (Σ_c Δ_τc ⟨λ_ic⟩ + Σ_v ⟨t_vi⟩).
    let mut scale = state.rates.mean.dot(&state.responsibilities.t());
    for (mut row, &total) in scale.rows_mut().into_iter().zip(dictionary_totals.iter()) {
        row.mapv_inplace(|r| 1.0 / (r + total));
    }
    let shape = state.coefficient_counts.mapv(|s| 1.0 + s);
    state.coefficients = GammaFactor::from_parameters(shape, scale);
    ensure_factor("coefficients", &state.coefficients, n)?;

    let value = match bound {
        Some(constants) => {
            let terms = bound_terms_with(state, data, hyper, groups, constants);
            Some(terms.checked_total(n)?)
        }
        None => None,
    };

    // q(λ)
    let group_sizes = state.responsibilities.sum_axis(Axis(0));
    let mut shape = hyper.rate_shape().clone();
    for mut row in shape.rows_mut() {
        row.zip_mut_with(&group_sizes, |a, &count| *a += count);
    }
    let mut scale = state.coefficients.mean.dot(&state.responsibilities);
    scale.zip_mut_with(hyper.rate_scale(), |s, &b| *s = 1.0 / (1.0 / b + *s));
    state.rates = GammaFactor::from_parameters(shape, scale);
    ensure_factor("rates", &state.rates, n)?;

    if groups.is_latent() {
        update_assignments(state, hyper);
        ensure_finite("responsibilities", &state.responsibilities, n)?;
        ensure_finite("log weights", &state.log_weights, n)?;
    }

    state.sweeps = n;
    Ok(value)
}

/// q(z) then q(π).
///
/// ln ρ_τc = Π_τc + Σ_i (⟨ln λ_ic⟩ − ⟨λ_ic⟩⟨v_iτ⟩), Δ_τ = softmax(ln ρ_τ);
/// then Y = U + Δ and Π = Ψ(Y) − Ψ(Σ_c Y).
fn update_assignments(state: &mut VariationalState, hyper: &Hyperparameters) {
    let log_rate_totals = state.rates.log_mean.sum_axis(Axis(0));
    let mut log_rho = state.coefficients.mean.t().dot(&state.rates.mean);
    log_rho.mapv_inplace(|v| -v);
    log_rho += &state.log_weights;
    for mut row in log_rho.rows_mut() {
        row += &log_rate_totals;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| libm::exp(v - max));
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    state.responsibilities = log_rho;

    state.weight_concentration = hyper.dirichlet() + &state.responsibilities;
    for (mut pi, y) in state
        .log_weights
        .rows_mut()
        .into_iter()
        .zip(state.weight_concentration.rows())
    {
        let total = digamma_unchecked(y.sum());
        pi.zip_mut_with(&y, |p, &yc| *p = digamma_unchecked(yc) - total);
    }
}
