use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EngineError;
use crate::model::{Dims, GroupAssignment, Hyperparameters};
use crate::numerics::{digamma_unchecked, dirichlet_expected_log, shape_for_jensen_gap};

/// Gap `ln⟨x⟩ − ⟨ln x⟩` of the initial gamma factors.
const INITIAL_JENSEN_GAP: f64 = 0.1;

/// A matrix of independent gamma factors with their sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaFactor {
    pub shape: Array2<f64>,
    pub scale: Array2<f64>,
    /// ⟨x⟩
    pub mean: Array2<f64>,
    /// ⟨ln x⟩
    pub log_mean: Array2<f64>,
}

impl GammaFactor {
    pub(crate) fn from_parameters(shape: Array2<f64>, scale: Array2<f64>) -> Self {
        let mean = &shape * &scale;
        let mut log_mean = scale.mapv(libm::log);
        log_mean.zip_mut_with(&shape, |l, &a| *l += digamma_unchecked(a));
        Self {
            shape,
            scale,
            mean,
            log_mean,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.shape.dim()
    }

    fn permute(&self, axis: Axis, perm: &[usize]) -> Self {
        Self {
            shape: self.shape.select(axis, perm),
            scale: self.scale.select(axis, perm),
            mean: self.mean.select(axis, perm),
            log_mean: self.log_mean.select(axis, perm),
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.log_mean.iter())
            .all(|v| v.is_finite())
    }
}

/// The factorized posterior approximation.
///
/// Shapes: `V` observed dimensions, `I` features, `C` groups, `T` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    /// q(T), `V × I`; `mean` is E_t and `log_mean` is L_t.
    pub dictionary: GammaFactor,
    /// q(V), `I × T`; E_v and L_v.
    pub coefficients: GammaFactor,
    /// q(λ), `I × C`; E_λ and L_λ.
    pub rates: GammaFactor,
    /// Σ_τ ⟨s_viτ⟩, `V × I`.
    pub dictionary_counts: Array2<f64>,
    /// Σ_v ⟨s_viτ⟩, `I × T`.
    pub coefficient_counts: Array2<f64>,
    /// Δ, `T × C` group responsibilities; one-hot rows for observed groups.
    pub responsibilities: Array2<f64>,
    /// Dirichlet parameters of q(π), `T × C`.
    pub weight_concentration: Array2<f64>,
    /// Π = ⟨ln π⟩, `T × C`.
    pub log_weights: Array2<f64>,
    /// q(S) allocates `x_vτ` over features with probabilities proportional to
    /// `exp(allocation_dictionary[v,i] + allocation_coefficients[i,τ])`.
    /// These are the log-means that were current when q(S) was last updated.
    pub allocation_dictionary: Array2<f64>,
    pub allocation_coefficients: Array2<f64>,
    /// Completed sweeps.
    pub sweeps: usize,
}

impl VariationalState {
    pub fn dims(&self) -> Dims {
        let (observed, features) = self.dictionary.dim();
        Dims {
            observed,
            features,
            groups: self.rates.dim().1,
            samples: self.coefficients.dim().1,
        }
    }

    /// Applies a permutation to the dictionary index (`perm[new] = old`).
    pub fn permute_features(&self, perm: &[usize]) -> Self {
        Self {
            dictionary: self.dictionary.permute(Axis(1), perm),
            coefficients: self.coefficients.permute(Axis(0), perm),
            rates: self.rates.permute(Axis(0), perm),
            dictionary_counts: self.dictionary_counts.select(Axis(1), perm),
            coefficient_counts: self.coefficient_counts.select(Axis(0), perm),
            responsibilities: self.responsibilities.clone(),
            weight_concentration: self.weight_concentration.clone(),
            log_weights: self.log_weights.clone(),
            allocation_dictionary: self.allocation_dictionary.select(Axis(1), perm),
            allocation_coefficients: self.allocation_coefficients.select(Axis(0), perm),
            sweeps: self.sweeps,
        }
    }

    /// `E_t · E_v`, the posterior-mean reconstruction of the data.
    pub fn reconstruction(&self) -> Array2<f64> {
        self.dictionary.mean.dot(&self.coefficients.mean)
    }
}

pub(crate) fn check_dims(
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    dims: Dims,
) -> Result<(), EngineError> {
    let hd = hyper.dims();
    let mismatch = |what: &'static str, expected: usize, found: usize| {
        Err(EngineError::Dimension {
            what,
            expected,
            found,
        })
    };
    if hd.observed != dims.observed {
        return mismatch("observed dimensions", dims.observed, hd.observed);
    }
    if hd.features != dims.features {
        return mismatch("features", dims.features, hd.features);
    }
    if hd.groups != dims.groups {
        return mismatch("groups in hyperparameters", dims.groups, hd.groups);
    }
    if groups.groups() != dims.groups {
        return mismatch("groups in assignment", dims.groups, groups.groups());
    }
    if hd.samples != dims.samples {
        return mismatch("samples in dirichlet parameters", dims.samples, hd.samples);
    }
    if let Some(z) = groups.labels() {
        if z.len() != dims.samples {
            return mismatch("samples in group labels", dims.samples, z.len());
        }
    }
    Ok(())
}

/// Random initial state.
///
/// E_t and E_λ are their prior means times independent uniform noise in
/// [0.5, 1.5]. E_v starts at the coefficient mean implied by the prior-mean
/// rates of each sample's initial group mixture, `1 / Σ_c Δ_τc a_ic b_ic`,
/// with the same noise. Each gamma factor gets the shape whose Jensen gap is
/// 0.1, so L = ln E − 0.1. Responsibilities are one-hot (observed) or
/// uniform (latent); Π is the expected log of the Dirichlet prior.
pub fn init_state(
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    dims: Dims,
    seed: u64,
) -> Result<VariationalState, EngineError> {
    check_dims(hyper, groups, dims)?;
    let Dims {
        observed,
        features,
        groups: c,
        samples,
    } = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape0 = shape_for_jensen_gap(INITIAL_JENSEN_GAP);
    let mut noise =
        |n: usize, m: usize| Array2::from_shape_simple_fn((n, m), || rng.random_range(0.5..1.5));

    let factor = |means: Array2<f64>| {
        GammaFactor::from_parameters(Array2::from_elem(means.dim(), shape0), means / shape0)
    };

    let dictionary_mean =
        hyper.dictionary_shape() * hyper.dictionary_scale() * noise(observed, features);
    let responsibilities = groups.initial_responsibilities(samples);
    let prior_rates = hyper.rate_shape() * hyper.rate_scale();
    let coefficient_mean =
        prior_rates.dot(&responsibilities.t()).mapv(|r| 1.0 / r) * noise(features, samples);
    let rate_mean = prior_rates * noise(features, c);

    let dictionary = factor(dictionary_mean);
    let coefficients = factor(coefficient_mean);
    let rates = factor(rate_mean);
    if !(dictionary.is_finite() && coefficients.is_finite() && rates.is_finite()) {
        return Err(EngineError::NonFinite {
            matrix: "initial state",
            sweep: 0,
        });
    }

    let weight_concentration = hyper.dirichlet().clone();
    let mut log_weights = Array2::zeros((samples, c));
    for (mut out, row) in log_weights
        .rows_mut()
        .into_iter()
        .zip(weight_concentration.rows())
    {
        let e = dirichlet_expected_log(&row.to_vec())?;
        out.iter_mut().zip(e).for_each(|(o, v)| *o = v);
    }

    Ok(VariationalState {
        allocation_dictionary: dictionary.log_mean.clone(),
        allocation_coefficients: coefficients.log_mean.clone(),
        dictionary_counts: Array2::zeros((observed, features)),
        coefficient_counts: Array2::zeros((features, samples)),
        dictionary,
        coefficients,
        rates,
        responsibilities,
        weight_concentration,
        log_weights,
        sweeps: 0,
    })
}
