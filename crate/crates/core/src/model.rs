//! Data, hyperparameters and the generative model.
//!
//! Group indices are 0-based throughout the library (`0..groups`); the CLI
//! translates to and from the 1-based labels used in files.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what} is empty")]
    Empty { what: &'static str },
    #[error("{what} has a negative entry {value} at ({row}, {col})")]
    Negative {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{what} has a non-positive entry {value} at ({row}, {col})")]
    NonPositive {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{what} has a non-finite entry at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("group index {index} of sample {sample} is outside 0..{groups}")]
    GroupOutOfRange {
        sample: usize,
        index: usize,
        groups: usize,
    },
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("sampling failed: {0}")]
    Sampling(&'static str),
}

/// Nonnegative `V × T` observation matrix; one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::Empty {
                what: "data matrix",
            });
        }
        for ((row, col), &value) in values.indexed_iter() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite {
                    what: "data matrix",
                    row,
                    col,
                });
            }
            if value < 0.0 {
                return Err(ModelError::Negative {
                    what: "data matrix",
                    row,
                    col,
                    value,
                });
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// Number of observed dimensions `V`.
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of samples `T`.
    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Keeps the given sample columns, in order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), columns),
        }
    }
}

/// How sample-to-group assignments enter the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupMode {
    /// Every sample's group is known.
    Observed(Vec<usize>),
    /// Groups are inferred with Dirichlet-categorical priors.
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    mode: GroupMode,
    groups: usize,
}

impl GroupAssignment {
    pub fn observed(labels: Vec<usize>, groups: usize) -> Result<Self, ModelError> {
        if groups == 0 {
            return Err(ModelError::Parameter {
                name: "groups",
                value: 0.0,
            });
        }
        if labels.is_empty() {
            return Err(ModelError::Empty {
                what: "group labels",
            });
        }
        if let Some((sample, &index)) = labels.iter().enumerate().find(|(_, &z)| z >= groups) {
            return Err(ModelError::GroupOutOfRange {
                sample,
                index,
                groups,
            });
        }
        Ok(Self {
            mode: GroupMode::Observed(labels),
            groups,
        })
    }

    pub fn latent(groups: usize) -> Result<Self, ModelError> {
        if groups == 0 {
            return Err(ModelError::Parameter {
                name: "groups",
                value: 0.0,
            });
        }
        Ok(Self {
            mode: GroupMode::Latent,
            groups,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn mode(&self) -> &GroupMode {
        &self.mode
    }

    pub fn is_latent(&self) -> bool {
        matches!(self.mode, GroupMode::Latent)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.mode {
            GroupMode::Observed(z) => Some(z),
            GroupMode::Latent => None,
        }
    }

    /// `T × C` responsibilities: one-hot rows for observed groups, uniform
    /// rows in latent mode.
    pub fn initial_responsibilities(&self, samples: usize) -> Array2<f64> {
        match &self.mode {
            GroupMode::Observed(z) => {
                let mut delta = Array2::zeros((z.len(), self.groups));
                for (tau, &c) in z.iter().enumerate() {
                    delta[[tau, c]] = 1.0;
                }
                delta
            }
            GroupMode::Latent => {
                Array2::from_elem((samples, self.groups), 1.0 / self.groups as f64)
            }
        }
    }
}

/// Problem dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Observed dimensions `V` (rows of the data).
    pub observed: usize,
    /// Dictionary size `I`.
    pub features: usize,
    /// Number of groups `C`.
    pub groups: usize,
    /// Number of samples `T`.
    pub samples: usize,
}

impl Dims {
    pub fn new(observed: usize, features: usize, groups: usize, samples: usize) -> Self {
        Self {
            observed,
            features,
            groups,
            samples,
        }
    }
}

/// Fixed prior parameters. Gamma distributions use (shape, scale).
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    dictionary_shape: Array2<f64>,
    dictionary_scale: Array2<f64>,
    rate_shape: Array2<f64>,
    rate_scale: Array2<f64>,
    dirichlet: Array2<f64>,
}

fn check_positive_matrix(
    what: &'static str,
    m: &Array2<f64>,
    expected: (usize, usize),
) -> Result<(), ModelError> {
    if m.dim() != expected {
        return Err(ModelError::Shape {
            what,
            expected,
            found: m.dim(),
        });
    }
    for ((row, col), &value) in m.indexed_iter() {
        if !value.is_finite() {
            return Err(ModelError::NonFinite { what, row, col });
        }
        if value <= 0.0 {
            return Err(ModelError::NonPositive {
                what,
                row,
                col,
                value,
            });
        }
    }
    Ok(())
}

impl Hyperparameters {
    /// * `dictionary_shape`, `dictionary_scale`: `V × I` gamma prior of `T`.
    /// * `rate_shape`, `rate_scale`: `I × C` gamma prior of the group rates.
    /// * `dirichlet`: `T × C` Dirichlet parameters, used in latent mode.
    pub fn new(
        dictionary_shape: Array2<f64>,
        dictionary_scale: Array2<f64>,
        rate_shape: Array2<f64>,
        rate_scale: Array2<f64>,
        dirichlet: Array2<f64>,
    ) -> Result<Self, ModelError> {
        let (v, i) = dictionary_shape.dim();
        let c = rate_shape.ncols();
        let t = dirichlet.nrows();
        if v == 0 || i == 0 || c == 0 || t == 0 {
            return Err(ModelError::Empty {
                what: "hyperparameters",
            });
        }
        check_positive_matrix("dictionary shape", &dictionary_shape, (v, i))?;
        check_positive_matrix("dictionary scale", &dictionary_scale, (v, i))?;
        check_positive_matrix("rate shape", &rate_shape, (i, c))?;
        check_positive_matrix("rate scale", &rate_scale, (i, c))?;
        check_positive_matrix("dirichlet", &dirichlet, (t, c))?;
        Ok(Self {
            dictionary_shape,
            dictionary_scale,
            rate_shape,
            rate_scale,
            dirichlet,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            observed: self.dictionary_shape.nrows(),
            features: self.dictionary_shape.ncols(),
            groups: self.rate_shape.ncols(),
            samples: self.dirichlet.nrows(),
        }
    }

    pub fn dictionary_shape(&self) -> &Array2<f64> {
        &self.dictionary_shape
    }

    pub fn dictionary_scale(&self) -> &Array2<f64> {
        &self.dictionary_scale
    }

    pub fn rate_shape(&self) -> &Array2<f64> {
        &self.rate_shape
    }

    pub fn rate_scale(&self) -> &Array2<f64> {
        &self.rate_scale
    }

    pub fn dirichlet(&self) -> &Array2<f64> {
        &self.dirichlet
    }

    /// Replaces the Dirichlet parameters, e.g. after selecting a subset of
    /// samples.
    pub fn with_dirichlet(mut self, dirichlet: Array2<f64>) -> Result<Self, ModelError> {
        check_positive_matrix(
            "dirichlet",
            &dirichlet,
            (dirichlet.nrows(), self.rate_shape.ncols()),
        )?;
        if dirichlet.nrows() == 0 {
            return Err(ModelError::Empty { what: "dirichlet" });
        }
        self.dirichlet = dirichlet;
        Ok(self)
    }

    /// Applies a permutation to the dictionary index `i` (`perm[new] = old`).
    pub fn permute_features(&self, perm: &[usize]) -> Self {
        Self {
            dictionary_shape: self.dictionary_shape.select(Axis(1), perm),
            dictionary_scale: self.dictionary_scale.select(Axis(1), perm),
            rate_shape: self.rate_shape.select(Axis(0), perm),
            rate_scale: self.rate_scale.select(Axis(0), perm),
            dirichlet: self.dirichlet.clone(),
        }
    }
}

/// Values of the group hyperprior used by [`default_hyperparameters`].
pub const DEFAULT_A_SMALL: f64 = 32.0;
pub const DEFAULT_A_LARGE: f64 = 256.0;
pub const DEFAULT_B_LAMBDA: f64 = 1e6;
/// Dictionary prior shape and scale used by [`default_hyperparameters`].
pub const DEFAULT_A_T: f64 = 0.6;
pub const DEFAULT_B_T: f64 = 20.0;

fn check_parameter(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Parameter { name, value })
    }
}

/// Block-structured rate prior.
///
/// Feature block `g` (rows `g·per_group .. (g+1)·per_group`) gets shape
/// `a_small` in column `g` and `a_large` elsewhere. A small shape lets the
/// rate `λ_ig` be small, so features of block `g` can carry large
/// coefficients in samples of group `g` while being shrunk elsewhere. All
/// scales equal `b`.
pub fn build_group_hyperprior(
    groups: usize,
    per_group: usize,
    a_small: f64,
    a_large: f64,
    b: f64,
) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
    if groups == 0 {
        return Err(ModelError::Parameter {
            name: "groups",
            value: 0.0,
        });
    }
    if per_group == 0 {
        return Err(ModelError::Parameter {
            name: "per_group",
            value: 0.0,
        });
    }
    check_parameter("a_small", a_small)?;
    check_parameter("a_large", a_large)?;
    check_parameter("b", b)?;
    if a_small > a_large {
        return Err(ModelError::Parameter {
            name: "a_small (must not exceed a_large)",
            value: a_small,
        });
    }
    let features = groups * per_group;
    let shape = Array2::from_shape_fn((features, groups), |(i, c)| {
        if i / per_group == c {
            a_small
        } else {
            a_large
        }
    });
    Ok((shape, Array2::from_elem((features, groups), b)))
}

/// Default priors: dictionary Gamma(0.6, 20), rate prior from
/// [`build_group_hyperprior`] with shapes 32 / 256 and scale 1e6, and a flat
/// Dirichlet.
///
/// When `features` is not a multiple of `groups`, feature `i` is assigned to
/// block `⌊i·C/I⌋`, which reduces to contiguous equal blocks otherwise.
pub fn default_hyperparameters(dims: Dims) -> Result<Hyperparameters, ModelError> {
    let Dims {
        observed,
        features,
        groups,
        samples,
    } = dims;
    if observed == 0 || features == 0 || groups == 0 || samples == 0 {
        return Err(ModelError::Empty { what: "dimensions" });
    }
    let rate_shape = Array2::from_shape_fn((features, groups), |(i, c)| {
        if i * groups / features == c {
            DEFAULT_A_SMALL
        } else {
            DEFAULT_A_LARGE
        }
    });
    Hyperparameters::new(
        Array2::from_elem((observed, features), DEFAULT_A_T),
        Array2::from_elem((observed, features), DEFAULT_B_T),
        rate_shape,
        Array2::from_elem((features, groups), DEFAULT_B_LAMBDA),
        Array2::ones((samples, groups)),
    )
}

/// Latent variables drawn by [`sample_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `V × I`
    pub dictionary: Array2<f64>,
    /// `I × T`
    pub coefficients: Array2<f64>,
    /// `I × C` exponential rates λ.
    pub rates: Array2<f64>,
    /// Group of each sample.
    pub labels: Vec<usize>,
}

fn gamma_draw<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> Result<f64, ModelError> {
    Gamma::new(shape, scale)
        .map(|g| g.sample(rng))
        .map_err(|_| ModelError::Sampling("invalid gamma parameters"))
}

fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> Result<f64, ModelError> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    Poisson::new(mean)
        .map(|p| p.sample(rng))
        .map_err(|_| ModelError::Sampling("poisson mean out of range"))
}

/// Draws `(X, ground truth)` from the generative model.
///
/// `t_vi ~ Gamma(a^t, b^t)`, `λ_ic ~ Gamma(a^λ, b^λ)`,
/// `v_iτ ~ Exponential(rate λ_{i,z_τ})` and `x_vτ ~ Poisson(Σ_i t_vi v_iτ)`,
/// which equals the sum of the per-feature Poisson sources in distribution.
/// In latent mode each `z_τ` is first drawn from a Dirichlet-categorical
/// with parameters `U_τ`.
pub fn sample_model(
    hyper: &Hyperparameters,
    groups: &GroupAssignment,
    seed: u64,
) -> Result<(DataMatrix, GroundTruth), ModelError> {
    let dims = hyper.dims();
    if groups.groups() != dims.groups {
        return Err(ModelError::Shape {
            what: "group count",
            expected: (dims.groups, 1),
            found: (groups.groups(), 1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let labels = match groups.mode() {
        GroupMode::Observed(z) => {
            if z.len() != dims.samples {
                return Err(ModelError::Shape {
                    what: "group labels",
                    expected: (dims.samples, 1),
                    found: (z.len(), 1),
                });
            }
            z.clone()
        }
        GroupMode::Latent => {
            let mut z = Vec::with_capacity(dims.samples);
            let mut weights = vec![0.0; dims.groups];
            for row in hyper.dirichlet().rows() {
                for (w, &u) in weights.iter_mut().zip(row.iter()) {
                    *w = gamma_draw(&mut rng, u, 1.0)?;
                }
                let total: f64 = weights.iter().sum();
                let mut target = rng.random::<f64>() * total;
                let mut chosen = dims.groups - 1;
                for (c, &w) in weights.iter().enumerate() {
                    if target < w {
                        chosen = c;
                        break;
                    }
                    target -= w;
                }
                z.push(chosen);
            }
            z
        }
    };

    let mut dictionary = Array2::zeros((dims.observed, dims.features));
    for (t, (&a, &b)) in dictionary.iter_mut().zip(
        hyper
            .dictionary_shape()
            .iter()
            .zip(hyper.dictionary_scale().iter()),
    ) {
        *t = gamma_draw(&mut rng, a, b)?;
    }
    let mut rates = Array2::zeros((dims.features, dims.groups));
    for (lambda, (&a, &b)) in rates
        .iter_mut()
        .zip(hyper.rate_shape().iter().zip(hyper.rate_scale().iter()))
    {
        *lambda = gamma_draw(&mut rng, a, b)?;
    }
    let mut coefficients = Array2::zeros((dims.features, dims.samples));
    for ((i, tau), v) in coefficients.indexed_iter_mut() {
        let rate = rates[[i, labels[tau]]];
        *v = Exp::new(rate)
            .map(|e| e.sample(&mut rng))
            .map_err(|_| ModelError::Sampling("invalid exponential rate"))?;
    }
    let data = sample_counts_with(&dictionary, &coefficients, &mut rng)?;
    Ok((
        data,
        GroundTruth {
            dictionary,
            coefficients,
            rates,
            labels,
        },
    ))
}

/// Draws `x_vτ ~ Poisson((T·V)_vτ)` for fixed factors.
pub fn sample_counts(
    dictionary: &Array2<f64>,
    coefficients: &Array2<f64>,
    seed: u64,
) -> Result<DataMatrix, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_counts_with(dictionary, coefficients, &mut rng)
}

fn sample_counts_with<R: Rng>(
    dictionary: &Array2<f64>,
    coefficients: &Array2<f64>,
    rng: &mut R,
) -> Result<DataMatrix, ModelError> {
    if dictionary.ncols() != coefficients.nrows() {
        return Err(ModelError::Shape {
            what: "coefficients",
            expected: (dictionary.ncols(), coefficients.ncols()),
            found: coefficients.dim(),
        });
    }
    let mean = dictionary.dot(coefficients);
    let mut x = Array2::zeros(mean.dim());
    for (out, &m) in x.iter_mut().zip(mean.iter()) {
        *out = poisson_draw(rng, m)?;
    }
    DataMatrix::new(x)
}
