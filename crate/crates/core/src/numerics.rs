//! Special functions and closed-form moments of the distributions used by the
//! model (gamma, multinomial, Dirichlet).
//!
//! Every function here is pure. Transcendental primitives come from `libm` so
//! results are identical with and without `std`.

use alloc::vec::Vec;

use libm::{log, log1p};
use thiserror::Error;

/// Errors raised by the special functions and moment formulas.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("{function} is undefined at {value}")]
    Domain { function: &'static str, value: f64 },
    #[error("probability vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
}

#[allow(clippy::excessive_precision)]
const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_6;
#[allow(clippy::excessive_precision)]
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_741_8;

/// ζ(k) − 1 for k = 2, 3, …, 31.
#[allow(clippy::excessive_precision)]
const ZETA_MINUS_ONE: [f64; 30] = [
    0.644_934_066_848_226_436_47,
    0.202_056_903_159_594_285_4,
    0.082_323_233_711_138_191_516,
    0.036_927_755_143_369_926_331,
    0.017_343_061_984_449_139_715,
    0.008_349_277_381_922_826_839_8,
    0.004_077_356_197_944_339_378_7,
    0.002_008_392_826_082_214_417_9,
    0.000_994_575_127_818_085_337_15,
    0.000_494_188_604_119_464_558_7,
    0.000_246_086_553_308_048_298_64,
    0.000_122_713_347_578_489_146_75,
    6.124_813_505_870_482_925_9e-5,
    3.058_823_630_702_049_355_2e-5,
    1.528_225_940_865_187_173_3e-5,
    7.637_197_637_899_762_273_6e-6,
    3.817_293_264_999_839_856_5e-6,
    1.908_212_716_553_938_925_7e-6,
    9.539_620_338_727_961_131_5e-7,
    4.769_329_867_878_064_631_2e-7,
    2.384_505_027_277_329_9e-7,
    1.192_199_259_653_110_730_7e-7,
    5.960_818_905_125_947_961_2e-8,
    2.980_350_351_465_228_018_6e-8,
    1.490_155_482_836_504_123_5e-8,
    7.450_711_789_835_429_492e-9,
    3.725_334_024_788_457_054_8e-9,
    1.862_659_723_513_049_006_4e-9,
    9.313_274_324_196_681_828_7e-10,
    4.656_629_065_033_784_073e-10,
];

/// B_2k / (2k (2k − 1)) for k = 1..=8, the Stirling series coefficients.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// B_2k / (2k) for k = 1..=8, the digamma asymptotic coefficients.
const DIGAMMA_ASYMPTOTIC: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

fn check_positive(function: &'static str, x: f64) -> Result<(), NumericsError> {
    // NaN fails this comparison too.
    if x > 0.0 {
        Ok(())
    } else {
        Err(NumericsError::Domain { function, value: x })
    }
}

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64, NumericsError> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

/// Digamma function Ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64, NumericsError> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

/// ln Γ(1 + z) for |z| ≤ 1/2 via the zeta series, with the slowly converging
/// part summed in closed form as z − ln(1 + z).
fn ln_gamma_1p(z: f64) -> f64 {
    let mut tail = 0.0;
    let mut power = -z;
    for (k, zeta) in ZETA_MINUS_ONE.iter().enumerate() {
        power *= -z;
        tail += zeta * power / (k + 2) as f64;
    }
    -EULER_GAMMA * z + (z - log1p(z)) + tail
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for c in STIRLING.iter().rev() {
        series = series * inv2 + c;
    }
    (x - 0.5) * log(x) - x + HALF_LN_TWO_PI + series * inv
}

/// `ln_gamma` without the domain check; callers guarantee `x > 0`.
pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x >= ASYMPTOTIC_THRESHOLD {
        stirling(x)
    } else if x < 0.5 {
        ln_gamma_1p(x) - log(x)
    } else if x <= 1.5 {
        ln_gamma_1p(x - 1.0)
    } else if x <= 2.5 {
        log1p(x - 2.0) + ln_gamma_1p(x - 2.0)
    } else {
        // Shift down into (1.5, 2.5]; every factor is > 1 so nothing cancels.
        let mut y = x;
        let mut product = 1.0;
        while y > 2.5 {
            y -= 1.0;
            product *= y;
        }
        log1p(y - 2.0) + ln_gamma_1p(y - 2.0) + log(product)
    }
}

/// `digamma` without the domain check; callers guarantee `x > 0`.
pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut y = x;
    let mut shift = 0.0;
    while y < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / y;
        y += 1.0;
    }
    let inv2 = 1.0 / (y * y);
    let mut series = 0.0;
    for c in DIGAMMA_ASYMPTOTIC.iter().rev() {
        series = series * inv2 + c;
    }
    log(y) - 0.5 / y - series * inv2 - shift
}

/// Mean, log-mean and differential entropy of a gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMoments {
    pub mean: f64,
    pub log_mean: f64,
    pub entropy: f64,
}

/// Moments of Gamma(shape `a`, scale `b`).
pub fn gamma_expectations(a: f64, b: f64) -> Result<GammaMoments, NumericsError> {
    check_positive("gamma shape", a)?;
    check_positive("gamma scale", b)?;
    let psi = digamma_unchecked(a);
    let ln_b = log(b);
    Ok(GammaMoments {
        mean: a * b,
        log_mean: psi + ln_b,
        entropy: -(a - 1.0) * psi + ln_b + a + ln_gamma_unchecked(a),
    })
}

/// Gamma entropy with Ψ(a) recovered from a stored log-mean, avoiding a
/// digamma evaluation: Ψ(a) = ⟨ln x⟩ − ln b.
pub(crate) fn gamma_entropy_from_log_mean(shape: f64, scale: f64, log_mean: f64) -> f64 {
    let ln_b = log(scale);
    -(shape - 1.0) * (log_mean - ln_b) + ln_b + shape + ln_gamma_unchecked(shape)
}

/// ⟨ln Gamma(x | a, b)⟩ under a distribution with the given mean and log-mean.
pub fn gamma_expected_log_density(a: f64, b: f64, mean: f64, log_mean: f64) -> f64 {
    -mean / b + (a - 1.0) * log_mean - a * log(b) - ln_gamma_unchecked(a)
}

/// Expected multinomial counts `total · probs`.
///
/// `probs` must sum to one within 1e-12; the result is renormalized so that
/// its entries add back up to `total`.
pub fn multinomial_expected_counts(total: f64, probs: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if !(total >= 0.0) || !total.is_finite() {
        return Err(NumericsError::Domain {
            function: "multinomial total",
            value: total,
        });
    }
    if let Some(&p) = probs.iter().find(|p| !(**p >= 0.0)) {
        return Err(NumericsError::Domain {
            function: "multinomial probability",
            value: p,
        });
    }
    let sum: f64 = probs.iter().sum();
    if !((sum - 1.0).abs() <= 1e-12) {
        return Err(NumericsError::NotNormalized { sum });
    }
    let mut counts: Vec<f64> = probs.iter().map(|p| total * (p / sum)).collect();
    if let Some(largest) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    {
        let rest: f64 = counts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != largest)
            .map(|(_, c)| c)
            .sum();
        counts[largest] = (total - rest).max(0.0);
    }
    Ok(counts)
}

/// ⟨ln x_c⟩ = Ψ(u_c) − Ψ(Σ u) under Dirichlet(u).
pub fn dirichlet_expected_log(u: &[f64]) -> Result<Vec<f64>, NumericsError> {
    for &uc in u {
        check_positive("dirichlet parameter", uc)?;
    }
    let total = digamma_unchecked(u.iter().sum());
    Ok(u.iter().map(|&uc| digamma_unchecked(uc) - total).collect())
}

/// Differential entropy of Dirichlet(u).
pub fn dirichlet_entropy(u: &[f64]) -> f64 {
    let total: f64 = u.iter().sum();
    let k = u.len() as f64;
    let mut h = -ln_gamma_unchecked(total) + (total - k) * digamma_unchecked(total);
    for &uc in u {
        h += ln_gamma_unchecked(uc) - (uc - 1.0) * digamma_unchecked(uc);
    }
    h
}

/// Solves ln a − Ψ(a) = `gap` for the gamma shape `a`.
///
/// A gamma distribution with mean m and shape a has log-mean
/// Ψ(a) + ln(m / a), so this is the shape whose Jensen gap ln m − ⟨ln x⟩
/// equals `gap`. The left side decreases monotonically from +∞ to 0.
pub(crate) fn shape_for_jensen_gap(gap: f64) -> f64 {
    debug_assert!(gap > 0.0);
    let f = |a: f64| log(a) - digamma_unchecked(a) - gap;
    // ln a − Ψ(a) ≈ 1/(2a) for large a.
    let (mut lo, mut hi) = (1e-8, 1.0 / gap + 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
