//! Marginal likelihood of the single-entry model by numerical integration.
//!
//! With one observed dimension, one feature, one sample and one group, and
//! every prior parameter equal to 1:
//!   t ~ Gamma(1, 1), λ ~ Gamma(1, 1), v | λ ~ Exp(λ), x | t, v ~ Poisson(t v).
//! Integrating λ out gives the Lomax density p(v) = (1 + v)^-2, leaving a
//! 2-D integral over (t, v). It is evaluated by the trapezoid rule after the
//! substitution t = e^a, v = e^b, which turns both tails into exponentially
//! decaying ones; the rule then converges geometrically in the step size.

fn ln_factorial(x: u32) -> f64 {
    (1..=x).map(|k| (k as f64).ln()).sum()
}

/// log p(x) by trapezoid quadrature on [−L, L]² in (ln t, ln v) with step h.
pub fn log_marginal(x: u32, h: f64, half_width: f64) -> f64 {
    let n = (2.0 * half_width / h).round() as i64;
    let xf = x as f64;
    let lf = ln_factorial(x);
    let mut sum = 0.0;
    for i in 0..=n {
        let a = -half_width + i as f64 * h;
        let t = a.exp();
        let wi = if i == 0 || i == n { 0.5 } else { 1.0 };
        let mut row = 0.0;
        for j in 0..=n {
            let b = -half_width + j as f64 * h;
            let v = b.exp();
            let wj = if j == 0 || j == n { 0.5 } else { 1.0 };
            // Poisson(x | t v) · e^-t · (1 + v)^-2 · Jacobian t v.
            let log_f = xf * (a + b) - t * v - lf - t - 2.0 * v.ln_1p() + a + b;
            row += wj * log_f.exp();
        }
        sum += wi * row;
    }
    (sum * h * h).ln()
}

/// The same integral in closed form: p(x) = B(x + 1, 2) = 1 / ((x + 1)(x + 2)).
pub fn log_marginal_closed_form(x: u32) -> f64 {
    let xf = x as f64;
    -((xf + 1.0) * (xf + 2.0)).ln()
}

/// Quadrature value and an error estimate from halving the step.
pub fn log_marginal_with_error(x: u32) -> (f64, f64) {
    let fine = log_marginal(x, 0.05, 40.0);
    let coarse = log_marginal(x, 0.1, 40.0);
    (fine, (fine - coarse).abs())
}
