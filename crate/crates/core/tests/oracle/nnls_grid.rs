//! Brute-force references for nonnegative least squares.

use ndarray::{Array1, Array2};

/// Minimizes ‖b − A v‖² for a two-column A over the grid
/// {0, step, 2·step, …}² ∩ [0, upper]² by exhaustive search.
pub fn grid_search_2(a: &Array2<f64>, b: &Array1<f64>, step: f64, upper: f64) -> [f64; 2] {
    assert_eq!(a.ncols(), 2);
    // ‖b − A v‖² = vᵀ G v − 2 cᵀ v + bᵀ b
    let g = a.t().dot(a);
    let c = a.t().dot(b);
    let n = (upper / step).round() as usize;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..=n {
        let v0 = i as f64 * step;
        let base = g[[0, 0]] * v0 * v0 - 2.0 * c[0] * v0;
        let cross = 2.0 * g[[0, 1]] * v0 - 2.0 * c[1];
        for j in 0..=n {
            let v1 = j as f64 * step;
            let f = base + v1 * (g[[1, 1]] * v1 + cross);
            if f < best.0 {
                best = (f, [v0, v1]);
            }
        }
    }
    best.1
}

/// Largest violation of the optimality conditions of min ½‖b − A v‖², v ≥ 0:
/// |∇_i| for v_i > 0 and max(0, −∇_i) for v_i = 0.
pub fn kkt_violation(a: &Array2<f64>, b: &Array1<f64>, v: &[f64]) -> f64 {
    let v = Array1::from(v.to_vec());
    let grad = a.t().dot(&(a.dot(&v) - b));
    grad.iter()
        .zip(v.iter())
        .map(|(&g, &vi)| if vi > 0.0 { g.abs() } else { (-g).max(0.0) })
        .fold(0.0, f64::max)
}
