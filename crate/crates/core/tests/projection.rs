mod oracle;

use gsnmf::projection::{nnls, nnls_with_limit, project_matrix, DEFAULT_TOL};
use ndarray::{array, Array1, Array2};
use oracle::nnls_grid::{grid_search_2, kkt_violation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (Array2<f64>, Array1<f64>) {
    let v = rng.random_range(1..=10);
    let i = rng.random_range(1..=6);
    let a = Array2::from_shape_simple_fn((v, i), || {
        if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random::<f64>()
        }
    });
    let b = Array1::from_shape_simple_fn(v, || rng.random::<f64>() * 3.0);
    (a, b)
}

#[test]
fn kkt_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b) = random_instance(&mut rng);
        let s = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
        assert!(s.optimal);
        assert!(s.coefficients.iter().all(|&c| c >= 0.0));
        worst = worst.max(kkt_violation(&a, &b, &s.coefficients));
    }
    assert!(worst <= 1e-8, "worst KKT violation {worst:e}");
}

#[test]
fn two_variable_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut checked = 0;
    while checked < 200 {
        let v = rng.random_range(2..=8);
        let a = Array2::from_shape_simple_fn((v, 2), || rng.random::<f64>());
        // Well-conditioned pairs only: a flat valley would let the grid
        // minimum wander far from the true one at equal objective.
        let g = a.t().dot(&a);
        let (tr, det) = (
            g[[0, 0]] + g[[1, 1]],
            g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]],
        );
        let lambda_min = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        if lambda_min < 0.05 * tr {
            continue;
        }
        let truth = [rng.random::<f64>() * 1.5, rng.random::<f64>() * 1.5];
        let noise = Array1::from_shape_simple_fn(v, || rng.random::<f64>() * 0.6 - 0.3);
        let b = (a.dot(&Array1::from(truth.to_vec())) + noise).mapv(|x: f64| x.max(0.0));
        let s = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
        let upper = truth[0].max(truth[1]) + 1.0;
        let grid = grid_search_2(&a, &b, 1e-3, upper);
        assert!(grid.iter().all(|&g| g < upper), "grid box too small");
        for k in 0..2 {
            assert!(
                (grid[k] - s.coefficients[k]).abs() <= 2e-3,
                "{grid:?} vs {:?}",
                s.coefficients
            );
        }
        checked += 1;
    }
}

#[test]
fn residual_is_monotone_in_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..200 {
        let (a, b) = random_instance(&mut rng);
        let mut previous = b.dot(&b).sqrt();
        for cap in 0..=3 * a.ncols() {
            let s = nnls_with_limit(a.view(), b.view(), DEFAULT_TOL, cap).unwrap();
            assert!(s.residual_norm <= previous + 1e-12);
            previous = s.residual_norm;
        }
    }
}

#[test]
fn projecting_the_dictionary_onto_itself() {
    let d = array![
        [1.0, 0.0, 0.5],
        [0.0, 2.0, 0.5],
        [1.0, 1.0, 0.0],
        [0.0, 0.0, 3.0]
    ];
    let p = project_matrix(d.view(), d.view()).unwrap();
    let recon = d.dot(&p.coefficients);
    assert!((recon - &d).iter().all(|r| r.abs() < 1e-12));
    assert!(p.non_optimal_columns.is_empty());
}

#[test]
fn zero_samples_and_cone_members() {
    let d = array![[2.0], [1.0], [4.0]];
    let samples = array![[0.0, 6.0], [0.0, 3.0], [0.0, 12.0]];
    let p = project_matrix(d.view(), samples.view()).unwrap();
    assert_eq!(p.coefficients[[0, 0]], 0.0);
    assert!((p.coefficients[[0, 1]] - 3.0).abs() < 1e-14);
}

proptest! {
    #[test]
    fn residual_never_exceeds_target_norm(
        a in proptest::collection::vec(0.0f64..1.0, 12),
        b in proptest::collection::vec(0.0f64..5.0, 4),
    ) {
        let a = Array2::from_shape_vec((4, 3), a).unwrap();
        let b = Array1::from(b);
        let s = nnls(a.view(), b.view(), DEFAULT_TOL).unwrap();
        prop_assert!(s.residual_norm <= b.dot(&b).sqrt() + 1e-12);
        let r = &b - &a.dot(&Array1::from(s.coefficients.clone()));
        prop_assert!((r.dot(&r).sqrt() - s.residual_norm).abs() <= 1e-12);
    }
}
