mod common;

use common::{random_data, rng};
use jevdpca::jevd::{correction_matrix, JevdState};
use jevdpca::linalg::{orthonormality_defect, polar_factor, sym_eigen_desc};
use jevdpca::nalgebra::{DMatrix, DVector};
use jevdpca::synth::{eig_oracle, random_orthonormal};
use jevdpca::*;

/// `Q diag(1/sqrt(mu)) Q^T` for symmetric positive definite `m`, via the Jacobi oracle.
fn inverse_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = eig_oracle(m).unwrap();
    let scale = DVector::from_iterator(values.len(), values.iter().map(|v| 1.0 / v.sqrt()));
    &vectors * DMatrix::from_diagonal(&scale) * vectors.transpose()
}

/// Squared singular values through one-sided Jacobi orthogonalization of the columns.
fn singular_values_squared(x: &DMatrix<f64>) -> Vec<f64> {
    let mut a = x.clone();
    let d = a.ncols();
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let (u, v) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * u - s * v;
                    a[(i, q)] = s * u + c * v;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut out: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// First-order criterion: off-diagonal energy of `O_s + Lambda_s V - V Lambda_s`.
fn taylor_criterion(state: &JevdState, v: &DMatrix<f64>) -> f64 {
    state
        .diagonals
        .iter()
        .zip(&state.offdiagonals)
        .map(|(lambda, o)| {
            let l = DMatrix::from_diagonal(lambda);
            let mut t = o + &l * v - v * &l;
            t.fill_diagonal(0.0);
            t.norm_squared()
        })
        .sum()
}

#[test]
fn gram_eigenvalues_match_singular_values() {
    for seed in 0..20 {
        let mut g = rng(seed);
        let n = 5 + seed as usize * 7;
        let d = 2 + seed as usize % 8;
        let x = random_data(n, d, &mut g);
        let summary = SpectralSummary::new(&x).unwrap();
        let oracle = singular_values_squared(&x);
        for (a, b) in summary.singular_values_squared.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8 * oracle[0], "{a} vs {b}");
        }
    }
}

#[test]
fn library_eigensolver_matches_jacobi_oracle() {
    for seed in 0..20 {
        let d = 1 + seed as usize % 9;
        let a = random_data(d, d, &mut rng(seed));
        let m = &a + a.transpose();
        let (values, vectors) = sym_eigen_desc(&m);
        let (oracle_values, _) = eig_oracle(&m).unwrap();
        assert!((&values - &oracle_values).amax() <= 1e-10 * m.amax().max(1.0));
        let residual = &m * &vectors - &vectors * DMatrix::from_diagonal(&values);
        assert!(residual.amax() <= 1e-10 * m.amax().max(1.0));
    }
}

#[test]
fn correction_is_stationary_for_taylor_criterion() {
    let h = 1e-5;
    for seed in 0..10 {
        let mut g = rng(seed);
        let d = 2 + seed as usize % 5;
        let k = 2 + seed as usize % 2;
        let q = random_orthonormal(d, &mut g);
        let matrices: Vec<DMatrix<f64>> = (0..k)
            .map(|_| {
                let spectrum: Vec<f64> = (0..d).map(|_| rand::Rng::random_range(&mut g, -3.0..3.0)).collect();
                let noise = random_data(d, d, &mut g) * 0.05;
                common::planted(&q, &spectrum) + &noise + noise.transpose()
            })
            .collect();
        let state = JevdState::new(matrices);
        let config = JevdConfig::default();
        let v = correction_matrix(&state, &config);
        assert!(v.diagonal().iter().all(|&x| x == 0.0));
        let base = taylor_criterion(&state, &v);
        for m in 0..d {
            for n in 0..d {
                if m == n {
                    continue;
                }
                for step in [h, -h] {
                    let mut moved = v.clone();
                    moved[(m, n)] += step;
                    let value = taylor_criterion(&state, &moved);
                    assert!(value >= base - 1e-12 * base.max(1.0), "({m},{n}) {step}: {value} < {base}");
                }
            }
        }
    }
}

#[test]
fn correction_example_and_degenerate_floor() {
    let state = JevdState::new(vec![
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]),
    ]);
    let v = correction_matrix(&state, &JevdConfig::default());
    assert!((v[(0, 1)] + 0.5).abs() < 1e-15);
    let flat = JevdState::new(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0])]);
    assert_eq!(correction_matrix(&flat, &JevdConfig::default()), DMatrix::zeros(2, 2));
}

#[test]
fn polar_factor_matches_inverse_square_root_oracle() {
    for seed in 0..10 {
        let d = 6;
        let u = random_data(d, d, &mut rng(seed)) + DMatrix::identity(d, d) * 4.0;
        let result = orthonormalize(&u).unwrap();
        let oracle = &u * inverse_sqrt(&(u.transpose() * &u));
        assert!((&result.basis - &oracle).amax() <= 1e-10);
        assert!(orthonormality_defect(&result.basis) <= 1e-10);
        assert!((result.distance - (&u - &oracle).norm()).abs() <= 1e-10);
    }
}

#[test]
fn orthonormalize_examples() {
    let q = random_orthonormal(5, &mut rng(1));
    assert!((orthonormalize(&q).unwrap().basis - &q).amax() <= 1e-12);
    let doubled = orthonormalize(&(DMatrix::identity(3, 3) * 2.0)).unwrap();
    assert!((doubled.basis - DMatrix::identity(3, 3)).amax() <= 1e-15);
    assert!((polar_factor(&q) - &q).amax() <= 1e-12);
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    assert!(orthonormalize(&singular).is_err());
}

#[test]
fn pca_eigenvalues_are_scaled_singular_values() {
    let mut g = rng(50);
    let raw = random_data(50, 8, &mut g);
    let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
    let data = GroupedDataset::from_raw(raw, labels, 2, false).unwrap();
    let model = fit_standard_pca(&data, 8).unwrap();
    let oracle = singular_values_squared(data.features());
    for (value, s2) in model.explained_spectrum.iter().zip(&oracle) {
        assert!((value - s2 / 50.0).abs() <= 1e-8 * value.abs().max(1.0));
    }
    assert!(reconstruction_error(data.features(), &model.projection).unwrap() <= 1e-10);
    let lambda = &model.explained_spectrum;
    assert!(lambda.windows(2).all(|w| w[0] >= w[1]));
    for col in model.projection.columns().column_iter() {
        let top = col.iter().cloned().fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        assert!(top > 0.0);
    }
}

#[test]
fn transform_examples() {
    let mut g = rng(3);
    let raw = random_data(20, 4, &mut g);
    let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
    let data = GroupedDataset::from_raw(raw, labels, 2, false).unwrap();
    let model = fit_standard_pca(&data, 2).unwrap();
    let u = model.projection.columns();
    let row = DMatrix::from_row_slice(1, 4, u.column(1).as_slice());
    let coords = model.transform(&row).unwrap();
    assert!((coords[(0, 0)]).abs() < 1e-12 && (coords[(0, 1)] - 1.0).abs() < 1e-12);
    assert_eq!(model.transform(&DMatrix::zeros(1, 4)).unwrap(), DMatrix::zeros(1, 2));
    let x = data.features();
    let z = model.transform(x).unwrap();
    let residual = (x - z * u.transpose()).norm_squared() / x.nrows() as f64;
    let error = reconstruction_error(x, &model.projection).unwrap();
    assert!((residual - error).abs() <= 1e-10);
    assert!(model.transform(&DMatrix::zeros(1, 3)).is_err());
}
