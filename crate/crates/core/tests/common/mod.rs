#![allow(dead_code)]

use jevdpca::nalgebra::{DMatrix, DVector};
use jevdpca::synth::{gaussian_matrix, random_orthonormal, realize_gram_rows, rng_from_seed};
use jevdpca::{GroupedDataset, ProjectionMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_from_seed(seed)
}

/// First `r` columns of a random orthonormal `d x d` matrix.
pub fn random_projection(d: usize, r: usize, rng: &mut ChaCha8Rng) -> ProjectionMatrix {
    let q = random_orthonormal(d, rng);
    ProjectionMatrix::new(q.columns(0, r).into_owned()).unwrap()
}

/// Gaussian rows with per-column scales drawn from `[0.2, 3)`.
pub fn random_data(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = gaussian_matrix(n, d, rng);
    for mut col in x.column_iter_mut() {
        col *= rng.random_range(0.2..3.0);
    }
    x
}

/// Random raw data split into `k` groups of `per_group` rows, with a group-dependent offset.
pub fn random_grouped(per_group: usize, d: usize, k: usize, rng: &mut ChaCha8Rng) -> GroupedDataset {
    let mut raw = random_data(per_group * k, d, rng);
    let labels: Vec<usize> = (0..k).flat_map(|s| std::iter::repeat_n(s, per_group)).collect();
    for s in 0..k {
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..per_group {
            for j in 0..d {
                raw[(s * per_group + i, j)] += shift[j];
            }
        }
    }
    GroupedDataset::from_raw(raw, labels, k, false).unwrap()
}

/// `Q diag(spectrum) Q^T`.
pub fn planted(q: &DMatrix<f64>, spectrum: &[f64]) -> DMatrix<f64> {
    let mut m = q * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * q.transpose();
    m.fill_lower_triangle_with_upper_triangle();
    m
}

/// Grouped dataset whose group Gram matrices are exactly `Q diag(spectrum_s) Q^T`.
pub fn exact_shared_basis_data(q: &DMatrix<f64>, spectra: &[Vec<f64>], repeats: usize) -> GroupedDataset {
    let grams: Vec<DMatrix<f64>> = spectra.iter().map(|s| planted(q, s)).collect();
    let (raw, labels) = realize_gram_rows(&grams, repeats);
    GroupedDataset::from_raw(raw, labels, spectra.len(), false).unwrap()
}

/// Index of the column of `basis` best aligned with `v`, and the angle to it.
pub fn best_match(basis: &DMatrix<f64>, v: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..basis.ncols() {
        let c = basis.column(j).normalize();
        let u = v.column(0).normalize();
        let sin = (&u - &c * c.dot(&u)).norm().min(1.0);
        let angle = sin.asin();
        if angle < best.1 {
            best = (j, angle);
        }
    }
    best
}

/// Largest over planted columns of the angle to the closest recovered column.
pub fn worst_column_angle(planted_basis: &DMatrix<f64>, recovered: &DMatrix<f64>) -> f64 {
    (0..planted_basis.ncols())
        .map(|i| best_match(recovered, &planted_basis.columns(i, 1).into_owned()).1)
        .fold(0.0, f64::max)
}
