//! Seeded synthetic data with known ground truth, and a Jacobi eigensolver
//! used as an oracle independent of the library's eigen path.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::GroupedDataset;
use crate::error::{Error, Result};
use crate::linalg::{ensure_symmetric, orthonormality_defect, sym_eigen_desc};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Haar-like orthonormal matrix: QR of a Gaussian matrix with `diag(R) > 0`.
pub fn random_orthonormal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Symmetric perturbation with unit Frobenius norm.
fn unit_symmetric_noise(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(d, d, rng);
    let s = (&g + g.transpose()) * 0.5;
    let norm = s.norm();
    s / norm
}

/// Checks that no two indices share the same vector of per-matrix spectrum gaps.
pub fn check_uniqueness(spectra: &[Vec<f64>]) -> Result<()> {
    let d = spectra.first().map_or(0, Vec::len);
    let scale = spectra
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for m in 0..d {
        for n in (m + 1)..d {
            if spectra.iter().all(|l| (l[m] - l[n]).abs() <= 1e-12 * scale) {
                return Err(Error::UniquenessViolated(m, n));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutingFamilySpec {
    pub dimension: usize,
    pub groups: usize,
    /// Drawn from `seed` when absent.
    pub basis: Option<DMatrix<f64>>,
    pub spectra: Vec<Vec<f64>>,
    pub noise_level: f64,
    pub seed: u64,
}

impl CommutingFamilySpec {
    /// Spectra drawn uniformly from `[0.5, 5)` with the given seed; noise-free.
    pub fn random(dimension: usize, groups: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed ^ 0x5eed_5bec);
        let uniform = rand_distr::Uniform::new(0.5, 5.0).expect("valid range");
        let spectra = (0..groups)
            .map(|_| (0..dimension).map(|_| uniform.sample(&mut rng)).collect())
            .collect();
        Self {
            dimension,
            groups,
            basis: None,
            spectra,
            noise_level: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.groups == 0 {
            return Err(Error::InvalidConfig("dimension and group count must be positive".into()));
        }
        if self.spectra.len() != self.groups || self.spectra.iter().any(|s| s.len() != self.dimension) {
            return Err(Error::InvalidConfig(format!(
                "expected {} spectra of length {}",
                self.groups, self.dimension
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidConfig("noise_level must be nonnegative".into()));
        }
        if let Some(basis) = &self.basis {
            if basis.shape() != (self.dimension, self.dimension) || orthonormality_defect(basis) > 1e-10 {
                return Err(Error::InvalidConfig("planted basis must be a d x d orthonormal matrix".into()));
            }
        }
        if self.noise_level == 0.0 {
            check_uniqueness(&self.spectra)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutingFamily {
    pub matrices: Vec<DMatrix<f64>>,
    pub basis: DMatrix<f64>,
}

/// `M_s = Q diag(spectrum_s) Q^T + noise_level * E_s` with `|E_s|_F = 1`.
pub fn make_commuting_family(spec: &CommutingFamilySpec) -> Result<CommutingFamily> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let basis = match &spec.basis {
        Some(b) => b.clone(),
        None => random_orthonormal(spec.dimension, &mut rng),
    };
    let matrices = spec
        .spectra
        .iter()
        .map(|lambda| {
            let mut m = &basis * DMatrix::from_diagonal(&DVector::from_column_slice(lambda)) * basis.transpose();
            m.fill_lower_triangle_with_upper_triangle();
            if spec.noise_level > 0.0 {
                m += unit_symmetric_noise(spec.dimension, &mut rng) * spec.noise_level;
            }
            m
        })
        .collect();
    Ok(CommutingFamily { matrices, basis })
}

/// Rows whose per-group Gram matrix `X_s^T X_s / n_s` equals the given PSD
/// matrix and whose group mean is exactly zero: `+-sqrt(d mu_k) w_k` for each
/// eigenpair, repeated `repeats` times (`n_s = 2 d repeats`). Negative
/// eigenvalues are clamped to zero.
pub fn realize_gram_rows(grams: &[DMatrix<f64>], repeats: usize) -> (DMatrix<f64>, Vec<usize>) {
    let d = grams.first().map_or(0, |g| g.nrows());
    let per_group = 2 * d * repeats;
    let mut raw = DMatrix::zeros(per_group * grams.len(), d);
    let mut labels = Vec::with_capacity(per_group * grams.len());
    let mut row = 0;
    for (s, gram) in grams.iter().enumerate() {
        let (values, vectors) = sym_eigen_desc(gram);
        for _ in 0..repeats {
            for k in 0..d {
                let a = (d as f64 * values[k].max(0.0)).sqrt();
                for sign in [1.0, -1.0] {
                    for j in 0..d {
                        raw[(row, j)] = sign * a * vectors[(j, k)];
                    }
                    labels.push(s);
                    row += 1;
                }
            }
        }
    }
    (raw, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub dim: usize,
    /// Only the first `r_signal` spectrum entries carry variance.
    pub r_signal: usize,
    /// One covariance spectrum per group, each of length `dim`.
    pub group_spectra: Vec<Vec<f64>>,
    pub shared_basis: bool,
    pub n_per_group: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub raw: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub bases: Vec<DMatrix<f64>>,
}

impl GaussianSpec {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.r_signal == 0 || self.r_signal > self.dim {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= r_signal <= dim, got r_signal = {}, dim = {}",
                self.r_signal, self.dim
            )));
        }
        if self.group_spectra.len() < 2 {
            return Err(Error::TooFewGroups(self.group_spectra.len()));
        }
        if self.group_spectra.iter().any(|s| s.len() != self.dim) {
            return Err(Error::InvalidConfig(format!("every spectrum needs {} entries", self.dim)));
        }
        if self.group_spectra.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("spectra must be nonnegative".into()));
        }
        if self.n_per_group < 2 {
            return Err(Error::InvalidConfig("n_per_group must be at least 2".into()));
        }
        Ok(())
    }
}

/// Zero-mean Gaussian rows per group with covariance `Q_s diag(spectrum_s) Q_s^T`.
pub fn sample_grouped_gaussian(spec: &GaussianSpec) -> Result<GaussianSample> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let k = spec.group_spectra.len();
    let shared = random_orthonormal(spec.dim, &mut rng);
    let bases: Vec<DMatrix<f64>> = (0..k)
        .map(|_| {
            if spec.shared_basis {
                shared.clone()
            } else {
                random_orthonormal(spec.dim, &mut rng)
            }
        })
        .collect();
    let n = spec.n_per_group;
    let mut raw = DMatrix::zeros(n * k, spec.dim);
    let mut labels = Vec::with_capacity(n * k);
    for (s, (spectrum, basis)) in spec.group_spectra.iter().zip(&bases).enumerate() {
        let scales = DVector::from_iterator(
            spec.dim,
            spectrum
                .iter()
                .enumerate()
                .map(|(i, v)| if i < spec.r_signal { v.sqrt() } else { 0.0 }),
        );
        let z = gaussian_matrix(n, spec.dim, &mut rng);
        // rows: z diag(sqrt(lambda)) Q^T
        let rows = z * DMatrix::from_diagonal(&scales) * basis.transpose();
        raw.rows_mut(s * n, n).copy_from(&rows);
        labels.extend(std::iter::repeat_n(s, n));
    }
    Ok(GaussianSample { raw, labels, bases })
}

pub fn make_grouped_gaussian(spec: &GaussianSpec) -> Result<GroupedDataset> {
    let sample = sample_grouped_gaussian(spec)?;
    GroupedDataset::from_raw(sample.raw, sample.labels, spec.group_spectra.len(), false)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
pub fn eig_oracle(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = ensure_symmetric(m, 1e-10)?;
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(d, d);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = 0.5 * (a[(q, q)] - a[(p, p)]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..d {
                    if r != p && r != q {
                        let (g, h) = (a[(r, p)], a[(r, q)]);
                        a[(r, p)] = c * g - s * h;
                        a[(p, r)] = a[(r, p)];
                        a[(r, q)] = s * g + c * h;
                        a[(q, r)] = a[(r, q)];
                    }
                    let (g, h) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * g - s * h;
                    v[(r, q)] = s * g + c * h;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = DVector::from_iterator(d, order.iter().map(|&i| a[(i, i)]));
    let vectors = DMatrix::from_fn(d, d, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jevd::jevd_objective;

    #[test]
    fn random_orthonormal_is_orthonormal() {
        let q = random_orthonormal(7, &mut rng_from_seed(3));
        assert!(orthonormality_defect(&q) < 1e-13);
    }

    #[test]
    fn planted_family_is_exact() {
        let t = std::f64::consts::PI / 6.0;
        let q = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let spec = CommutingFamilySpec {
            dimension: 2,
            groups: 2,
            basis: Some(q.clone()),
            spectra: vec![vec![2.0, 1.0], vec![5.0, 3.0]],
            noise_level: 0.0,
            seed: 0,
        };
        let family = make_commuting_family(&spec).unwrap();
        assert!(jevd_objective(&q, &family.matrices).unwrap() < 1e-12);
    }

    #[test]
    fn identity_basis_gives_diagonal_family() {
        let spec = CommutingFamilySpec {
            basis: Some(DMatrix::identity(3, 3)),
            ..CommutingFamilySpec::random(3, 2, 11)
        };
        for m in make_commuting_family(&spec).unwrap().matrices {
            let mut off = m.clone();
            off.fill_diagonal(0.0);
            assert_eq!(off.amax(), 0.0);
        }
    }

    #[test]
    fn uniqueness_violation_is_reported() {
        let spec = CommutingFamilySpec {
            spectra: vec![vec![1.0, 1.0, 2.0], vec![3.0, 3.0, 4.0]],
            ..CommutingFamilySpec::random(3, 2, 1)
        };
        assert!(matches!(make_commuting_family(&spec), Err(Error::UniquenessViolated(0, 1))));
    }

    #[test]
    fn realized_rows_reproduce_gram() {
        let family = make_commuting_family(&CommutingFamilySpec::random(4, 2, 5)).unwrap();
        let (raw, labels) = realize_gram_rows(&family.matrices, 2);
        assert_eq!(raw.nrows(), 32);
        let groups = crate::dataio::split_rows(&raw, &labels, 2).unwrap();
        for (g, m) in groups.iter().zip(&family.matrices) {
            let gram = g.transpose() * g / g.nrows() as f64;
            assert!((gram - m).amax() < 1e-12);
            assert!(g.row_sum().amax() < 1e-12);
        }
    }

    #[test]
    fn oracle_examples() {
        let (vals, vecs) = eig_oracle(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(vals.as_slice(), &[3.0, 1.0]);
        assert_eq!(vecs, DMatrix::identity(2, 2));
        let (vals, _) = eig_oracle(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-15 && (vals[1] + 1.0).abs() < 1e-15);
        assert!(eig_oracle(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn oracle_reconstructs_random_symmetric() {
        let g = gaussian_matrix(8, 8, &mut rng_from_seed(9));
        let m = &g + g.transpose();
        let (vals, vecs) = eig_oracle(&m).unwrap();
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - &m).norm() < 1e-9);
        assert!((&m * &vecs - &vecs * DMatrix::from_diagonal(&vals)).norm() <= 1e-8 * m.norm());
    }

    #[test]
    fn zero_spectrum_hits_zero_variance_path() {
        let spec = GaussianSpec {
            dim: 3,
            r_signal: 3,
            group_spectra: vec![vec![0.0; 3], vec![0.0; 3]],
            shared_basis: true,
            n_per_group: 10,
            seed: 1,
        };
        let data = make_grouped_gaussian(&spec).unwrap();
        assert_eq!(data.features().amax(), 0.0);
        let u = crate::spectra::ProjectionMatrix::new(DMatrix::identity(3, 1)).unwrap();
        assert!(matches!(
            crate::metrics::variance_explained(data.features(), &u),
            Err(Error::ZeroTotalVariance)
        ));
    }
}
