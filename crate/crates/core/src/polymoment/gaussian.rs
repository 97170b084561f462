use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::polynomial::Polynomial;
use crate::error::{check_dim, Error, Result};

/// Highest total degree accepted by [`gaussian_expectation`].
pub const ISSERLIS_DEGREE_CAP: usize = 12;

/// Mean and covariance of a multivariate Gaussian.
///
/// The covariance is stored exactly symmetric and is positive semidefinite
/// up to `-1e-12` times its spectral norm.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMoments {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: if covariance.nrows() != n {
                    covariance.nrows()
                } else {
                    covariance.ncols()
                },
            });
        }
        let covariance = symmetrize(&covariance);
        if n > 0 {
            let eig = SymmetricEigen::new(covariance.clone()).eigenvalues;
            let norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            if !min.is_finite() || min < -1e-12 * norm {
                return Err(Error::NotPositiveSemidefinite {
                    min_eigenvalue: min,
                });
            }
        }
        Ok(GaussianMoments { mean, covariance })
    }

    pub fn standard(n: usize) -> Self {
        GaussianMoments {
            mean: DVector::zeros(n),
            covariance: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            0.5 * (m[(i, j)] + m[(j, i)])
        }
    })
}

/// Centered Gaussian moments `E[c^alpha]` by Isserlis pairing, memoized
/// on exponent vectors.
struct CenteredMoments<'a> {
    cov: &'a DMatrix<f64>,
    memo: HashMap<Vec<u16>, f64>,
}

impl<'a> CenteredMoments<'a> {
    fn new(cov: &'a DMatrix<f64>) -> Self {
        CenteredMoments {
            cov,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, alpha: &[u16]) -> f64 {
        let degree: usize = alpha.iter().map(|&e| e as usize).sum();
        if degree % 2 == 1 {
            return 0.0;
        }
        if degree == 0 {
            return 1.0;
        }
        if let Some(&v) = self.memo.get(alpha) {
            return v;
        }
        // Pair the first factor c_i with every remaining factor c_j.
        let i = alpha.iter().position(|&e| e > 0).unwrap();
        let mut rest = alpha.to_vec();
        rest[i] -= 1;
        let mut total = 0.0;
        for j in 0..rest.len() {
            if rest[j] == 0 {
                continue;
            }
            let sij = self.cov[(i, j)];
            if sij == 0.0 {
                continue;
            }
            let mult = rest[j] as f64;
            let mut reduced = rest.clone();
            reduced[j] -= 1;
            total += mult * sij * self.get(&reduced);
        }
        self.memo.insert(alpha.to_vec(), total);
        total
    }
}

/// Exact expectation of `p` under the Gaussian `g`.
///
/// The polynomial is re-centred at the mean and each centred monomial is
/// evaluated with Isserlis' theorem: odd moments vanish and even moments are
/// sums over pairings of covariance entries.
pub fn gaussian_expectation(p: &Polynomial, g: &GaussianMoments) -> Result<f64> {
    check_dim(g.dim(), p.nvars())?;
    let degree = p.degree().unwrap_or(0);
    if degree > ISSERLIS_DEGREE_CAP {
        return Err(Error::DegreeCap {
            degree,
            cap: ISSERLIS_DEGREE_CAP,
        });
    }
    let centered = p.shift(g.mean().as_slice())?;
    let mut moments = CenteredMoments::new(g.covariance());
    let mut total = 0.0;
    for (m, c) in centered.terms() {
        total += c * moments.get(m.exponents());
    }
    Ok(total)
}

/// `<pq> - <p><q>` under the Gaussian `g`.
pub fn gaussian_covariance(p: &Polynomial, q: &Polynomial, g: &GaussianMoments) -> Result<f64> {
    let pq = p.try_mul(q)?;
    Ok(gaussian_expectation(&pq, g)? - gaussian_expectation(p, g)? * gaussian_expectation(q, g)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss1(mean: f64, var: f64) -> GaussianMoments {
        GaussianMoments::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
            .unwrap()
    }

    fn mono(n: usize, e: Vec<u16>) -> Polynomial {
        Polynomial::from_terms(n, [(e, 1.0)]).unwrap()
    }

    #[test]
    fn fourth_moment_is_three_sigma_four() {
        let v = 1.7;
        let e = gaussian_expectation(&mono(1, vec![4]), &gauss1(0.0, v)).unwrap();
        assert!((e - 3.0 * v * v).abs() < 1e-14);
    }

    #[test]
    fn first_moment_is_mean() {
        let e = gaussian_expectation(&mono(1, vec![1]), &gauss1(2.5, 0.3)).unwrap();
        assert_eq!(e, 2.5);
    }

    #[test]
    fn second_moment_with_offset() {
        let e = gaussian_expectation(&mono(1, vec![2]), &gauss1(1.0, 1.0)).unwrap();
        assert_eq!(e, 2.0);
    }

    #[test]
    fn four_way_isserlis() {
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.3, -0.4, 0.1, //
                0.3, 1.5, 0.2, -0.6, //
                -0.4, 0.2, 1.2, 0.25, //
                0.1, -0.6, 0.25, 1.8,
            ],
        );
        let g = GaussianMoments::new(DVector::zeros(4), s.clone()).unwrap();
        let e = gaussian_expectation(&mono(4, vec![1, 1, 1, 1]), &g).unwrap();
        let want = s[(0, 1)] * s[(2, 3)] + s[(0, 2)] * s[(1, 3)] + s[(0, 3)] * s[(1, 2)];
        assert!((e - want).abs() < 1e-15);
    }

    #[test]
    fn covariance_examples() {
        let g = GaussianMoments::standard(1);
        let x = mono(1, vec![1]);
        let x2 = mono(1, vec![2]);
        assert_eq!(gaussian_covariance(&x, &x, &g).unwrap(), 1.0);
        assert_eq!(gaussian_covariance(&x, &x2, &g).unwrap(), 0.0);
        // <x^4> - <x^2>^2, both sides taken from the expectation engine
        let x4 = gaussian_expectation(&mono(1, vec![4]), &g).unwrap();
        let x2e = gaussian_expectation(&x2, &g).unwrap();
        assert_eq!(gaussian_covariance(&x2, &x2, &g).unwrap(), x4 - x2e * x2e);
        assert_eq!(x4 - x2e * x2e, 2.0);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = GaussianMoments::new(DVector::zeros(2), s).unwrap_err();
        assert!(matches!(err, Error::NotPositiveSemidefinite { .. }));
    }

    #[test]
    fn degenerate_covariance_is_allowed() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GaussianMoments::new(DVector::zeros(2), s).unwrap();
        // x0 == x1 almost surely, so <(x0 - x1)^2> = 0
        let d = &Polynomial::var(2, 0) - &Polynomial::var(2, 1);
        assert_eq!(gaussian_expectation(&(&d * &d), &g).unwrap(), 0.0);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let err = gaussian_expectation(&mono(1, vec![14]), &GaussianMoments::standard(1)).unwrap_err();
        assert_eq!(err, Error::DegreeCap { degree: 14, cap: 12 });
    }

    #[test]
    fn asymmetric_input_is_stored_symmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2000000001, 1.0]);
        let g = GaussianMoments::new(DVector::zeros(2), s).unwrap();
        assert_eq!(g.covariance()[(0, 1)], g.covariance()[(1, 0)]);
    }
}
