use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::polymoment::GaussianMoments;

/// Relative entropy `D(p || q)` between two nondegenerate Gaussians.
///
/// Evaluated in the eigenbasis of `q`-whitened `Sigma_p` as
/// `sum_i (e_i - 1 - ln e_i) / 2` plus the Mahalanobis mean term, which
/// stays accurate when `p` and `q` are close.
pub fn gaussian_kl(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    if p == q {
        return Ok(0.0);
    }
    let lq = Cholesky::new(q.covariance().clone())
        .ok_or_else(|| Error::Singular("second covariance is not positive definite".into()))?
        .l();
    if Cholesky::new(p.covariance().clone()).is_none() {
        return Err(Error::Singular("first covariance is not positive definite".into()));
    }
    let lq_inv = lq
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("covariance factor is singular".into()))?;
    let whitened = &lq_inv * p.covariance() * lq_inv.transpose();
    let whitened = crate::polymoment::symmetrize(&whitened);
    let eig = SymmetricEigen::new(whitened).eigenvalues;
    let mut total = 0.0;
    for &e in eig.iter() {
        if e <= 0.0 {
            return Err(Error::Singular("whitened covariance has a non-positive eigenvalue".into()));
        }
        let d = e - 1.0;
        total += (d - d.ln_1p()).max(0.0);
    }
    let dm = lq_inv * (q.mean() - p.mean());
    total += dm.norm_squared();
    Ok(0.5 * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn g1(m: f64, v: f64) -> GaussianMoments {
        GaussianMoments::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn identical_gaussians_have_zero_divergence() {
        let g = GaussianMoments::new(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.4, 0.9]),
        )
        .unwrap();
        assert_eq!(gaussian_kl(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn mean_shift() {
        let mu = 0.7;
        let kl = gaussian_kl(&g1(mu, 1.0), &g1(0.0, 1.0)).unwrap();
        assert!((kl - mu * mu / 2.0).abs() < 1e-15);
    }

    #[test]
    fn variance_change() {
        for v in [0.25, 0.999, 1.5, 4.0] {
            let kl = gaussian_kl(&g1(0.0, v), &g1(0.0, 1.0)).unwrap();
            let want = 0.5 * (v - 1.0 - v.ln());
            assert!((kl - want).abs() < 1e-15 * want.max(1.0), "{v}: {kl} vs {want}");
        }
    }

    #[test]
    fn general_case_matches_textbook_formula() {
        let p = GaussianMoments::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]),
        )
        .unwrap();
        let q = GaussianMoments::new(
            DVector::from_vec(vec![0.0, 0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 1.5]),
        )
        .unwrap();
        let qi = q.covariance().clone().try_inverse().unwrap();
        let dm = q.mean() - p.mean();
        let want = 0.5
            * ((&qi * p.covariance()).trace() - 2.0
                + (dm.transpose() * &qi * &dm)[(0, 0)]
                + (q.covariance().determinant() / p.covariance().determinant()).ln());
        assert!((gaussian_kl(&p, &q).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let s = GaussianMoments::new(DVector::zeros(2), DMatrix::from_element(2, 2, 1.0)).unwrap();
        let r = GaussianMoments::standard(2);
        assert!(matches!(gaussian_kl(&s, &r), Err(Error::Singular(_))));
        assert!(matches!(gaussian_kl(&r, &s), Err(Error::Singular(_))));
    }
}
