use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polymoment::{GaussianMoments, Polynomial};

/// Quadratic reference function fitted to an equilibrium sample.
#[derive(Clone, Debug)]
pub struct FittedPsi {
    /// `(x - m)' C^-1 (x - m) / 2` without its constant term.
    pub psi: Polynomial,
    /// Always 1: the temperature is absorbed into `psi`.
    pub beta: f64,
    pub moments: GaussianMoments,
}

/// Moment-matched Gaussian reference `exp(-psi)` for a sample of states
/// (rows). Uses the unbiased sample covariance.
pub fn fit_psi(sample: &DMatrix<f64>) -> Result<FittedPsi> {
    let (count, n) = sample.shape();
    if count < 10 * n * n || count < 2 {
        return Err(Error::TooFewSamples {
            needed: (10 * n * n).max(2),
            found: count,
        });
    }
    let mean = DVector::from_fn(n, |j, _| sample.column(j).mean());
    let mut cov = DMatrix::zeros(n, n);
    for r in 0..count {
        let d = sample.row(r).transpose() - &mean;
        cov += &d * d.transpose();
    }
    cov /= (count - 1) as f64;
    let prec = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::Singular("sample covariance is degenerate".into()))?
        .inverse();
    let b = &prec * &mean;
    let mut psi = Polynomial::zero(n);
    for i in 0..n {
        psi.add_scaled(&Polynomial::var(n, i), -b[i])?;
        for j in 0..n {
            let xij = &Polynomial::var(n, i) * &Polynomial::var(n, j);
            psi.add_scaled(&xij, 0.5 * prec[(i, j)])?;
        }
    }
    Ok(FittedPsi {
        psi,
        beta: 1.0,
        moments: GaussianMoments::new(mean, cov)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trialdensity::TrialFamily;

    #[test]
    fn fitted_reference_reproduces_sample_moments() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.8]);
        let g = GaussianMoments::new(mean, cov).unwrap();
        let sample = crate::trialdensity::sample_gaussian(
            &g,
            5000,
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3),
        )
        .unwrap();
        let fit = fit_psi(&sample).unwrap();
        let fam = TrialFamily::shifted(fit.psi.clone(), fit.beta).unwrap();
        let at_zero = fam.to_gaussian(&[0.0, 0.0]).unwrap();
        let m = fit.moments.mean();
        let c = fit.moments.covariance();
        assert!((at_zero.mean() - m).amax() < 1e-12);
        assert!((at_zero.covariance() - c).amax() < 1e-12);
    }

    #[test]
    fn too_few_or_degenerate_samples() {
        let small = DMatrix::from_element(5, 2, 1.0);
        assert!(matches!(fit_psi(&small), Err(Error::TooFewSamples { .. })));
        let flat = DMatrix::from_fn(100, 2, |r, c| if c == 0 { r as f64 } else { 2.0 * r as f64 });
        assert!(matches!(fit_psi(&flat), Err(Error::Singular(_))));
    }
}
