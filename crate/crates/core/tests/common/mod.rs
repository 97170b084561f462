#![allow(dead_code)]

pub mod quadrature;

use liouville::polymoment::{GaussianMoments, Monomial, Polynomial};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dense random polynomial: every monomial of degree `<= degree` with a
/// coefficient in `[-1, 1]`.
pub fn random_polynomial<R: Rng>(nvars: usize, degree: usize, rng: &mut R) -> Polynomial {
    let mut p = Polynomial::zero(nvars);
    for m in liouville::polymoment::enumerate_monomials(nvars, degree) {
        p.add_term(m, rng.random_range(-1.0..1.0));
    }
    p
}

/// Mean in `[-1, 1]^n` and covariance `A A' + 0.2 I` with `A` standard normal.
pub fn random_gaussian<R: Rng>(n: usize, rng: &mut R) -> GaussianMoments {
    let a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let cov = &a * a.transpose() * 0.5 + DMatrix::identity(n, n) * 0.2;
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    GaussianMoments::new(mean, cov).unwrap()
}

pub fn monomial(exponents: &[u16]) -> Polynomial {
    let mut p = Polynomial::zero(exponents.len());
    p.add_term(Monomial::new(exponents.to_vec()), 1.0);
    p
}
