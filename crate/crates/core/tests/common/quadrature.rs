//! Gauss-Hermite quadrature against the standard normal weight, built by
//! Golub-Welsch. `n` nodes integrate polynomials of degree `2n - 1` exactly.

use liouville::polymoment::{GaussianMoments, Polynomial};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E[p(X)]` for `X ~ g` by a tensor-product rule on `mean + L z`.
pub fn quadrature_expectation(p: &Polynomial, g: &GaussianMoments, n: usize) -> f64 {
    let d = g.dim();
    let (nodes, weights) = hermite_rule(n);
    let l = g
        .covariance()
        .clone()
        .cholesky()
        .expect("positive definite")
        .l();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let z = DVector::from_fn(d, |i, _| nodes[idx[i]]);
        let w: f64 = idx.iter().map(|&i| weights[i]).product();
        let x = g.mean() + &l * z;
        total += w * p.eval(x.as_slice()).unwrap();
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
