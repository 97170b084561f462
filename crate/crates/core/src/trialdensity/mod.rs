//! Gaussian-tractable exponential-family trial densities
//! `rho(lambda, x) = exp(lambda . Q(x) - beta psi(x)) / Z(lambda)`.

mod fit;
mod kl;

pub use fit::{fit_psi, FittedPsi};
pub use kl::gaussian_kl;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::polymoment::{gaussian_covariance, gaussian_expectation, GaussianMoments, Polynomial};

/// Quadratic, linear and constant parts of a degree <= 2 polynomial:
/// `p(x) = x' C x + l' x + c` with `C` symmetric.
#[derive(Clone, Debug, PartialEq)]
struct QuadraticForm {
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

impl QuadraticForm {
    fn of(p: &Polynomial) -> Self {
        let n = p.nvars();
        let mut quad = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        let mut constant = 0.0;
        for (m, c) in p.terms() {
            let idx: Vec<usize> = m
                .exponents()
                .iter()
                .enumerate()
                .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
                .collect();
            match idx.as_slice() {
                [] => constant += c,
                [i] => lin[*i] += c,
                [i, j] if i == j => quad[(*i, *i)] += c,
                [i, j] => {
                    quad[(*i, *j)] += 0.5 * c;
                    quad[(*j, *i)] += 0.5 * c;
                }
                _ => unreachable!("degree checked at construction"),
            }
        }
        QuadraticForm { quad, lin, constant }
    }
}

/// Slow variables `Q`, reference function `psi` and inverse temperature
/// `beta`. Every `Q_i` and `psi` has degree at most two.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialFamily {
    q: Vec<Polynomial>,
    psi: Polynomial,
    beta: f64,
    q_forms: Vec<QuadraticForm>,
    psi_form: QuadraticForm,
}

impl TrialFamily {
    pub fn new(q: Vec<Polynomial>, psi: Polynomial, beta: f64) -> Result<Self> {
        let fam = Self::new_allowing_dependence(q, psi, beta)?;
        if fam.q_rank() < fam.q.len() {
            return Err(Error::InvalidArgument(
                "slow variables Q are linearly dependent".into(),
            ));
        }
        Ok(fam)
    }

    /// Like [`TrialFamily::new`] but accepts linearly dependent `Q`, whose
    /// Fisher metric is then singular. Useful for diagnostics only.
    pub fn new_allowing_dependence(q: Vec<Polynomial>, psi: Polynomial, beta: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidArgument("family needs at least one slow variable".into()));
        }
        let n = psi.nvars();
        for p in q.iter().chain(std::iter::once(&psi)) {
            check_dim(n, p.nvars())?;
            if p.degree().unwrap_or(0) > 2 {
                return Err(Error::InvalidArgument(format!(
                    "trial polynomial {p} has degree above 2"
                )));
            }
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
        }
        let q_forms = q.iter().map(QuadraticForm::of).collect();
        let psi_form = QuadraticForm::of(&psi);
        Ok(TrialFamily {
            q,
            psi,
            beta,
            q_forms,
            psi_form,
        })
    }

    /// `Q` = every first and second monomial, `psi = 0`, `beta = 0`: the
    /// full Gaussian family in natural coordinates. Ordering is
    /// `x_0..x_{n-1}` followed by `x_i x_j` for `i <= j`.
    pub fn full_gaussian(n: usize) -> Self {
        let mut q: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(n, i)).collect();
        for i in 0..n {
            for j in i..n {
                q.push(&Polynomial::var(n, i) * &Polynomial::var(n, j));
            }
        }
        Self::new(q, Polynomial::zero(n), 0.0).expect("monomials are independent")
    }

    /// `Q = x` with a fixed reference quadratic `psi`: only the mean moves.
    pub fn shifted(psi: Polynomial, beta: f64) -> Result<Self> {
        let n = psi.nvars();
        Self::new((0..n).map(|i| Polynomial::var(n, i)).collect(), psi, beta)
    }

    pub fn dim(&self) -> usize {
        self.psi.nvars()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[Polynomial] {
        &self.q
    }

    pub fn psi(&self) -> &Polynomial {
        &self.psi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn q_rank(&self) -> usize {
        // Coefficient matrix over the monomials x_i, x_i x_j and 1.
        let n = self.dim();
        let rows = 1 + n + n * (n + 1) / 2;
        let mut a = DMatrix::zeros(rows, self.q.len());
        for (col, f) in self.q_forms.iter().enumerate() {
            a[(0, col)] = f.constant;
            let mut r = 1;
            for i in 0..n {
                a[(r, col)] = f.lin[i];
                r += 1;
            }
            for i in 0..n {
                for j in i..n {
                    a[(r, col)] = if i == j { f.quad[(i, i)] } else { 2.0 * f.quad[(i, j)] };
                    r += 1;
                }
            }
        }
        let svd = SVD::new(a, false, false);
        let smax = svd.singular_values.max();
        svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax.max(1.0)).count()
    }

    /// The exponent `lambda . Q - beta psi` as a polynomial.
    pub fn exponent(&self, lambda: &[f64]) -> Result<Polynomial> {
        check_dim(self.len(), lambda.len())?;
        let mut e = self.psi.scale(-self.beta);
        for (qi, &l) in self.q.iter().zip(lambda) {
            e.add_scaled(qi, l)?;
        }
        Ok(e)
    }

    /// Precision matrix `P`, linear term `b` and constant `c` with
    /// exponent `= -x'Px/2 + b'x + c`.
    fn natural_form(&self, lambda: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
        check_dim(self.len(), lambda.len())?;
        let n = self.dim();
        let mut quad = self.psi_form.quad.scale(-self.beta);
        let mut lin = self.psi_form.lin.scale(-self.beta);
        let mut constant = -self.beta * self.psi_form.constant;
        for (f, &l) in self.q_forms.iter().zip(lambda) {
            if l == 0.0 {
                continue;
            }
            quad += f.quad.scale(l);
            lin += f.lin.scale(l);
            constant += l * f.constant;
        }
        let precision = quad.scale(-2.0);
        debug_assert_eq!(precision.nrows(), n);
        Ok((precision, lin, constant))
    }

    fn precision_cholesky(&self, lambda: &[f64]) -> Result<(Cholesky<f64, Dyn>, DVector<f64>, f64)> {
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonNormalizable("non-finite natural parameter".into()));
        }
        let (p, b, c) = self.natural_form(lambda)?;
        let chol = Cholesky::new(p).ok_or_else(|| {
            Error::NonNormalizable("quadratic part of the exponent is not negative definite".into())
        })?;
        Ok((chol, b, c))
    }

    /// Gaussian moments of the trial density at `lambda`.
    pub fn to_gaussian(&self, lambda: &[f64]) -> Result<GaussianMoments> {
        let (chol, b, _) = self.precision_cholesky(lambda)?;
        let cov = chol.inverse();
        let mean = chol.solve(&b);
        GaussianMoments::new(mean, cov)
    }

    /// `log Z(lambda)` from the closed-form Gaussian integral.
    pub fn log_partition(&self, lambda: &[f64]) -> Result<f64> {
        let (chol, b, c) = self.precision_cholesky(lambda)?;
        let n = self.dim() as f64;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = b.dot(&chol.solve(&b));
        Ok(0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det + 0.5 * quad + c)
    }

    /// `<Q_i>` at `lambda`.
    pub fn mean_q(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let g = self.to_gaussian(lambda)?;
        self.q.iter().map(|qi| gaussian_expectation(qi, &g)).collect()
    }

    /// Fisher metric `g_ij = Cov(Q_i, Q_j)`.
    pub fn fisher_matrix(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.to_gaussian(lambda)?;
        let k = self.len();
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = gaussian_covariance(&self.q[i], &self.q[j], &g)?;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// `count` independent draws (rows) from the trial density. The stream
    /// is fully determined by `seed`.
    pub fn sample(&self, lambda: &[f64], count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let g = self.to_gaussian(lambda)?;
        sample_gaussian(&g, count, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Natural parameters whose trial density has the given moments.
    ///
    /// Requires `Q` (together with `beta psi`) to span the first and second
    /// monomials needed by the target; otherwise reports the mismatch.
    pub fn natural_from_gaussian(&self, g: &GaussianMoments) -> Result<Vec<f64>> {
        check_dim(self.dim(), g.dim())?;
        let chol = Cholesky::new(g.covariance().clone())
            .ok_or_else(|| Error::Singular("target covariance is not positive definite".into()))?;
        let prec = chol.inverse();
        let b = &prec * g.mean();
        // lambda . Q = -x'Px/2 + b'x + beta psi, constants ignored.
        let p_eff = prec - self.psi_form.quad.scale(2.0 * self.beta);
        let b_eff = b + self.psi_form.lin.scale(self.beta);
        self.natural_from_form(&p_eff, &b_eff)
    }

    /// Solves `lambda . Q = -x'Px/2 + b'x` (up to a constant) for `lambda`,
    /// ignoring `psi`. Linear in `(P, b)`.
    pub fn natural_from_form(&self, precision: &DMatrix<f64>, linear: &DVector<f64>) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, precision.nrows())?;
        check_dim(n, linear.len())?;
        let rows = n + n * (n + 1) / 2;
        let mut a = DMatrix::zeros(rows, self.len());
        let mut rhs = DVector::zeros(rows);
        for (col, f) in self.q_forms.iter().enumerate() {
            let mut r = 0;
            for i in 0..n {
                a[(r, col)] = f.lin[i];
                r += 1;
            }
            for i in 0..n {
                for j in i..n {
                    a[(r, col)] = f.quad[(i, j)];
                    r += 1;
                }
            }
        }
        let mut r = 0;
        for i in 0..n {
            rhs[r] = linear[i];
            r += 1;
        }
        for i in 0..n {
            for j in i..n {
                rhs[r] = -0.5 * precision[(i, j)];
                r += 1;
            }
        }
        let svd = SVD::new(a.clone(), true, true);
        let lambda = svd
            .solve(&rhs, 1e-13)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let resid = (&a * &lambda - &rhs).amax();
        if resid > 1e-9 * rhs.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "moments are not representable in this family (residual {resid:e})"
            )));
        }
        Ok(lambda.iter().copied().collect())
    }

    pub fn point(&self, lambda: Vec<f64>) -> Result<TrialPoint<'_>> {
        TrialPoint::new(self, lambda)
    }
}

/// A normalizable point `lambda` on a trial family.
#[derive(Clone, Debug)]
pub struct TrialPoint<'a> {
    family: &'a TrialFamily,
    lambda: Vec<f64>,
}

impl<'a> TrialPoint<'a> {
    pub fn new(family: &'a TrialFamily, lambda: Vec<f64>) -> Result<Self> {
        family.precision_cholesky(&lambda)?;
        Ok(TrialPoint { family, lambda })
    }

    pub fn family(&self) -> &'a TrialFamily {
        self.family
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn to_gaussian(&self) -> GaussianMoments {
        self.family
            .to_gaussian(&self.lambda)
            .expect("checked at construction")
    }

    pub fn log_partition(&self) -> f64 {
        self.family
            .log_partition(&self.lambda)
            .expect("checked at construction")
    }

    pub fn fisher_matrix(&self) -> Result<DMatrix<f64>> {
        self.family.fisher_matrix(&self.lambda)
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.family.sample(&self.lambda, count, seed)
    }
}

/// Draws rows from `g` using the given generator.
pub fn sample_gaussian<R: rand::Rng>(g: &GaussianMoments, count: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = g.dim();
    let l = gaussian_factor(g)?;
    let mut out = DMatrix::zeros(count, n);
    let mut z = DVector::zeros(n);
    for r in 0..count {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let x = g.mean() + &l * &z;
        out.row_mut(r).copy_from(&x.transpose());
    }
    Ok(out)
}

/// Lower factor `L` with `L L' = covariance`; tolerates semidefinite input.
pub(crate) fn gaussian_factor(g: &GaussianMoments) -> Result<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(g.covariance().clone()) {
        return Ok(c.l());
    }
    let eig = nalgebra::SymmetricEigen::new(g.covariance().clone());
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}
