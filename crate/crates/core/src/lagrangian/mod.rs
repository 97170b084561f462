//! The Liouville residual `R` of a path through a trial family and the
//! Lagrangian `<R^2> / 2` built from it.
//!
//! For `l = lambda . Q - beta psi - log Z` the residual is
//! `R = (T - L*) l + div A = lambda_dot . (Q - <Q>) - lambda . L*Q + beta L*psi + div A`,
//! which vanishes identically when the trial path transports exactly and
//! always has `<R> = 0`.
//!
//! Two evaluation routes are provided. The free functions build `R` as a
//! polynomial and take Gaussian expectations by Isserlis pairing; they are
//! the reference. [`LiouvilleModel`] precompiles the same quantities into
//! dense moment tables and also returns exact gradients; it backs the path
//! solvers and samplers.

mod model;

pub use model::{LagrangianGradient, LiouvilleModel};

use nalgebra::{DMatrix, DVector};

use crate::dynsys::DynamicalSystem;
use crate::error::{check_dim, Result};
use crate::pathspace::DiscretePath;
use crate::polymoment::{gaussian_expectation, GaussianMoments, Polynomial};
use crate::trialdensity::TrialFamily;

/// A point `lambda` and velocity `lambda_dot` on a trial family, with the
/// system whose Liouville equation is being tested.
#[derive(Clone, Debug)]
pub struct ResidualContext<'a> {
    pub sys: &'a DynamicalSystem,
    pub family: &'a TrialFamily,
    pub lambda: Vec<f64>,
    pub lambda_dot: Vec<f64>,
}

impl<'a> ResidualContext<'a> {
    pub fn new(
        sys: &'a DynamicalSystem,
        family: &'a TrialFamily,
        lambda: Vec<f64>,
        lambda_dot: Vec<f64>,
    ) -> Result<Self> {
        check_dim(sys.dim(), family.dim())?;
        check_dim(family.len(), lambda.len())?;
        check_dim(family.len(), lambda_dot.len())?;
        family.to_gaussian(&lambda)?;
        Ok(ResidualContext {
            sys,
            family,
            lambda,
            lambda_dot,
        })
    }

    fn gaussian(&self) -> Result<GaussianMoments> {
        self.family.to_gaussian(&self.lambda)
    }
}

/// Residual `R` as an exact polynomial in `x`.
pub fn residual_poly(ctx: &ResidualContext<'_>) -> Result<Polynomial> {
    let g = ctx.gaussian()?;
    let n = ctx.sys.dim();
    let mut r = ctx.sys.divergence_poly().clone();
    if ctx.family.beta() != 0.0 {
        r.add_scaled(&ctx.sys.apply_lstar(ctx.family.psi())?, ctx.family.beta())?;
    }
    for ((qi, &l), &v) in ctx.family.q().iter().zip(&ctx.lambda).zip(&ctx.lambda_dot) {
        if v != 0.0 {
            // T l = lambda_dot . Q - d(log Z)/dt with d(log Z)/dt = lambda_dot . <Q>.
            let mean = gaussian_expectation(qi, &g)?;
            r.add_scaled(qi, v)?;
            r.add_scaled(&Polynomial::constant(n, 1.0), -v * mean)?;
        }
        if l != 0.0 {
            r.add_scaled(&ctx.sys.apply_lstar(qi)?, -l)?;
        }
    }
    Ok(r)
}

/// `<R>`, zero for every valid context.
pub fn mean_residual(ctx: &ResidualContext<'_>) -> Result<f64> {
    gaussian_expectation(&residual_poly(ctx)?, &ctx.gaussian()?)
}

/// `<R^2> / 2`.
pub fn lagrangian_direct(ctx: &ResidualContext<'_>) -> Result<f64> {
    let r = residual_poly(ctx)?;
    Ok(0.5 * gaussian_expectation(&r.try_mul(&r)?, &ctx.gaussian()?)?)
}

/// Fields of the coefficient form of the Lagrangian at one `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianCoefficients {
    /// Fisher metric `Cov(Q_i, Q_j)`.
    pub g: DMatrix<f64>,
    /// `<L* Q_i>`.
    pub m: DVector<f64>,
    /// Raw second moments `<L*Q_i L*Q_j>`, so that `phi = lambda' K lambda`.
    pub k: DMatrix<f64>,
    /// `<(Q_i - <Q_i>) Gamma>`.
    pub x: DVector<f64>,
    /// `<(L* Q_i) Gamma>`.
    pub y: DVector<f64>,
    /// `Gamma = div A - beta L* psi`.
    pub gamma: Polynomial,
}

impl LagrangianCoefficients {
    /// `(lambda_dot' g lambda_dot - 2 lambda_dot' M + lambda' K lambda
    ///   + 2 lambda_dot' X - 2 lambda' Y) / 2`.
    pub fn assemble(&self, lambda: &[f64], lambda_dot: &[f64]) -> f64 {
        let l = DVector::from_column_slice(lambda);
        let v = DVector::from_column_slice(lambda_dot);
        0.5 * (v.dot(&(&self.g * &v)) - 2.0 * v.dot(&self.m) + l.dot(&(&self.k * &l))
            + 2.0 * v.dot(&self.x)
            - 2.0 * l.dot(&self.y))
    }
}

pub fn coefficients(
    sys: &DynamicalSystem,
    family: &TrialFamily,
    lambda: &[f64],
) -> Result<LagrangianCoefficients> {
    check_dim(sys.dim(), family.dim())?;
    let gauss = family.to_gaussian(lambda)?;
    let q = family.q();
    let nq = q.len();
    let lq: Vec<Polynomial> = q.iter().map(|qi| sys.apply_lstar(qi)).collect::<Result<_>>()?;
    let mut gamma = sys.divergence_poly().clone();
    gamma.add_scaled(&sys.apply_lstar(family.psi())?, -family.beta())?;

    let means: Vec<f64> = q.iter().map(|qi| gaussian_expectation(qi, &gauss)).collect::<Result<_>>()?;
    let mean_gamma = gaussian_expectation(&gamma, &gauss)?;
    let mut g = DMatrix::zeros(nq, nq);
    let mut k = DMatrix::zeros(nq, nq);
    for i in 0..nq {
        for j in i..nq {
            let gij = gaussian_expectation(&q[i].try_mul(&q[j])?, &gauss)? - means[i] * means[j];
            let kij = gaussian_expectation(&lq[i].try_mul(&lq[j])?, &gauss)?;
            g[(i, j)] = gij;
            g[(j, i)] = gij;
            k[(i, j)] = kij;
            k[(j, i)] = kij;
        }
    }
    let m = DVector::from_iterator(
        nq,
        lq.iter().map(|p| gaussian_expectation(p, &gauss)).collect::<Result<Vec<_>>>()?,
    );
    let mut x = DVector::zeros(nq);
    let mut y = DVector::zeros(nq);
    for i in 0..nq {
        x[i] = gaussian_expectation(&q[i].try_mul(&gamma)?, &gauss)? - means[i] * mean_gamma;
        y[i] = gaussian_expectation(&lq[i].try_mul(&gamma)?, &gauss)?;
    }
    Ok(LagrangianCoefficients { g, m, k, x, y, gamma })
}

/// Comparison of the direct Lagrangian with the coefficient form.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconcileReport {
    pub direct: f64,
    pub assembled: f64,
    /// `direct - assembled` at the context's velocity.
    pub gap: f64,
    /// Largest change of the gap over the probed velocities.
    pub gap_spread: f64,
    /// Whether the gap is a function of `lambda` alone (up to `1e-9` relative).
    pub gap_velocity_independent: bool,
}

/// Evaluates both Lagrangian forms at the context and at velocities
/// `lambda_dot +- e_i` and `lambda_dot + (1, ..., 1)`, and reports whether
/// their difference depends on the velocity.
pub fn reconcile(ctx: &ResidualContext<'_>) -> Result<ReconcileReport> {
    let coef = coefficients(ctx.sys, ctx.family, &ctx.lambda)?;
    let gap_at = |v: &[f64]| -> Result<(f64, f64)> {
        let probe = ResidualContext {
            lambda_dot: v.to_vec(),
            ..ctx.clone()
        };
        let d = lagrangian_direct(&probe)?;
        let a = coef.assemble(&ctx.lambda, v);
        Ok((d, a))
    };
    let (direct, assembled) = gap_at(&ctx.lambda_dot)?;
    let gap = direct - assembled;
    let mut spread: f64 = 0.0;
    let mut scale = direct.abs();
    let nq = ctx.lambda_dot.len();
    let mut probes = Vec::with_capacity(2 * nq + 1);
    for i in 0..nq {
        for s in [-1.0, 1.0] {
            let mut v = ctx.lambda_dot.clone();
            v[i] += s;
            probes.push(v);
        }
    }
    probes.push(ctx.lambda_dot.iter().map(|v| v + 1.0).collect());
    for v in &probes {
        let (d, a) = gap_at(v)?;
        scale = scale.max(d.abs()).max(a.abs());
        spread = spread.max(((d - a) - gap).abs());
    }
    Ok(ReconcileReport {
        direct,
        assembled,
        gap,
        gap_spread: spread,
        gap_velocity_independent: spread <= 1e-9 * (1.0 + scale),
    })
}

/// Midpoint-rule action `sum_k dt <R^2>/2` at `(lambda_k + lambda_{k+1}) / 2`
/// with velocity `(lambda_{k+1} - lambda_k) / dt`.
///
/// Returns `f64::INFINITY` if any evaluation point is not normalizable.
pub fn discrete_action(sys: &DynamicalSystem, family: &TrialFamily, path: &DiscretePath) -> Result<f64> {
    let model = LiouvilleModel::new(sys, family)?;
    Ok(model.action(path))
}

/// Natural-parameter velocity along exact Gaussian transport, used for
/// checking that exact paths have vanishing residual. `moments_dot` is
/// `(d mean/dt, d covariance/dt)`.
pub fn natural_velocity(
    family: &TrialFamily,
    g: &GaussianMoments,
    mean_dot: &DVector<f64>,
    cov_dot: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    // b = P mu, P = Sigma^-1: P_dot = -P Sigma_dot P, b_dot = P_dot mu + P mu_dot.
    let p = g
        .covariance()
        .clone()
        .try_inverse()
        .ok_or_else(|| crate::Error::Singular("covariance".into()))?;
    let p_dot = -(&p * cov_dot * &p);
    let b_dot = &p_dot * g.mean() + &p * mean_dot;
    family.natural_from_form(&p_dot, &b_dot)
}
