use nalgebra::{DMatrix, DVector};

use crate::dynsys::DynamicalSystem;
use crate::error::{check_dim, Error, Result};
use crate::lagrangian::{lagrangian_direct, ResidualContext};
use crate::polymoment::GaussianMoments;
use crate::trialdensity::{gaussian_kl, TrialFamily};

/// Exact Gaussian transport under `dx/dt = U x + c`: RK4 on
/// `dmu/dt = U mu + c` and `dSigma/dt = U Sigma + Sigma U'`. Returns
/// `steps + 1` snapshots including the start.
pub fn exact_gaussian_evolve(
    sys: &DynamicalSystem,
    start: &GaussianMoments,
    t_end: f64,
    steps: usize,
) -> Result<Vec<GaussianMoments>> {
    let (u, c) = sys.affine_parts()?;
    check_dim(sys.dim(), start.dim())?;
    if steps == 0 || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument("need steps >= 1 and t_end >= 0".into()));
    }
    let h = t_end / steps as f64;
    let f = |m: &DVector<f64>, s: &DMatrix<f64>| -> (DVector<f64>, DMatrix<f64>) {
        (&u * m + &c, &u * s + s * u.transpose())
    };
    let mut m = start.mean().clone();
    let mut s = start.covariance().clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    for _ in 0..steps {
        let (k1m, k1s) = f(&m, &s);
        let (k2m, k2s) = f(&(&m + &k1m * (0.5 * h)), &(&s + &k1s * (0.5 * h)));
        let (k3m, k3s) = f(&(&m + &k2m * (0.5 * h)), &(&s + &k2s * (0.5 * h)));
        let (k4m, k4s) = f(&(&m + &k3m * h), &(&s + &k3s * h));
        m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        s += (k1s + k2s * 2.0 + k3s * 2.0 + k4s) * (h / 6.0);
        out.push(GaussianMoments::new(m.clone(), s.clone())?);
    }
    Ok(out)
}

/// `D(exactly transported rho(lambda_t) || rho(lambda_next))` over `dt`.
pub fn information_loss_direct(
    sys: &DynamicalSystem,
    family: &TrialFamily,
    lambda_t: &[f64],
    lambda_next: &[f64],
    dt: f64,
    steps: usize,
) -> Result<f64> {
    check_dim(sys.dim(), family.dim())?;
    let start = family.to_gaussian(lambda_t)?;
    let evolved = exact_gaussian_evolve(sys, &start, dt, steps)?
        .pop()
        .expect("at least one snapshot");
    gaussian_kl(&evolved, &family.to_gaussian(lambda_next)?)
}

/// `lambda_i(t) = offset_i + amplitude_i exp(rate_i t)`, with its exact
/// time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialPath {
    pub offset: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub rate: Vec<f64>,
}

impl ExponentialPath {
    pub fn new(offset: Vec<f64>, amplitude: Vec<f64>, rate: Vec<f64>) -> Result<Self> {
        check_dim(offset.len(), amplitude.len())?;
        check_dim(offset.len(), rate.len())?;
        Ok(ExponentialPath { offset, amplitude, rate })
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        (0..self.offset.len())
            .map(|i| self.offset[i] + self.amplitude[i] * (self.rate[i] * t).exp())
            .collect()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        (0..self.offset.len())
            .map(|i| self.amplitude[i] * self.rate[i] * (self.rate[i] * t).exp())
            .collect()
    }
}

/// One line of an information-loss scan.
#[derive(Clone, Debug, PartialEq)]
pub struct IlRow {
    pub dt: f64,
    pub il: f64,
    /// `dt^2 <R^2> / 2` at the start of the step.
    pub predicted: f64,
    pub ratio: f64,
}

/// Direct information loss along `path` from time `t` for each step in
/// `dts`, next to its second-order prediction.
pub fn il_scan(
    sys: &DynamicalSystem,
    family: &TrialFamily,
    path: &ExponentialPath,
    t: f64,
    dts: &[f64],
    steps: usize,
) -> Result<Vec<IlRow>> {
    let ctx = ResidualContext::new(sys, family, path.at(t), path.velocity(t))?;
    let r2_half = lagrangian_direct(&ctx)?;
    dts.iter()
        .map(|&dt| {
            let il = information_loss_direct(sys, family, &path.at(t), &path.at(t + dt), dt, steps)?;
            let predicted = dt * dt * r2_half;
            Ok(IlRow {
                dt,
                il,
                predicted,
                ratio: il / predicted,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{make_affine, make_linear, make_lorenz};
    use crate::polymoment::Polynomial;

    fn g1(m: f64, v: f64) -> GaussianMoments {
        GaussianMoments::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn unit_family() -> TrialFamily {
        let x = Polynomial::var(1, 0);
        TrialFamily::shifted((&x * &x).scale(0.5), 1.0).unwrap()
    }

    #[test]
    fn one_dimensional_decay() {
        let sys = make_linear(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        let out = exact_gaussian_evolve(&sys, &g1(1.0, 1.0), 1.0, 100).unwrap();
        assert_eq!(out.len(), 101);
        let end = out.last().unwrap();
        assert!((end.mean()[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert!((end.covariance()[(0, 0)] - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_drift_is_stationary() {
        let sys = make_linear(&DMatrix::zeros(1, 1)).unwrap();
        let out = exact_gaussian_evolve(&sys, &g1(0.4, 2.0), 3.0, 10).unwrap();
        assert!(out.iter().all(|g| g == &g1(0.4, 2.0)));
    }

    #[test]
    fn rotation_preserves_volume() {
        let sys = make_linear(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        let start = GaussianMoments::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]),
        )
        .unwrap();
        let d0 = start.covariance().determinant();
        for g in exact_gaussian_evolve(&sys, &start, 2.0, 400).unwrap() {
            assert!((g.covariance().determinant() - d0).abs() < 1e-8 * d0);
        }
    }

    #[test]
    fn affine_drift_relaxes_to_fixed_point() {
        let u = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -2.0]);
        let c = DVector::from_vec(vec![1.0, -1.0]);
        let sys = make_affine(&u, &c).unwrap();
        let out = exact_gaussian_evolve(&sys, &GaussianMoments::standard(2), 20.0, 2000).unwrap();
        let fixed = -u.clone().try_inverse().unwrap() * c;
        assert!((out.last().unwrap().mean() - fixed).amax() < 1e-8);
    }

    #[test]
    fn nonlinear_drift_is_unsupported() {
        let sys = make_lorenz(10.0, 28.0, 8.0 / 3.0);
        assert!(matches!(
            exact_gaussian_evolve(&sys, &GaussianMoments::standard(3), 1.0, 10),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn information_loss_on_relaxation_path() {
        let sys = make_linear(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        let fam = unit_family();
        let path = ExponentialPath::new(vec![0.0], vec![1.0], vec![-1.0]).unwrap();
        let rows = il_scan(&sys, &fam, &path, 0.0, &[0.1, 0.01], 64).unwrap();
        for r in &rows {
            let want = 0.5 * ((-2.0 * r.dt).exp() - 1.0 + 2.0 * r.dt);
            assert!((r.il - want).abs() < 1e-10 * want, "{r:?}");
            assert!((r.predicted - r.dt * r.dt).abs() < 1e-15);
        }
        assert!((rows[1].ratio - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_manifold_path_loses_no_information() {
        let u = DMatrix::from_row_slice(2, 2, &[-0.5, 0.3, -0.3, -0.8]);
        let sys = make_linear(&u).unwrap();
        let fam = TrialFamily::full_gaussian(2);
        let g0 = GaussianMoments::new(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]),
        )
        .unwrap();
        let dt = 0.05;
        let g1 = exact_gaussian_evolve(&sys, &g0, dt, 200).unwrap().pop().unwrap();
        let l0 = fam.natural_from_gaussian(&g0).unwrap();
        let l1 = fam.natural_from_gaussian(&g1).unwrap();
        let il = information_loss_direct(&sys, &fam, &l0, &l1, dt, 200).unwrap();
        assert!(il < 1e-14, "{il}");
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
