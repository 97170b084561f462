use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BLOW_UP_BOUND;
use crate::dynsys::{DynamicalSystem, Rk4Work};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumOptions {
    /// Nominal start; a seeded unit-scale perturbation is added to it.
    pub initial: Vec<f64>,
    pub burn_t: f64,
    pub count: usize,
    pub dt: f64,
    /// Time between retained states.
    pub spacing: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSample {
    /// One state per row.
    pub states: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// States from one long trajectory after discarding `burn_t`, one every
/// `spacing`. Warns when the two halves of the sample disagree by more
/// than 5 standard errors in mean or variance, or when the sample has
/// collapsed onto a point.
pub fn equilibrium_sample(sys: &DynamicalSystem, opts: &EquilibriumOptions) -> Result<EquilibriumSample> {
    let n = sys.dim();
    check_dim(n, opts.initial.len())?;
    if !(opts.dt > 0.0 && opts.spacing >= opts.dt && opts.burn_t >= 0.0) {
        return Err(Error::InvalidArgument("need dt > 0, spacing >= dt and burn_t >= 0".into()));
    }
    if opts.count < 4 {
        return Err(Error::TooFewSamples {
            needed: 4,
            found: opts.count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = opts
        .initial
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + z
        })
        .collect();
    let mut work = Rk4Work::default();
    let burn_steps = (opts.burn_t / opts.dt).round() as usize;
    let gap = (opts.spacing / opts.dt).round().max(1.0) as usize;
    let mut step = 0usize;
    let mut advance = |x: &mut Vec<f64>, k: usize| -> Result<()> {
        for _ in 0..k {
            sys.rk4_step(x, opts.dt, &mut work);
            step += 1;
            if x.iter().any(|v| !(v.abs() <= BLOW_UP_BOUND)) {
                return Err(Error::BlowUp {
                    time: step as f64 * opts.dt,
                });
            }
        }
        Ok(())
    };
    advance(&mut x, burn_steps)?;
    let mut states = DMatrix::zeros(opts.count, n);
    for r in 0..opts.count {
        advance(&mut x, gap)?;
        for (j, v) in x.iter().enumerate() {
            states[(r, j)] = *v;
        }
    }
    let warnings = stationarity_warnings(&states);
    Ok(EquilibriumSample { states, warnings })
}

fn stationarity_warnings(states: &DMatrix<f64>) -> Vec<String> {
    let (count, n) = states.shape();
    let half = count / 2;
    let mut warnings = Vec::new();
    let stats = |rows: std::ops::Range<usize>, j: usize| {
        let v: Vec<f64> = rows.map(|r| states[(r, j)]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / v.len() as f64;
        (m, var, m4, v.len() as f64)
    };
    for j in 0..n {
        let (m1, v1, q1, n1) = stats(0..half, j);
        let (m2, v2, q2, n2) = stats(half..count, j);
        let se_mean = (v1 / n1 + v2 / n2).sqrt();
        if (m1 - m2).abs() > 5.0 * se_mean {
            warnings.push(format!(
                "component {j}: half-sample means {m1:.6e} and {m2:.6e} differ by more than 5 standard errors"
            ));
        }
        let se_var = ((q1 - v1 * v1).max(0.0) / n1 + (q2 - v2 * v2).max(0.0) / n2).sqrt();
        if (v1 - v2).abs() > 5.0 * se_var && se_var > 0.0 {
            warnings.push(format!(
                "component {j}: half-sample variances {v1:.6e} and {v2:.6e} differ by more than 5 standard errors"
            ));
        }
    }
    let mean = states.row_mean();
    let mut cov = DMatrix::zeros(n, n);
    for r in 0..count {
        let d = states.row(r) - &mean;
        cov += d.transpose() * d;
    }
    cov /= (count - 1) as f64;
    let top = SymmetricEigen::new(cov.clone()).eigenvalues.amax();
    let low = SymmetricEigen::new(cov).eigenvalues.min();
    let scale = 1.0 + mean.norm_squared();
    if top <= 1e-12 * scale {
        warnings.push("sample has collapsed onto a point: the steady state is degenerate".into());
    } else if low <= 1e-12 * top {
        warnings.push("sample covariance is singular: the steady state is degenerate in some direction".into());
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{make_affine, make_burgers, make_linear};
    use crate::trialdensity::fit_psi;
    use nalgebra::DVector;

    #[test]
    fn decaying_system_is_flagged() {
        let sys = make_linear(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0])).unwrap();
        let s = equilibrium_sample(
            &sys,
            &EquilibriumOptions {
                initial: vec![1.0, 1.0],
                burn_t: 40.0,
                count: 200,
                dt: 0.01,
                spacing: 0.5,
                seed: 1,
            },
        )
        .unwrap();
        assert!(s.warnings.iter().any(|w| w.contains("degenerate")), "{:?}", s.warnings);
    }

    #[test]
    fn forced_linear_system_settles_at_fixed_point() {
        let u = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let f = DVector::from_vec(vec![1.0, 2.0]);
        let sys = make_affine(&u, &f).unwrap();
        let s = equilibrium_sample(
            &sys,
            &EquilibriumOptions {
                initial: vec![0.0, 0.0],
                burn_t: 30.0,
                count: 50,
                dt: 0.01,
                spacing: 0.1,
                seed: 2,
            },
        )
        .unwrap();
        let want = -u.try_inverse().unwrap() * f;
        let mean = s.states.row_mean();
        assert!((mean.transpose() - want).amax() < 1e-9);
    }

    #[test]
    fn forced_burgers_feeds_psi_fit() {
        let mut forcing = vec![0.0; 8];
        forcing[2] = 6.0;
        let (sys, _) = make_burgers(4, 0.1, &forcing).unwrap();
        let s = equilibrium_sample(
            &sys,
            &EquilibriumOptions {
                initial: vec![0.0; 8],
                burn_t: 50.0,
                count: 1000,
                dt: 0.005,
                spacing: 0.25,
                seed: 3,
            },
        )
        .unwrap();
        let fit = fit_psi(&s.states).unwrap();
        // The fitted Gaussian reproduces the sample moments exactly.
        let mean = s.states.row_mean().transpose();
        assert!((fit.moments.mean() - mean).amax() < 1e-12);
    }

    #[test]
    fn blow_up_is_an_error() {
        let x = crate::polymoment::Polynomial::var(1, 0);
        let sys = DynamicalSystem::new("riccati", vec![&x * &x]).unwrap();
        let r = equilibrium_sample(
            &sys,
            &EquilibriumOptions {
                initial: vec![3.0],
                burn_t: 10.0,
                count: 10,
                dt: 0.01,
                spacing: 0.1,
                seed: 0,
            },
        );
        assert!(matches!(r, Err(Error::BlowUp { .. })), "{r:?}");
    }
}
