use nalgebra::{DMatrix, DVector};

use super::DynamicalSystem;
use crate::error::{check_dim, Error, Result};
use crate::polymoment::Polynomial;

/// Split of a forced-dissipative drift into a conservative core, linear
/// modal damping `alpha(i) x_i` (no summation) and constant forcing `F(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenericDecomposition {
    pub conservative: Vec<Polynomial>,
    pub alpha: Vec<f64>,
    pub forcing: Vec<f64>,
}

impl GenericDecomposition {
    pub fn assemble(&self) -> Result<Vec<Polynomial>> {
        let n = self.conservative.len();
        check_dim(n, self.alpha.len())?;
        check_dim(n, self.forcing.len())?;
        if let Some(a) = self.alpha.iter().find(|&&a| a > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dissipation coefficient {a} is positive"
            )));
        }
        self.conservative
            .iter()
            .enumerate()
            .map(|(i, c)| {
                check_dim(n, c.nvars())?;
                let mut a = c.clone();
                a.add_scaled(&Polynomial::var(n, i), self.alpha[i])?;
                a.add_scaled(&Polynomial::constant(n, 1.0), self.forcing[i])?;
                Ok(a)
            })
            .collect()
    }

    /// The conservative core as a system in its own right.
    pub fn conservative_system(&self) -> Result<DynamicalSystem> {
        DynamicalSystem::new("conservative core", self.conservative.clone())
    }

    /// Term-by-term check against an assembled system.
    pub fn matches(&self, sys: &DynamicalSystem) -> bool {
        self.assemble().map(|d| d == sys.drift()).unwrap_or(false)
    }
}

/// `dx_i/dt = C_i(x) + alpha(i) x_i + F(i)`.
pub fn make_generic(
    name: &str,
    conservative: Vec<Polynomial>,
    alpha: Vec<f64>,
    forcing: Vec<f64>,
) -> Result<(DynamicalSystem, GenericDecomposition)> {
    let dec = GenericDecomposition {
        conservative,
        alpha,
        forcing,
    };
    let sys = DynamicalSystem::new(name, dec.assemble()?)?;
    Ok((sys, dec))
}

/// `dx/dt = U x`.
pub fn make_linear(u: &DMatrix<f64>) -> Result<DynamicalSystem> {
    make_affine(u, &DVector::zeros(u.nrows()))
}

/// `dx/dt = U x + c`.
pub fn make_affine(u: &DMatrix<f64>, c: &DVector<f64>) -> Result<DynamicalSystem> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "drift matrix must be square, got {}x{}",
            n,
            u.ncols()
        )));
    }
    check_dim(n, c.len())?;
    let drift = (0..n)
        .map(|i| {
            let mut a = Polynomial::constant(n, c[i]);
            for j in 0..n {
                a.add_scaled(&Polynomial::var(n, j), u[(i, j)])
                    .expect("same nvars");
            }
            a
        })
        .collect();
    let name = if c.iter().all(|&v| v == 0.0) { "linear" } else { "affine" };
    DynamicalSystem::new(name, drift)
}

/// Lorenz-63: `(sigma (y - x), x (rho - z) - y, x y - b z)`.
pub fn make_lorenz(sigma: f64, rho: f64, b: f64) -> DynamicalSystem {
    let t = |terms: &[(Vec<u16>, f64)]| Polynomial::from_terms(3, terms.to_vec()).expect("3 vars");
    let drift = vec![
        t(&[(vec![0, 1, 0], sigma), (vec![1, 0, 0], -sigma)]),
        t(&[(vec![1, 0, 0], rho), (vec![1, 0, 1], -1.0), (vec![0, 1, 0], -1.0)]),
        t(&[(vec![1, 1, 0], 1.0), (vec![0, 0, 1], -b)]),
    ];
    DynamicalSystem::new("lorenz", drift).expect("consistent dimensions")
}

/// Canonical harmonic oscillators: variables `(q_1, p_1, q_2, p_2, ...)`
/// with `dq/dt = w p`, `dp/dt = -w q`. Divergence free; `sum (q^2 + p^2) / 2`
/// is invariant.
pub fn make_oscillator(frequencies: &[f64]) -> DynamicalSystem {
    let n = 2 * frequencies.len();
    let mut drift = Vec::with_capacity(n);
    for (k, &w) in frequencies.iter().enumerate() {
        drift.push(Polynomial::var(n, 2 * k + 1).scale(w));
        drift.push(Polynomial::var(n, 2 * k).scale(-w));
    }
    DynamicalSystem::new("oscillator", drift).expect("consistent dimensions")
}

/// Real Fourier-Galerkin truncation of the forced viscous Burgers equation
/// `u_t + u u_x = nu u_xx + f` on `[0, 2 pi)`.
///
/// `u(x, t) = sum_{k=1..N} a_k cos(k x) + b_k sin(k x)`; variables are
/// ordered `(a_1, b_1, ..., a_N, b_N)` and the advective term is projected
/// onto wavenumbers `1..=N`. The mean mode is absent (it is conserved).
/// `forcing` holds the constant projection of `f` in the same ordering.
/// Modal damping is `alpha = -nu k^2`.
pub fn make_burgers(
    modes: usize,
    nu: f64,
    forcing: &[f64],
) -> Result<(DynamicalSystem, GenericDecomposition)> {
    if modes < 2 {
        return Err(Error::InvalidArgument(format!(
            "burgers truncation needs at least 2 modes, got {modes}"
        )));
    }
    if nu < 0.0 {
        return Err(Error::InvalidArgument(format!("viscosity {nu} is negative")));
    }
    let n = 2 * modes;
    check_dim(n, forcing.len())?;

    // Complex coefficient u_hat_p = (a_|p| - i sign(p) b_|p|) / 2 as (re, im).
    let uhat = |p: i64| -> (Polynomial, Polynomial) {
        let k = p.unsigned_abs() as usize;
        let re = Polynomial::var(n, 2 * (k - 1)).scale(0.5);
        let im = Polynomial::var(n, 2 * (k - 1) + 1).scale(if p > 0 { -0.5 } else { 0.5 });
        (re, im)
    };
    let m = modes as i64;
    let mut conservative = Vec::with_capacity(n);
    for k in 1..=m {
        // S_k = sum_{p + q = k} u_hat_p u_hat_q over retained nonzero wavenumbers.
        let mut s_re = Polynomial::zero(n);
        let mut s_im = Polynomial::zero(n);
        for p in -m..=m {
            let q = k - p;
            if p == 0 || q == 0 || q.abs() > m {
                continue;
            }
            let (pr, pi) = uhat(p);
            let (qr, qi) = uhat(q);
            s_re.add_scaled(&(&pr * &qr), 1.0)?;
            s_re.add_scaled(&(&pi * &qi), -1.0)?;
            s_im.add_scaled(&(&pr * &qi), 1.0)?;
            s_im.add_scaled(&(&pi * &qr), 1.0)?;
        }
        // d u_hat_k / dt = -(i k / 2) S_k, so a_k' = k Im S_k and b_k' = k Re S_k.
        let kf = k as f64;
        conservative.push(s_im.scale(kf));
        conservative.push(s_re.scale(kf));
    }
    let alpha = (1..=modes)
        .flat_map(|k| {
            let a = -nu * (k * k) as f64;
            [a, a]
        })
        .collect();
    make_generic("burgers", conservative, alpha, forcing.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Projection of `-u u_x` onto the retained Fourier modes by grid
    /// quadrature, independent of the symbolic construction.
    fn spectral_advection(x: &[f64], modes: usize) -> Vec<f64> {
        let grid = 64;
        let mut out = vec![0.0; 2 * modes];
        for g in 0..grid {
            let s = 2.0 * PI * g as f64 / grid as f64;
            let mut u = 0.0;
            let mut ux = 0.0;
            for k in 1..=modes {
                let (a, b) = (x[2 * (k - 1)], x[2 * (k - 1) + 1]);
                let kf = k as f64;
                u += a * (kf * s).cos() + b * (kf * s).sin();
                ux += kf * (-a * (kf * s).sin() + b * (kf * s).cos());
            }
            let f = -u * ux;
            for k in 1..=modes {
                let kf = k as f64;
                out[2 * (k - 1)] += f * (kf * s).cos() * 2.0 / grid as f64;
                out[2 * (k - 1) + 1] += f * (kf * s).sin() * 2.0 / grid as f64;
            }
        }
        out
    }

    #[test]
    fn burgers_matches_grid_projection() {
        let (sys, dec) = make_burgers(4, 0.0, &[0.0; 8]).unwrap();
        let x = [0.3, -1.2, 0.8, 0.1, -0.5, 0.45, 0.2, -0.7];
        let a = sys.drift_eval(&x).unwrap();
        let want = spectral_advection(&x, 4);
        for (u, v) in a.iter().zip(&want) {
            assert!((u - v).abs() < 1e-12, "{a:?} vs {want:?}");
        }
        assert!(dec.matches(&sys));
    }

    #[test]
    fn inviscid_burgers_is_divergence_free_and_conserves_energy() {
        let (sys, _) = make_burgers(4, 0.0, &[0.0; 8]).unwrap();
        assert!(sys.divergence_poly().is_zero());
        let mut energy = Polynomial::zero(8);
        for i in 0..8 {
            let xi = Polynomial::var(8, i);
            energy.add_scaled(&(&xi * &xi), 0.5).unwrap();
        }
        let le = sys.apply_lstar(&energy).unwrap();
        assert!(le.max_abs_coefficient() < 1e-14, "{le}");
    }

    #[test]
    fn viscous_burgers_divergence_sums_alpha() {
        let (sys, dec) = make_burgers(3, 1.0, &[0.0; 6]).unwrap();
        let want = -(1.0 + 4.0 + 9.0) * 2.0;
        assert_eq!(*sys.divergence_poly(), Polynomial::constant(6, want));
        assert_eq!(dec.alpha.iter().sum::<f64>(), want);
    }

    #[test]
    fn burgers_argument_errors() {
        assert!(make_burgers(1, 0.1, &[0.0; 2]).is_err());
        assert!(make_burgers(3, 0.1, &[0.0; 5]).is_err());
    }

    #[test]
    fn linear_builtins() {
        let s = make_linear(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!(s.drift()[0], Polynomial::var(1, 0).scale(-1.0));
        assert_eq!(*s.divergence_poly(), Polynomial::constant(1, -1.0));
        let z = make_linear(&DMatrix::zeros(2, 2)).unwrap();
        assert!(z.drift().iter().all(Polynomial::is_zero));
        let rot = make_linear(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        assert!(rot.divergence_poly().is_zero());
        assert!(make_linear(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn positive_alpha_is_rejected() {
        let r = make_generic("bad", vec![Polynomial::zero(1)], vec![0.5], vec![0.0]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
