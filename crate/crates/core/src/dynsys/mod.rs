//! Autonomous dynamical systems `dx/dt = A(x)` with polynomial drift, the
//! Liouville operators built from them, and a few builtin test systems.

mod builtins;

pub use builtins::{
    make_affine, make_burgers, make_generic, make_linear, make_lorenz, make_oscillator,
    GenericDecomposition,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::polymoment::Polynomial;

/// Polynomial drift `A_i(x)` together with its cached divergence.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicalSystem {
    name: String,
    drift: Vec<Polynomial>,
    divergence: Polynomial,
    compiled: Vec<Vec<(f64, Vec<usize>)>>,
}

impl DynamicalSystem {
    pub fn new(name: impl Into<String>, drift: Vec<Polynomial>) -> Result<Self> {
        let n = drift.len();
        if n == 0 {
            return Err(Error::InvalidArgument("system needs at least one variable".into()));
        }
        for a in &drift {
            check_dim(n, a.nvars())?;
        }
        let mut divergence = Polynomial::zero(n);
        for (i, a) in drift.iter().enumerate() {
            divergence.add_scaled(&a.partial(i)?, 1.0)?;
        }
        let compiled = drift
            .iter()
            .map(|a| {
                a.terms()
                    .map(|(m, c)| {
                        let factors = m
                            .exponents()
                            .iter()
                            .enumerate()
                            .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
                            .collect();
                        (c, factors)
                    })
                    .collect()
            })
            .collect();
        Ok(DynamicalSystem {
            name: name.into(),
            drift,
            divergence,
            compiled,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn drift(&self) -> &[Polynomial] {
        &self.drift
    }

    /// `L^d = sum_i dA_i/dx_i`.
    pub fn divergence_poly(&self) -> &Polynomial {
        &self.divergence
    }

    pub fn drift_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        self.drift.iter().map(|a| a.eval(x)).collect()
    }

    /// Unchecked evaluation into a buffer, for integrators.
    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.compiled) {
            *o = terms
                .iter()
                .map(|(c, factors)| factors.iter().fold(*c, |acc, &i| acc * x[i]))
                .sum();
        }
    }

    /// `L* F = -A_i dF/dx_i`.
    pub fn apply_lstar(&self, f: &Polynomial) -> Result<Polynomial> {
        check_dim(self.dim(), f.nvars())?;
        let mut out = Polynomial::zero(self.dim());
        for (i, a) in self.drift.iter().enumerate() {
            let d = f.partial(i)?;
            if d.is_zero() {
                continue;
            }
            out.add_scaled(&a.try_mul(&d)?, -1.0)?;
        }
        Ok(out)
    }

    /// `L F = d(A_i F)/dx_i`, so that `L + L* = L^d`.
    pub fn apply_l(&self, f: &Polynomial) -> Result<Polynomial> {
        check_dim(self.dim(), f.nvars())?;
        let mut out = Polynomial::zero(self.dim());
        for (i, a) in self.drift.iter().enumerate() {
            out.add_scaled(&a.try_mul(f)?.partial(i)?, 1.0)?;
        }
        Ok(out)
    }

    /// Recomputes `sum_i dA_i/dx_i` and compares it with the cached value.
    pub fn divergence_consistent(&self) -> bool {
        let mut d = Polynomial::zero(self.dim());
        for (i, a) in self.drift.iter().enumerate() {
            d.add_scaled(&a.partial(i).expect("index in range"), 1.0)
                .expect("same nvars");
        }
        d == self.divergence
    }

    pub fn max_degree(&self) -> usize {
        self.drift.iter().filter_map(Polynomial::degree).max().unwrap_or(0)
    }

    /// For drift of degree at most one, returns `(U, c)` with `A(x) = U x + c`.
    pub fn affine_parts(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if self.max_degree() > 1 {
            return Err(Error::Unsupported(format!(
                "{} has drift of degree {}; an affine drift is required",
                self.name,
                self.max_degree()
            )));
        }
        let n = self.dim();
        let mut u = DMatrix::zeros(n, n);
        let mut c = DVector::zeros(n);
        for (i, a) in self.drift.iter().enumerate() {
            for (m, coef) in a.terms() {
                match m.exponents().iter().position(|&e| e == 1) {
                    Some(j) => u[(i, j)] = coef,
                    None => c[i] = coef,
                }
            }
        }
        Ok((u, c))
    }

    /// One classical fourth-order Runge-Kutta step, in place.
    pub fn rk4_step(&self, x: &mut [f64], dt: f64, work: &mut Rk4Work) {
        let n = x.len();
        work.ensure(n);
        let Rk4Work { k1, k2, k3, k4, tmp } = work;
        self.drift_into(x, k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        self.drift_into(tmp, k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        self.drift_into(tmp, k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        self.drift_into(tmp, k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Scratch buffers for [`DynamicalSystem::rk4_step`].
#[derive(Default)]
pub struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn ensure(&mut self, n: usize) {
        if self.k1.len() != n {
            for v in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
                v.resize(n, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_drift_evaluation() {
        let sys = make_linear(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0])).unwrap();
        assert_eq!(sys.drift_eval(&[1.0, 2.0]).unwrap(), vec![-1.0, -2.0]);
        assert!(matches!(sys.drift_eval(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn lorenz_at_unit_point() {
        let sys = make_lorenz(10.0, 28.0, 8.0 / 3.0);
        let a = sys.drift_eval(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 26.0);
        assert!((a[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        // fixed point (sqrt(b(r-1)), sqrt(b(r-1)), r-1)
        let c = (8.0 / 3.0 * 27.0f64).sqrt();
        let z = sys.drift_eval(&[c, c, 27.0]).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12), "{z:?}");
    }

    #[test]
    fn lstar_of_coordinate_and_constant() {
        let u = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let sys = make_linear(&u).unwrap();
        let lx = sys.apply_lstar(&Polynomial::var(2, 1)).unwrap();
        let want = Polynomial::from_terms(2, [(vec![1, 0], -0.5), (vec![0, 1], 3.0)]).unwrap();
        assert_eq!(lx, want);
        assert!(sys.apply_lstar(&Polynomial::constant(2, 4.0)).unwrap().is_zero());
    }

    #[test]
    fn l_plus_lstar_is_multiplication_by_divergence() {
        let sys = make_lorenz(10.0, 28.0, 8.0 / 3.0);
        let f = Polynomial::from_terms(3, [(vec![1, 1, 0], 0.7), (vec![0, 0, 2], -1.3), (vec![1, 0, 0], 2.0)])
            .unwrap();
        let lhs = &sys.apply_l(&f).unwrap() + &sys.apply_lstar(&f).unwrap();
        let rhs = &f * sys.divergence_poly();
        let diff = &lhs - &rhs;
        assert!(diff.max_abs_coefficient() < 1e-12, "{diff}");
    }

    #[test]
    fn divergences_of_builtins() {
        let lorenz = make_lorenz(10.0, 28.0, 8.0 / 3.0);
        let d = lorenz.divergence_poly();
        assert_eq!(d.degree(), Some(0));
        assert!((d.constant_term() + (10.0 + 1.0 + 8.0 / 3.0)).abs() < 1e-14);
        assert!(make_oscillator(&[1.0, 2.5]).divergence_poly().is_zero());
        let (g, _) = make_generic(
            "generic",
            vec![Polynomial::zero(3), Polynomial::zero(3), Polynomial::zero(3)],
            vec![-1.0, -2.0, -3.0],
            vec![0.5, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(*g.divergence_poly(), Polynomial::constant(3, -6.0));
        for sys in [lorenz, make_burgers(3, 0.2, &[0.0; 6]).unwrap().0, g] {
            assert!(sys.divergence_consistent());
        }
    }

    #[test]
    fn affine_parts_round_trip() {
        let u = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]);
        let c = DVector::from_vec(vec![0.5, -1.0]);
        let sys = make_affine(&u, &c).unwrap();
        let (u2, c2) = sys.affine_parts().unwrap();
        assert_eq!(u2, u);
        assert_eq!(c2, c);
        assert!(matches!(
            make_lorenz(10.0, 28.0, 1.0).affine_parts(),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rk4_is_fourth_order_on_linear_decay() {
        let sys = make_linear(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        let err = |dt: f64| {
            let mut x = [1.0];
            let mut w = Rk4Work::default();
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                sys.rk4_step(&mut x, dt, &mut w);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }
}
