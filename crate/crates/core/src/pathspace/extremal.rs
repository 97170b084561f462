use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use super::{DiscretePath, EndpointMode, PathAction};
use crate::error::{check_dim, Error, Result};

/// Descent method for [`extremal_path`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    /// Damped Newton on the block-tridiagonal Hessian of the action.
    Newton,
    /// Limited-memory BFGS with backtracking.
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalOptions {
    pub solver: Solver,
    /// Stop when `|grad S| <= tolerance (1 + |S|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub lbfgs_memory: usize,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions {
            solver: Solver::Newton,
            tolerance: 1e-8,
            max_iterations: 200,
            lbfgs_memory: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalResult {
    pub path: DiscretePath,
    pub action: f64,
    pub initial_action: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// False when the iteration cap or a stalled line search ended the
    /// descent; the path is then the best found.
    pub converged: bool,
}

/// Classical path from `start` over `[t0, t1]` with `segments` segments,
/// ending at `end` or free when `end` is `None`. Descent starts from the
/// straight line (the constant path when the end is free).
pub fn extremal_path<A: PathAction + ?Sized>(
    action: &A,
    t0: f64,
    t1: f64,
    start: &[f64],
    end: Option<&[f64]>,
    segments: usize,
    options: &ExtremalOptions,
) -> Result<ExtremalResult> {
    let (initial, mode) = match end {
        Some(e) => (DiscretePath::straight_line(t0, t1, start, e, segments)?, EndpointMode::FixedBoth),
        None => (DiscretePath::straight_line(t0, t1, start, start, segments)?, EndpointMode::FixedStartFreeEnd),
    };
    refine_path(action, initial, mode, options)
}

/// Descends from an arbitrary initial path, holding the knots fixed by `mode`.
pub fn refine_path<A: PathAction + ?Sized>(
    action: &A,
    initial: DiscretePath,
    mode: EndpointMode,
    options: &ExtremalOptions,
) -> Result<ExtremalResult> {
    check_dim(action.dim(), initial.dim())?;
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
    }
    let problem = Problem::new(action, initial, mode);
    let initial_action = problem.value(&problem.x0);
    if !initial_action.is_finite() {
        return Err(Error::NonNormalizable("initial path leaves the trial manifold".into()));
    }
    let out = match options.solver {
        Solver::Newton => newton(&problem, options),
        Solver::Lbfgs => lbfgs(&problem, options),
    };
    let path = problem.path(&out.x);
    Ok(ExtremalResult {
        path,
        action: out.value,
        initial_action,
        gradient_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
    })
}

struct Problem<'a, A: ?Sized> {
    action: &'a A,
    template: DiscretePath,
    free: std::ops::Range<usize>,
    d: usize,
    x0: Vec<f64>,
}

struct Outcome {
    x: Vec<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

impl<'a, A: PathAction + ?Sized> Problem<'a, A> {
    fn new(action: &'a A, template: DiscretePath, mode: EndpointMode) -> Self {
        let free = mode.free_knots(template.segments());
        let d = template.dim();
        let x0 = template.knots()[free.clone()].concat();
        Problem {
            action,
            template,
            free,
            d,
            x0,
        }
    }

    fn knots(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut knots = self.template.knots().to_vec();
        for (j, k) in self.free.clone().enumerate() {
            knots[k].copy_from_slice(&x[j * self.d..(j + 1) * self.d]);
        }
        knots
    }

    fn path(&self, x: &[f64]) -> DiscretePath {
        DiscretePath::new(self.template.t0(), self.template.t1(), self.knots(x)).expect("same shape as template")
    }

    fn value(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        self.action.action(&self.path(x))
    }

    /// Free coordinate offset of knot `k`, if free.
    fn slot(&self, k: usize) -> Option<usize> {
        self.free.contains(&k).then(|| (k - self.free.start) * self.d)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let knots = self.knots(x);
        if knots.iter().any(|k| !self.action.admissible(k)) {
            return None;
        }
        let dt = self.template.dt();
        let parts: Vec<_> = (0..knots.len() - 1)
            .into_par_iter()
            .map(|k| self.action.segment_gradient(&knots[k], &knots[k + 1], dt))
            .collect();
        let mut s = 0.0;
        let mut g = vec![0.0; x.len()];
        for (k, part) in parts.into_iter().enumerate() {
            let (sk, ga, gb) = part?;
            s += sk;
            if let Some(o) = self.slot(k) {
                g[o..o + self.d].iter_mut().zip(&ga).for_each(|(a, b)| *a += b);
            }
            if let Some(o) = self.slot(k + 1) {
                g[o..o + self.d].iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
            }
        }
        s.is_finite().then_some((s, g))
    }

    /// Symmetrized `2d x 2d` Hessian of every segment by central
    /// differences of its gradient.
    fn segment_hessians(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let knots = self.knots(x);
        let dt = self.template.dt();
        let d = self.d;
        (0..knots.len() - 1)
            .into_par_iter()
            .map(|k| {
                let mut z: Vec<f64> = knots[k].iter().chain(&knots[k + 1]).copied().collect();
                let mut h = DMatrix::zeros(2 * d, 2 * d);
                for i in 0..2 * d {
                    let orig = z[i];
                    let step = 1e-5 * (1.0 + orig.abs());
                    z[i] = orig + step;
                    let (_, ua, ub) = self.action.segment_gradient(&z[..d], &z[d..], dt)?;
                    z[i] = orig - step;
                    let (_, da, db) = self.action.segment_gradient(&z[..d], &z[d..], dt)?;
                    z[i] = orig;
                    for j in 0..d {
                        h[(j, i)] = (ua[j] - da[j]) / (2.0 * step);
                        h[(d + j, i)] = (ub[j] - db[j]) / (2.0 * step);
                    }
                }
                Some((&h + h.transpose()) * 0.5)
            })
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

/// Backtracking Armijo search along `p`; returns the accepted point and value.
fn line_search<A: PathAction + ?Sized>(
    problem: &Problem<'_, A>,
    x: &[f64],
    s: f64,
    slope: f64,
    p: &[f64],
    first: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut alpha = first;
    for _ in 0..50 {
        let trial = axpy(x, alpha, p);
        let st = problem.value(&trial);
        if st.is_finite() && st <= s + 1e-4 * alpha * slope + 4.0 * f64::EPSILON * s.abs() {
            return Some((trial, st));
        }
        alpha *= 0.5;
    }
    None
}

/// Solves the block-tridiagonal system `(H + mu I) p = rhs` by block
/// elimination; `None` if a pivot block is not positive definite.
fn block_solve(
    diag: &[DMatrix<f64>],
    off: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
    mu: f64,
) -> Option<Vec<DVector<f64>>> {
    let m = diag.len();
    let d = diag[0].nrows();
    let mut factors: Vec<Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(m);
    let mut y: Vec<DVector<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut s = &diag[i] + DMatrix::identity(d, d) * mu;
        let mut r = rhs[i].clone();
        if i > 0 {
            // off[i-1] couples block i-1 (rows) to block i (columns).
            let o = &off[i - 1];
            let sinv_o = factors[i - 1].solve(o);
            s -= o.transpose() * sinv_o;
            r -= o.transpose() * factors[i - 1].solve(&y[i - 1]);
        }
        factors.push(Cholesky::new((&s + s.transpose()) * 0.5)?);
        y.push(r);
    }
    let mut x = vec![DVector::zeros(d); m];
    for i in (0..m).rev() {
        let mut r = y[i].clone();
        if i + 1 < m {
            r -= &off[i] * &x[i + 1];
        }
        x[i] = factors[i].solve(&r);
    }
    Some(x)
}

fn newton<A: PathAction + ?Sized>(problem: &Problem<'_, A>, options: &ExtremalOptions) -> Outcome {
    let d = problem.d;
    let m = problem.free.len();
    let mut x = problem.x0.clone();
    let (mut s, mut g) = match problem.value_and_gradient(&x) {
        Some(v) => v,
        None => return stalled(x, f64::INFINITY, f64::INFINITY, 0),
    };
    let mut mu = 0.0;
    for iter in 0..options.max_iterations {
        let gn = norm(&g);
        if gn <= options.tolerance * (1.0 + s.abs()) || m == 0 {
            return Outcome {
                x,
                value: s,
                grad_norm: gn,
                iterations: iter,
                converged: true,
            };
        }
        let Some(hs) = problem.segment_hessians(&x) else {
            return stalled(x, s, gn, iter);
        };
        let first = problem.free.start;
        let mut diag = vec![DMatrix::zeros(d, d); m];
        let mut off = vec![DMatrix::zeros(d, d); m.saturating_sub(1)];
        for (j, blk) in diag.iter_mut().enumerate() {
            let k = first + j;
            if k > 0 {
                *blk += hs[k - 1].view((d, d), (d, d));
            }
            if k < hs.len() {
                *blk += hs[k].view((0, 0), (d, d));
            }
            if j + 1 < m {
                off[j] = hs[k].view((0, d), (d, d)).into_owned();
            }
        }
        let scale = diag.iter().map(|b| b.amax()).fold(0.0, f64::max).max(1e-300);
        let rhs: Vec<DVector<f64>> = (0..m).map(|j| -DVector::from_column_slice(&g[j * d..(j + 1) * d])).collect();
        let mut moved = false;
        while mu <= 1e10 * scale {
            if let Some(p) = block_solve(&diag, &off, &rhs, mu) {
                let p: Vec<f64> = p.iter().flat_map(|v| v.iter().copied()).collect();
                let slope = dot(&g, &p);
                if slope < 0.0 {
                    if let Some((xn, _)) = line_search(problem, &x, s, slope, &p, 1.0) {
                        if let Some((sn, gnew)) = problem.value_and_gradient(&xn) {
                            x = xn;
                            s = sn;
                            g = gnew;
                            mu = if mu > 1e-12 * scale { mu * 0.1 } else { 0.0 };
                            moved = true;
                            break;
                        }
                    }
                }
            }
            mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
        }
        if !moved {
            return stalled(x, s, gn, iter);
        }
    }
    let gn = norm(&g);
    Outcome {
        converged: gn <= options.tolerance * (1.0 + s.abs()),
        x,
        value: s,
        grad_norm: gn,
        iterations: options.max_iterations,
    }
}

fn stalled(x: Vec<f64>, value: f64, grad_norm: f64, iterations: usize) -> Outcome {
    Outcome {
        x,
        value,
        grad_norm,
        iterations,
        converged: false,
    }
}

fn lbfgs<A: PathAction + ?Sized>(problem: &Problem<'_, A>, options: &ExtremalOptions) -> Outcome {
    let mut x = problem.x0.clone();
    let (mut s, mut g) = match problem.value_and_gradient(&x) {
        Some(v) => v,
        None => return stalled(x, f64::INFINITY, f64::INFINITY, 0),
    };
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    for iter in 0..options.max_iterations {
        let gn = norm(&g);
        if gn <= options.tolerance * (1.0 + s.abs()) || x.is_empty() {
            return Outcome {
                x,
                value: s,
                grad_norm: gn,
                iterations: iter,
                converged: true,
            };
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (sv, yv, rho) in hist.iter().rev() {
            let a = rho * dot(sv, &q);
            q = axpy(&q, -a, yv);
            alphas.push(a);
        }
        let gamma = hist
            .back()
            .map(|(sv, yv, _)| dot(sv, yv) / dot(yv, yv))
            .unwrap_or(1.0 / gn.max(1.0));
        let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
        for ((sv, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &r);
            r = axpy(&r, a - b, sv);
        }
        let mut p: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            hist.clear();
            p = g.iter().map(|v| -v / gn.max(1.0)).collect();
            slope = dot(&g, &p);
        }
        let Some((xn, _)) = line_search(problem, &x, s, slope, &p, 1.0) else {
            if hist.is_empty() {
                return stalled(x, s, gn, iter);
            }
            hist.clear();
            continue;
        };
        let Some((sn, gnew)) = problem.value_and_gradient(&xn) else {
            return stalled(x, s, gn, iter);
        };
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-12 * norm(&sv) * norm(&yv) {
            if hist.len() == options.lbfgs_memory.max(1) {
                hist.pop_front();
            }
            hist.push_back((sv, yv, 1.0 / sy));
        }
        x = xn;
        s = sn;
        g = gnew;
    }
    let gn = norm(&g);
    Outcome {
        converged: gn <= options.tolerance * (1.0 + s.abs()),
        x,
        value: s,
        grad_norm: gn,
        iterations: options.max_iterations,
    }
}
