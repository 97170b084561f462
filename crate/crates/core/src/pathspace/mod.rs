//! Discretized paths `lambda(t)` over a trial family: actions, extremal
//! (classical) paths and Metropolis sampling of the path measure
//! `exp(-S[lambda])`.

mod consistency;
mod extremal;
mod mcmc;

pub use consistency::{consistency_distribution, ConsistencyDistribution, MIN_DRAWS};
pub use extremal::{extremal_path, refine_path, ExtremalOptions, ExtremalResult, Solver};
pub use mcmc::{metropolis_acceptance, mcmc_sample, write_chain_csv, ChainResult, McmcConfig, McmcResult};

use crate::error::{Error, Result};

/// Uniform time grid with one natural-parameter vector per knot.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath {
    t0: f64,
    t1: f64,
    knots: Vec<Vec<f64>>,
}

impl DiscretePath {
    pub fn new(t0: f64, t1: f64, knots: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a path needs at least 2 knots, got {}",
                knots.len()
            )));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid time interval [{t0}, {t1}]")));
        }
        let d = knots[0].len();
        for k in &knots {
            crate::error::check_dim(d, k.len())?;
        }
        Ok(DiscretePath { t0, t1, knots })
    }

    /// `segments + 1` knots evaluated from `f` on the grid.
    pub fn from_fn(t0: f64, t1: f64, segments: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let dt = (t1 - t0) / segments.max(1) as f64;
        Self::new(t0, t1, (0..=segments).map(|k| f(t0 + k as f64 * dt)).collect())
    }

    pub fn straight_line(t0: f64, t1: f64, start: &[f64], end: &[f64], segments: usize) -> Result<Self> {
        crate::error::check_dim(start.len(), end.len())?;
        let n = segments.max(1);
        let knots = (0..=n)
            .map(|k| match k {
                0 => start.to_vec(),
                k if k == n => end.to_vec(),
                k => {
                    let s = k as f64 / n as f64;
                    start.iter().zip(end).map(|(a, b)| a + s * (b - a)).collect()
                }
            })
            .collect();
        Self::new(t0, t1, knots)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Number of segments `N`.
    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.segments() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt()
    }

    pub fn dim(&self) -> usize {
        self.knots[0].len()
    }

    pub fn knots(&self) -> &[Vec<f64>] {
        &self.knots
    }

    pub fn knot(&self, k: usize) -> &[f64] {
        &self.knots[k]
    }

    pub fn start(&self) -> &[f64] {
        &self.knots[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.knots[self.knots.len() - 1]
    }

    pub fn set_knot(&mut self, k: usize, value: Vec<f64>) -> Result<()> {
        crate::error::check_dim(self.dim(), value.len())?;
        self.knots[k] = value;
        Ok(())
    }

    /// Joins `self` and `next`, which must share the junction knot and step.
    pub fn concat(&self, next: &DiscretePath) -> Result<Self> {
        let tol = 1e-12 * (1.0 + self.t1.abs());
        if (self.t1 - next.t0).abs() > tol || (self.dt() - next.dt()).abs() > tol || self.end() != next.start() {
            return Err(Error::InvalidArgument("paths do not join on a common grid".into()));
        }
        let mut knots = self.knots.clone();
        knots.extend_from_slice(&next.knots[1..]);
        Self::new(self.t0, next.t1, knots)
    }
}

/// Boundary conditions on a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndpointMode {
    /// Both end knots held fixed.
    FixedBoth,
    /// The start is fixed and the final knot is free.
    FixedStartFreeEnd,
}

impl EndpointMode {
    /// Index range of the free knots on a path with `segments` segments.
    pub fn free_knots(self, segments: usize) -> std::ops::Range<usize> {
        match self {
            EndpointMode::FixedBoth => 1..segments,
            EndpointMode::FixedStartFreeEnd => 1..segments + 1,
        }
    }
}

/// A discrete action that is a sum of per-segment terms `s(a, b, dt)`.
pub trait PathAction: Sync {
    /// Dimension of one knot.
    fn dim(&self) -> usize;

    /// Contribution of the segment from knot `a` to knot `b`; `f64::INFINITY`
    /// when undefined.
    fn segment(&self, a: &[f64], b: &[f64], dt: f64) -> f64;

    /// Segment value and its gradients with respect to `a` and `b`, or
    /// `None` when undefined. Defaults to central differences.
    fn segment_gradient(&self, a: &[f64], b: &[f64], dt: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let s = self.segment(a, b, dt);
        if !s.is_finite() {
            return None;
        }
        let d = a.len();
        let mut x: Vec<f64> = a.iter().chain(b).copied().collect();
        let mut grad = vec![0.0; 2 * d];
        for i in 0..2 * d {
            let h = 1e-6 * (1.0 + x[i].abs());
            let orig = x[i];
            x[i] = orig + h;
            let up = self.segment(&x[..d], &x[d..], dt);
            x[i] = orig - h;
            let down = self.segment(&x[..d], &x[d..], dt);
            x[i] = orig;
            grad[i] = (up - down) / (2.0 * h);
        }
        let gb = grad.split_off(d);
        Some((s, grad, gb))
    }

    /// Whether a knot lies in the domain of the action.
    fn admissible(&self, _knot: &[f64]) -> bool {
        true
    }

    /// Sum of segment terms; `f64::INFINITY` if any knot is inadmissible.
    fn action(&self, path: &DiscretePath) -> f64 {
        if path.knots().iter().any(|k| !self.admissible(k)) {
            return f64::INFINITY;
        }
        let dt = path.dt();
        path.knots().windows(2).map(|w| self.segment(&w[0], &w[1], dt)).sum()
    }
}

/// Finite-difference action gradient over the free knot coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionGradient {
    /// Flattened `(knot, component)` over the free knots.
    pub gradient: Vec<f64>,
    /// Set when some probe left the domain and a one-sided difference was used.
    pub one_sided: bool,
}

impl ActionGradient {
    pub fn norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Central differences of the action with step `1e-6 (1 + |lambda|)`.
/// Only the segments adjacent to a knot are re-evaluated.
pub fn action_gradient<A: PathAction + ?Sized>(
    action: &A,
    path: &DiscretePath,
    mode: EndpointMode,
) -> Result<ActionGradient> {
    crate::error::check_dim(action.dim(), path.dim())?;
    let n = path.segments();
    let dt = path.dt();
    let mut knots = path.knots().to_vec();
    let local = |knots: &[Vec<f64>], k: usize| -> f64 {
        if !action.admissible(&knots[k]) {
            return f64::INFINITY;
        }
        let mut s = 0.0;
        if k > 0 {
            s += action.segment(&knots[k - 1], &knots[k], dt);
        }
        if k < n {
            s += action.segment(&knots[k], &knots[k + 1], dt);
        }
        s
    };
    let mut gradient = Vec::new();
    let mut one_sided = false;
    for k in mode.free_knots(n) {
        let base = local(&knots, k);
        if !base.is_finite() {
            return Err(Error::NonNormalizable(format!("knot {k} is outside the trial manifold")));
        }
        for i in 0..path.dim() {
            let orig = knots[k][i];
            let h = 1e-6 * (1.0 + orig.abs());
            knots[k][i] = orig + h;
            let up = local(&knots, k);
            knots[k][i] = orig - h;
            let down = local(&knots, k);
            knots[k][i] = orig;
            let g = match (up.is_finite(), down.is_finite()) {
                (true, true) => (up - down) / (2.0 * h),
                (true, false) => {
                    one_sided = true;
                    (up - base) / h
                }
                (false, true) => {
                    one_sided = true;
                    (base - down) / h
                }
                (false, false) => {
                    return Err(Error::NonNormalizable(format!(
                        "both probes of knot {k} component {i} left the trial manifold"
                    )))
                }
            };
            gradient.push(g);
        }
    }
    Ok(ActionGradient { gradient, one_sided })
}

#[cfg(test)]
mod tests;
