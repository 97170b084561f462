use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynsys::{DynamicalSystem, Rk4Work};
use crate::error::{check_dim, Error, Result};
use crate::trialdensity::{gaussian_factor, TrialPoint};

/// Trajectories whose state leaves this box are dropped.
pub const BLOW_UP_BOUND: f64 = 1e12;

/// Trajectories are reduced in fixed-size chunks so that sums do not
/// depend on the thread count.
const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleOptions {
    pub count: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// Record every this many steps (the final time is always recorded).
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// `times x Q` ensemble means.
    pub moments: DMatrix<f64>,
    /// Standard errors of [`EnsembleResult::moments`].
    pub stderr: DMatrix<f64>,
    /// Trajectories that stayed bounded.
    pub used: usize,
    pub blown_up: usize,
}

/// Running mean and sum of squared deviations.
#[derive(Clone)]
struct Accum {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accum {
    fn new(len: usize) -> Self {
        Accum {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Accum) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
    }
}

/// Draws `count` initial states from `start` and integrates each with RK4,
/// recording ensemble means of the family's `Q` with standard errors.
/// Trajectory `i` draws its initial state from stream `i` of a ChaCha
/// generator seeded with `seed`.
pub fn ensemble_evolve(sys: &DynamicalSystem, start: &TrialPoint<'_>, opts: &EnsembleOptions) -> Result<EnsembleResult> {
    let family = start.family();
    check_dim(sys.dim(), family.dim())?;
    if opts.count < 100 {
        return Err(Error::TooFewSamples {
            needed: 100,
            found: opts.count,
        });
    }
    if !(opts.dt > 0.0 && opts.t_end > 0.0) || opts.record_every == 0 {
        return Err(Error::InvalidArgument("dt, t_end and record_every must be positive".into()));
    }
    let n = sys.dim();
    let steps = (opts.t_end / opts.dt).round().max(1.0) as usize;
    let dt = opts.t_end / steps as f64;
    let mut record: Vec<usize> = (0..=steps).step_by(opts.record_every).collect();
    if *record.last().expect("non-empty") != steps {
        record.push(steps);
    }
    let times: Vec<f64> = record.iter().map(|&s| s as f64 * dt).collect();
    let nq = family.len();
    let width = record.len() * nq;
    let g = start.to_gaussian();
    let factor = gaussian_factor(&g)?;

    let trajectory = |index: usize| -> Option<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(index as u64);
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let mut x: Vec<f64> = (g.mean() + &factor * z).iter().copied().collect();
        let mut work = Rk4Work::default();
        let mut out = Vec::with_capacity(width);
        let mut next = 0;
        for step in 0..=steps {
            if step > 0 {
                sys.rk4_step(&mut x, dt, &mut work);
                if x.iter().any(|v| !(v.abs() <= BLOW_UP_BOUND)) {
                    return None;
                }
            }
            if record[next] == step {
                for q in family.q() {
                    out.push(q.eval(&x).expect("dimension checked"));
                }
                next += 1;
            }
        }
        Some(out)
    };

    let chunks: Vec<(Accum, usize)> = (0..opts.count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Accum::new(width);
            let mut lost = 0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(opts.count) {
                match trajectory(i) {
                    Some(v) => acc.push(&v),
                    None => lost += 1,
                }
            }
            (acc, lost)
        })
        .collect();
    let mut total = Accum::new(width);
    let mut blown_up = 0;
    for (acc, lost) in &chunks {
        total.merge(acc);
        blown_up += lost;
    }
    let used = total.n as usize;
    if used < 2 {
        return Err(Error::BlowUp { time: opts.t_end });
    }
    let moments = DMatrix::from_row_slice(record.len(), nq, &total.mean);
    let stderr = DMatrix::from_row_slice(
        record.len(),
        nq,
        &total
            .m2
            .iter()
            .map(|s| (s / (total.n - 1.0)).max(0.0).sqrt() / total.n.sqrt())
            .collect::<Vec<_>>(),
    );
    Ok(EnsembleResult {
        times,
        moments,
        stderr,
        used,
        blown_up,
    })
}

/// Long-format rows `t,q,mean,stderr`.
pub fn write_ensemble_csv<W: Write>(result: &EnsembleResult, header_comment: Option<&str>, mut w: W) -> std::io::Result<()> {
    if let Some(c) = header_comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "t,q,mean,stderr")?;
    for (r, t) in result.times.iter().enumerate() {
        for q in 0..result.moments.ncols() {
            writeln!(w, "{t:?},{q},{:?},{:?}", result.moments[(r, q)], result.stderr[(r, q)])?;
        }
    }
    Ok(())
}
