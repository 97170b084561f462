use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{DiscretePath, EndpointMode, PathAction};
use crate::error::{check_dim, Error, Result};

/// Settings for [`mcmc_sample`]. `burn_in` and `thin` count sweeps, where
/// one sweep proposes a move at every free knot once, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct McmcConfig {
    pub chains: usize,
    pub samples_per_chain: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal_scale: f64,
    pub seed: u64,
    pub endpoint_mode: EndpointMode,
    /// Keep every retained path, not just its endpoint.
    pub keep_paths: bool,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.samples_per_chain == 0 || self.thin == 0 {
            return Err(Error::InvalidArgument(
                "chains, samples_per_chain and thin must all be positive".into(),
            ));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "proposal_scale must be finite and positive, got {}",
                self.proposal_scale
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainResult {
    /// Sweep index of each retained sample.
    pub steps: Vec<usize>,
    pub actions: Vec<f64>,
    pub endpoints: Vec<Vec<f64>>,
    pub paths: Vec<DiscretePath>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    /// Proposal scale after burn-in adaptation.
    pub proposal_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McmcResult {
    pub chains: Vec<ChainResult>,
    pub warnings: Vec<String>,
}

impl McmcResult {
    /// Endpoint draws of every chain, concatenated in chain order.
    pub fn endpoints(&self) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.endpoints.iter().cloned()).collect()
    }

    /// One endpoint component of every draw.
    pub fn endpoint_component(&self, i: usize) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.endpoints.iter().map(move |e| e[i])).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / self.chains.len() as f64
    }

    pub fn min_action(&self) -> f64 {
        self.chains.iter().flat_map(|c| c.actions.iter().copied()).fold(f64::INFINITY, f64::min)
    }
}

/// Metropolis acceptance probability `min(1, exp(-(s_new - s_old)))`.
pub fn metropolis_acceptance(s_old: f64, s_new: f64) -> f64 {
    if !s_new.is_finite() {
        return 0.0;
    }
    let ds = s_new - s_old;
    if ds <= 0.0 {
        1.0
    } else {
        (-ds).exp()
    }
}

/// Samples `exp(-S)` over the free knots of `initial` by single-knot
/// Metropolis. Chain `c` uses stream `c` of a ChaCha generator seeded with
/// `cfg.seed`, so results do not depend on how chains are scheduled.
pub fn mcmc_sample<A: PathAction + ?Sized>(
    action: &A,
    cfg: &McmcConfig,
    initial: &DiscretePath,
) -> Result<McmcResult> {
    cfg.validate()?;
    check_dim(action.dim(), initial.dim())?;
    if !action.action(initial).is_finite() {
        return Err(Error::NonNormalizable("initial path has infinite action".into()));
    }
    let chains: Vec<ChainResult> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(action, cfg, initial, c))
        .collect();
    let warnings = chains
        .iter()
        .enumerate()
        .filter(|(_, c)| !(0.05..=0.95).contains(&c.acceptance_rate))
        .map(|(i, c)| format!("chain {i}: acceptance rate {:.3} outside [0.05, 0.95]", c.acceptance_rate))
        .collect();
    Ok(McmcResult { chains, warnings })
}

fn run_chain<A: PathAction + ?Sized>(action: &A, cfg: &McmcConfig, initial: &DiscretePath, chain: usize) -> ChainResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let n = initial.segments();
    let d = initial.dim();
    let dt = initial.dt();
    let mut knots = initial.knots().to_vec();
    let mut seg: Vec<f64> = knots.windows(2).map(|w| action.segment(&w[0], &w[1], dt)).collect();
    let free = cfg.endpoint_mode.free_knots(n);
    let mut scale = cfg.proposal_scale;
    let total = cfg.burn_in + cfg.samples_per_chain * cfg.thin;
    let batch = 10;
    let (mut batch_acc, mut batch_prop) = (0usize, 0usize);
    let (mut acc, mut prop) = (0usize, 0usize);
    let mut out = ChainResult {
        steps: Vec::with_capacity(cfg.samples_per_chain),
        actions: Vec::with_capacity(cfg.samples_per_chain),
        endpoints: Vec::with_capacity(cfg.samples_per_chain),
        paths: Vec::new(),
        acceptance_rate: 0.0,
        proposal_scale: 0.0,
    };
    let mut trial = vec![0.0; d];
    for sweep in 0..total {
        for k in free.clone() {
            for (t, x) in trial.iter_mut().zip(&knots[k]) {
                let z: f64 = rng.sample(StandardNormal);
                *t = x + scale * z;
            }
            let (left, right) = if action.admissible(&trial) {
                (
                    action.segment(&knots[k - 1], &trial, dt),
                    if k < n { action.segment(&trial, &knots[k + 1], dt) } else { 0.0 },
                )
            } else {
                (f64::INFINITY, 0.0)
            };
            let old = seg[k - 1] + if k < n { seg[k] } else { 0.0 };
            let new = left + right;
            let u: f64 = rng.random();
            let accept = u < metropolis_acceptance(old, new);
            if accept {
                knots[k].copy_from_slice(&trial);
                seg[k - 1] = left;
                if k < n {
                    seg[k] = right;
                }
            }
            if sweep < cfg.burn_in {
                batch_prop += 1;
                batch_acc += accept as usize;
            } else {
                prop += 1;
                acc += accept as usize;
            }
        }
        if sweep < cfg.burn_in && (sweep + 1) % batch == 0 && batch_prop > 0 {
            let rate = batch_acc as f64 / batch_prop as f64;
            scale *= (2.0 * (rate - 0.4)).exp();
            batch_acc = 0;
            batch_prop = 0;
        }
        if sweep >= cfg.burn_in && (sweep + 1 - cfg.burn_in) % cfg.thin == 0 {
            out.steps.push(sweep + 1);
            out.actions.push(seg.iter().sum());
            out.endpoints.push(knots[n].clone());
            if cfg.keep_paths {
                out.paths
                    .push(DiscretePath::new(initial.t0(), initial.t1(), knots.clone()).expect("valid shape"));
            }
        }
    }
    out.acceptance_rate = if prop > 0 { acc as f64 / prop as f64 } else { 0.0 };
    out.proposal_scale = scale;
    out
}

/// Writes retained samples as `chain,step,S,lambda_0,...` rows. Floats use
/// the shortest round-trip representation.
pub fn write_chain_csv<W: Write>(result: &McmcResult, header_comment: Option<&str>, mut w: W) -> std::io::Result<()> {
    if let Some(c) = header_comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    let d = result
        .chains
        .iter()
        .find_map(|c| c.endpoints.first().map(Vec::len))
        .unwrap_or(0);
    write!(w, "chain,step,S")?;
    for i in 0..d {
        write!(w, ",lambda_{i}")?;
    }
    writeln!(w)?;
    for (c, chain) in result.chains.iter().enumerate() {
        for ((step, s), e) in chain.steps.iter().zip(&chain.actions).zip(&chain.endpoints) {
            write!(w, "{c},{step},{s:?}")?;
            for v in e {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}
