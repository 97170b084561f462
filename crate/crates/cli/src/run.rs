use std::fmt::Write as _;

use liouville::lagrangian::{coefficients, lagrangian_direct, mean_residual, reconcile, LiouvilleModel, ResidualContext};
use liouville::oracle::{ensemble_evolve, exact_gaussian_evolve, il_scan, loglog_slope, write_ensemble_csv, EnsembleOptions, ExponentialPath};
use liouville::pathspace::{
    consistency_distribution, extremal_path, mcmc_sample, write_chain_csv, DiscretePath, EndpointMode, ExtremalOptions,
    ExtremalResult, McmcConfig, PathAction, Solver, MIN_DRAWS,
};
use liouville::polymoment::gaussian_expectation;
use liouville::trialdensity::TrialFamily;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use toml::{Table, Value};

use crate::config::{default_lambda, require_seed, ContextSpec, Loaded, PathSpec};
use crate::CliError;

/// Files to write plus the run summary.
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub summary: Table,
    pub status: Status,
}

#[derive(Debug, PartialEq)]
pub enum Status {
    Ok,
    NumericFailure(String),
    ValidationFailure(String),
}

fn numeric(context: &str) -> impl Fn(liouville::Error) -> CliError + '_ {
    move |e| CliError::Numeric(format!("{context}: {e}"))
}

fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    b.as_ref()
        .ok_or_else(|| CliError::Config(format!("this subcommand needs a [{name}] block")))
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn strings(v: &[String]) -> Value {
    Value::Array(v.iter().cloned().map(Value::String).collect())
}

fn check_len(v: &[f64], want: usize, what: &str) -> Result<(), CliError> {
    if v.len() == want {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} has {} entries, the family has {want}", v.len())))
    }
}

fn extremal_options(p: &PathSpec) -> ExtremalOptions {
    let d = ExtremalOptions::default();
    ExtremalOptions {
        solver: p.solver.map(Solver::from).unwrap_or(d.solver),
        tolerance: p.tolerance.unwrap_or(d.tolerance),
        max_iterations: p.max_iterations.unwrap_or(d.max_iterations),
        ..d
    }
}

fn solve_path(l: &Loaded, model: &LiouvilleModel) -> Result<ExtremalResult, CliError> {
    let p = block(&l.config.path, "path")?;
    let nq = l.family.len();
    check_len(&p.lambda0, nq, "[path] lambda0")?;
    let end = match (p.endpoint, &p.lambda1) {
        (crate::config::EndpointSpec::Fixed, Some(e)) => {
            check_len(e, nq, "[path] lambda1")?;
            Some(e.as_slice())
        }
        (crate::config::EndpointSpec::Fixed, None) => {
            return Err(CliError::Config("[path] endpoint = \"fixed\" needs `lambda1`".into()))
        }
        (crate::config::EndpointSpec::Free, _) => None,
    };
    if !(p.t_end > p.t0) || p.segments == 0 {
        return Err(CliError::Config("[path] needs t_end > t0 and segments >= 1".into()));
    }
    extremal_path(model, p.t0, p.t_end, &p.lambda0, end, p.segments, &extremal_options(p)).map_err(numeric("extremal path"))
}

fn path_csv(path: &DiscretePath, family: &TrialFamily, header: &str) -> String {
    let mut s = comment(header);
    s.push_str("k,t");
    for i in 0..path.dim() {
        let _ = write!(s, ",lambda_{i}");
    }
    for j in 0..family.dim() {
        let _ = write!(s, ",mean_{j}");
    }
    s.push('\n');
    for (k, knot) in path.knots().iter().enumerate() {
        let _ = write!(s, "{k},{:?}", path.time(k));
        for v in knot {
            let _ = write!(s, ",{v:?}");
        }
        match family.to_gaussian(knot) {
            Ok(g) => g.mean().iter().for_each(|m| {
                let _ = write!(s, ",{m:?}");
            }),
            Err(_) => (0..family.dim()).for_each(|_| s.push_str(",NaN")),
        }
        s.push('\n');
    }
    s
}

pub fn comment(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

/// Largest deviation of the path's Gaussian moments from exact transport,
/// when the drift is affine and the family can hold the transported law.
fn exact_transport_error(l: &Loaded, path: &DiscretePath) -> Option<f64> {
    let start = l.family.to_gaussian(path.start()).ok()?;
    let sub = 8;
    let snaps = exact_gaussian_evolve(&l.system, &start, path.t1() - path.t0(), path.segments() * sub).ok()?;
    l.family.natural_from_gaussian(snaps.last()?).ok()?;
    let mut worst: f64 = 0.0;
    for (k, knot) in path.knots().iter().enumerate() {
        let g = l.family.to_gaussian(knot).ok()?;
        let e = &snaps[k * sub];
        worst = worst
            .max((g.mean() - e.mean()).amax())
            .max((g.covariance() - e.covariance()).amax());
    }
    Some(worst)
}

pub fn run_extremal(l: &Loaded, header: &str) -> Result<RunOutput, CliError> {
    let model = LiouvilleModel::new(&l.system, &l.family).map_err(numeric("lagrangian"))?;
    let r = solve_path(l, &model)?;
    let p = block(&l.config.path, "path")?;
    let mut summary = Table::new();
    summary.insert("action".into(), Value::Float(r.action));
    summary.insert("initial_action".into(), Value::Float(r.initial_action));
    summary.insert("gradient_norm".into(), Value::Float(r.gradient_norm));
    summary.insert("iterations".into(), Value::Integer(r.iterations as i64));
    summary.insert("converged".into(), Value::Boolean(r.converged));
    summary.insert("segments".into(), Value::Integer(p.segments as i64));
    summary.insert("solver".into(), Value::String(format!("{:?}", extremal_options(p).solver).to_lowercase()));
    summary.insert("end_lambda".into(), floats(r.path.end()));
    if let Some(err) = exact_transport_error(l, &r.path) {
        summary.insert("exact_transport_error".into(), Value::Float(err));
    }
    let status = if r.converged {
        Status::Ok
    } else {
        Status::NumericFailure(format!(
            "extremal solve did not converge in {} iterations (gradient norm {:e})",
            r.iterations, r.gradient_norm
        ))
    };
    Ok(RunOutput {
        files: vec![("extremal_path.csv".into(), path_csv(&r.path, &l.family, header))],
        summary,
        status,
    })
}

pub fn run_mcmc(l: &Loaded, header: &str) -> Result<RunOutput, CliError> {
    let m = block(&l.config.mcmc, "mcmc")?;
    let p = block(&l.config.path, "path")?;
    let model = LiouvilleModel::new(&l.system, &l.family).map_err(numeric("lagrangian"))?;
    let classical = solve_path(l, &model)?;
    let mode = EndpointMode::from(p.endpoint);
    let cfg = McmcConfig {
        chains: m.chains,
        samples_per_chain: m.samples_per_chain,
        burn_in: m.burn_in,
        thin: m.thin,
        proposal_scale: m.proposal_scale,
        seed: require_seed(m.seed, "mcmc")?,
        endpoint_mode: mode,
        keep_paths: m.keep_paths,
    };
    cfg.validate().map_err(|e| CliError::Config(format!("[mcmc] {e}")))?;
    let r = mcmc_sample(&model, &cfg, &classical.path).map_err(numeric("mcmc"))?;

    let mut chains = Vec::new();
    write_chain_csv(&r, Some(header), &mut chains).expect("writing to memory");
    let mut files = vec![("mcmc_chains.csv".to_string(), String::from_utf8(chains).expect("ascii"))];
    let mut warnings = r.warnings.clone();
    if mode == EndpointMode::FixedStartFreeEnd {
        let mut s = comment(header);
        s.push_str("component,lo,hi,count,density\n");
        for i in 0..model.dim() {
            match consistency_distribution(&r.endpoint_component(i), m.bins, None) {
                Ok(h) => {
                    for b in 0..h.counts.len() {
                        let _ = writeln!(
                            s,
                            "{i},{:?},{:?},{},{:?}",
                            h.edges[b],
                            h.edges[b + 1],
                            h.counts[b],
                            h.density[b]
                        );
                    }
                }
                Err(e) => warnings.push(format!("consistency distribution of component {i}: {e}")),
            }
        }
        files.push(("mcmc_consistency.csv".into(), s));
    }
    if m.keep_paths {
        let mut s = comment(header);
        s.push_str("chain,sample,k");
        for i in 0..model.dim() {
            let _ = write!(s, ",lambda_{i}");
        }
        s.push('\n');
        for (c, chain) in r.chains.iter().enumerate() {
            for (j, path) in chain.paths.iter().enumerate() {
                for (k, knot) in path.knots().iter().enumerate() {
                    let _ = write!(s, "{c},{j},{k}");
                    for v in knot {
                        let _ = write!(s, ",{v:?}");
                    }
                    s.push('\n');
                }
            }
        }
        files.push(("mcmc_paths.csv".into(), s));
    }

    let draws = r.chains.iter().map(|c| c.actions.len()).sum::<usize>();
    if draws < MIN_DRAWS && mode == EndpointMode::FixedStartFreeEnd {
        warnings.push(format!("only {draws} endpoint draws; at least {MIN_DRAWS} are needed for a histogram"));
    }
    let min_action = r.min_action();
    let mut summary = Table::new();
    summary.insert("classical_action".into(), Value::Float(classical.action));
    summary.insert("classical_converged".into(), Value::Boolean(classical.converged));
    summary.insert("min_sampled_action".into(), Value::Float(min_action));
    summary.insert(
        "lower_bound_holds".into(),
        Value::Boolean(min_action >= classical.action - 1e-6),
    );
    summary.insert("acceptance_rate".into(), Value::Float(r.acceptance_rate()));
    summary.insert(
        "proposal_scales".into(),
        floats(&r.chains.iter().map(|c| c.proposal_scale).collect::<Vec<_>>()),
    );
    summary.insert("draws".into(), Value::Integer(draws as i64));
    summary.insert("seed".into(), Value::Integer(cfg.seed as i64));
    summary.insert("warnings".into(), strings(&warnings));
    Ok(RunOutput {
        files,
        summary,
        status: Status::Ok,
    })
}

pub fn run_ensemble(l: &Loaded, header: &str) -> Result<RunOutput, CliError> {
    let e = block(&l.config.ensemble, "ensemble")?;
    let lambda0 = match (&e.lambda0, &l.config.path) {
        (Some(v), _) => v.clone(),
        (None, Some(p)) => p.lambda0.clone(),
        (None, None) => return Err(CliError::Config("[ensemble] needs `lambda0` (or a [path] block)".into())),
    };
    check_len(&lambda0, l.family.len(), "ensemble lambda0")?;
    let start = l
        .family
        .point(lambda0)
        .map_err(|e| CliError::Config(format!("ensemble lambda0: {e}")))?;
    let opts = EnsembleOptions {
        count: e.count,
        t_end: e.t_end,
        dt: e.dt,
        seed: require_seed(e.seed, "ensemble")?,
        record_every: e.record_every,
    };
    let r = ensemble_evolve(&l.system, &start, &opts).map_err(numeric("ensemble"))?;
    let mut csv = Vec::new();
    write_ensemble_csv(&r, Some(header), &mut csv).expect("writing to memory");
    let mut summary = Table::new();
    summary.insert("count".into(), Value::Integer(e.count as i64));
    summary.insert("used".into(), Value::Integer(r.used as i64));
    summary.insert("blown_up".into(), Value::Integer(r.blown_up as i64));
    summary.insert("seed".into(), Value::Integer(opts.seed as i64));
    summary.insert(
        "final_means".into(),
        floats(&r.moments.row(r.times.len() - 1).iter().copied().collect::<Vec<_>>()),
    );
    let status = if r.blown_up > 0 {
        Status::NumericFailure(format!("{} of {} trajectories blew up", r.blown_up, e.count))
    } else {
        Status::Ok
    };
    Ok(RunOutput {
        files: vec![("ensemble.csv".into(), String::from_utf8(csv).expect("ascii"))],
        summary,
        status,
    })
}

pub fn run_ilscan(l: &Loaded, header: &str) -> Result<RunOutput, CliError> {
    let s = block(&l.config.ilscan, "ilscan")?;
    let nq = l.family.len();
    check_len(&s.offset, nq, "[ilscan] offset")?;
    check_len(&s.amplitude, nq, "[ilscan] amplitude")?;
    check_len(&s.rate, nq, "[ilscan] rate")?;
    if s.dts.is_empty() || s.dts.iter().any(|d| !(*d > 0.0)) {
        return Err(CliError::Config("[ilscan] dts must be positive and non-empty".into()));
    }
    let path = ExponentialPath::new(s.offset.clone(), s.amplitude.clone(), s.rate.clone())
        .map_err(|e| CliError::Config(format!("[ilscan] {e}")))?;
    let rows = il_scan(&l.system, &l.family, &path, s.t, &s.dts, s.steps).map_err(numeric("ilscan"))?;
    let mut csv = comment(header);
    csv.push_str("dt,il,predicted,ratio,remainder\n");
    for r in &rows {
        let _ = writeln!(csv, "{:?},{:?},{:?},{:?},{:?}", r.dt, r.il, r.predicted, r.ratio, r.il - r.predicted);
    }
    let smallest = rows
        .iter()
        .min_by(|a, b| a.dt.total_cmp(&b.dt))
        .expect("non-empty");
    let mut summary = Table::new();
    summary.insert("smallest_dt".into(), Value::Float(smallest.dt));
    summary.insert("ratio_at_smallest_dt".into(), Value::Float(smallest.ratio));
    let usable: Vec<_> = rows.iter().filter(|r| (r.il - r.predicted).abs() > 0.0).collect();
    if usable.len() >= 2 {
        let x: Vec<f64> = usable.iter().map(|r| r.dt).collect();
        let y: Vec<f64> = usable.iter().map(|r| (r.il - r.predicted).abs()).collect();
        summary.insert("remainder_slope".into(), Value::Float(loglog_slope(&x, &y)));
    }
    Ok(RunOutput {
        files: vec![("ilscan.csv".into(), csv)],
        summary,
        status: Status::Ok,
    })
}

/// Seeded `(lambda, lambda_dot)` draws around the sweep centre; draws that
/// leave the family are redrawn.
fn contexts(family: &TrialFamily, spec: &ContextSpec, block_name: &str) -> Result<Vec<(Vec<f64>, Vec<f64>)>, CliError> {
    let centre = match &spec.lambda {
        Some(c) => {
            check_len(c, family.len(), &format!("[{block_name}] lambda"))?;
            c.clone()
        }
        None => default_lambda(family)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(require_seed(spec.seed, block_name)?);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut out = Vec::with_capacity(spec.contexts);
    let mut tries = 0;
    while out.len() < spec.contexts {
        tries += 1;
        if tries > 100 * spec.contexts.max(1) {
            return Err(CliError::Config(format!(
                "[{block_name}] too few normalizable draws; reduce `spread`"
            )));
        }
        let lambda: Vec<f64> = centre
            .iter()
            .map(|c| c + spec.spread * (1.0 + c.abs()) * normal())
            .collect();
        let velocity: Vec<f64> = (0..centre.len()).map(|_| spec.velocity_scale * normal()).collect();
        if family.to_gaussian(&lambda).is_ok() {
            out.push((lambda, velocity));
        }
    }
    Ok(out)
}

struct Check {
    name: &'static str,
    context: usize,
    value: f64,
    bound: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.value <= self.bound
    }
}

pub fn run_validate(l: &Loaded, header: &str) -> Result<RunOutput, CliError> {
    let spec = block(&l.config.validate, "validate")?;
    let tol = spec.tolerance;
    let sys = &l.system;
    let fam = &l.family;
    let mut checks = Vec::new();
    checks.push(Check {
        name: "divergence_cache",
        context: 0,
        value: if sys.divergence_consistent() { 0.0 } else { 1.0 },
        bound: 0.0,
    });
    let hamiltonian = sys.divergence_poly().max_abs_coefficient() == 0.0;
    let nq = fam.len();
    for (c, (lambda, velocity)) in contexts(fam, spec, "validate")?.into_iter().enumerate() {
        let ctx = ResidualContext::new(sys, fam, lambda.clone(), velocity).map_err(numeric("context"))?;
        let mean = mean_residual(&ctx).map_err(numeric("mean residual"))?;
        let r2 = 2.0 * lagrangian_direct(&ctx).map_err(numeric("lagrangian"))?;
        checks.push(Check {
            name: "mean_residual",
            context: c,
            value: mean.abs(),
            bound: tol * (1.0 + r2.sqrt()),
        });

        // <g L f> - <f g L* phi> = <f L* g> under the trial density exp(phi) / Z.
        let g = fam.to_gaussian(&lambda).map_err(numeric("trial density"))?;
        let phi = fam.exponent(&lambda).map_err(numeric("exponent"))?;
        let lphi = sys.apply_lstar(&phi).map_err(numeric("adjoint"))?;
        let ex = |p: liouville::Result<liouville::polymoment::Polynomial>| -> Result<f64, CliError> {
            gaussian_expectation(&p.map_err(numeric("adjoint"))?, &g).map_err(numeric("adjoint"))
        };
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..nq {
            let f = &fam.q()[i];
            let h = &fam.q()[(i + 1) % nq];
            let lhs = ex(sys.apply_l(f).and_then(|lf| h.try_mul(&lf)))?;
            let corr = ex(f.try_mul(h).and_then(|fh| fh.try_mul(&lphi)))?;
            let rhs = ex(sys.apply_lstar(h).and_then(|lh| f.try_mul(&lh)))?;
            worst = worst.max((lhs - corr - rhs).abs());
            scale = scale.max(lhs.abs() + corr.abs() + rhs.abs());
        }
        checks.push(Check {
            name: "adjoint_identity",
            context: c,
            value: worst,
            bound: tol * (1.0 + scale),
        });

        if hamiltonian {
            let co = coefficients(sys, fam, &lambda).map_err(numeric("coefficients"))?;
            let v = co
                .gamma
                .max_abs_coefficient()
                .max(co.x.amax())
                .max(co.y.amax());
            checks.push(Check {
                name: "gamma_vanishes",
                context: c,
                value: v,
                bound: tol * (1.0 + co.g.amax() + co.k.amax()),
            });
        }
    }

    let mut csv = comment(header);
    csv.push_str("check,context,value,bound,pass\n");
    for ch in &checks {
        let _ = writeln!(csv, "{},{},{:?},{:?},{}", ch.name, ch.context, ch.value, ch.bound, ch.pass());
    }
    let mut summary = Table::new();
    let mut failed = Vec::new();
    for name in ["divergence_cache", "mean_residual", "adjoint_identity", "gamma_vanishes"] {
        let rows: Vec<&Check> = checks.iter().filter(|c| c.name == name).collect();
        let mut t = Table::new();
        if rows.is_empty() {
            t.insert("applicable".into(), Value::Boolean(false));
        } else {
            let pass = rows.iter().all(|c| c.pass());
            t.insert("applicable".into(), Value::Boolean(true));
            t.insert("pass".into(), Value::Boolean(pass));
            t.insert("checked".into(), Value::Integer(rows.len() as i64));
            t.insert("max_value".into(), Value::Float(rows.iter().map(|c| c.value).fold(0.0, f64::max)));
            if !pass {
                failed.push(name);
            }
        }
        summary.insert(name.into(), Value::Table(t));
    }
    let status = if failed.is_empty() {
        Status::Ok
    } else {
        Status::ValidationFailure(format!("failed checks: {}", failed.join(", ")))
    };
    Ok(RunOutput {
        files: vec![("validate.csv".into(), csv)],
        summary,
        status,
    })
}

pub fn run_reconcile(l: &Loaded, header: &str) -> Result<RunOutput, CliError> {
    let spec = block(&l.config.reconcile, "reconcile")?;
    let mut csv = comment(header);
    csv.push_str("context,direct,assembled,gap,gap_spread,velocity_independent,gap_minus_2vM\n");
    let mut max_gap: f64 = 0.0;
    let mut max_shifted: f64 = 0.0;
    let mut independent = 0usize;
    let list = contexts(&l.family, spec, "reconcile")?;
    for (c, (lambda, velocity)) in list.iter().enumerate() {
        let ctx = ResidualContext::new(&l.system, &l.family, lambda.clone(), velocity.clone()).map_err(numeric("context"))?;
        let r = reconcile(&ctx).map_err(numeric("reconcile"))?;
        let co = coefficients(&l.system, &l.family, lambda).map_err(numeric("coefficients"))?;
        let shifted = r.gap - 2.0 * DVector::from_column_slice(velocity).dot(&co.m);
        max_gap = max_gap.max(r.gap.abs());
        max_shifted = max_shifted.max(shifted.abs());
        independent += r.gap_velocity_independent as usize;
        let _ = writeln!(
            csv,
            "{c},{:?},{:?},{:?},{:?},{},{:?}",
            r.direct, r.assembled, r.gap, r.gap_spread, r.gap_velocity_independent, shifted
        );
    }
    let mut summary = Table::new();
    summary.insert("contexts".into(), Value::Integer(list.len() as i64));
    summary.insert("max_abs_gap".into(), Value::Float(max_gap));
    summary.insert("max_abs_gap_minus_2vM".into(), Value::Float(max_shifted));
    summary.insert("velocity_independent_contexts".into(), Value::Integer(independent as i64));
    Ok(RunOutput {
        files: vec![("reconcile.csv".into(), csv)],
        summary,
        status: Status::Ok,
    })
}
