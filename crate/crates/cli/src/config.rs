//! Experiment configuration (TOML).
//!
//! ```toml
//! [system]
//! builtin = "linear"
//! matrix = [[-1.0, 0.5], [-0.5, -1.0]]
//!
//! [family]
//! q = "gaussian"
//!
//! [path]
//! t_end = 2.0
//! segments = 200
//! lambda0 = [0.5, 0.0, -0.5, 0.0, -0.5]
//! endpoint = "free"
//! ```

use std::path::{Path, PathBuf};

use liouville::dynsys::{make_affine, make_burgers, make_linear, make_lorenz, make_oscillator, DynamicalSystem};
use liouville::oracle::{equilibrium_sample, EquilibriumOptions};
use liouville::pathspace::{EndpointMode, Solver};
use liouville::polymoment::text::{parse_blocks, parse_polynomial};
use liouville::polymoment::{Monomial, Polynomial};
use liouville::trialdensity::{fit_psi, TrialFamily};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub family: FamilySpec,
    pub path: Option<PathSpec>,
    pub mcmc: Option<McmcSpec>,
    pub ensemble: Option<EnsembleSpec>,
    pub ilscan: Option<IlScanSpec>,
    pub validate: Option<ContextSpec>,
    pub reconcile: Option<ContextSpec>,
}

/// A builtin with its parameters, or a drift file in the polynomial text
/// format (one block per component).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub builtin: Option<String>,
    pub file: Option<PathBuf>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub offset: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub b: Option<f64>,
    pub frequencies: Option<Vec<f64>>,
    pub modes: Option<usize>,
    pub nu: Option<f64>,
    pub forcing: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum QSpec {
    /// `"gaussian"` (every first and second monomial) or `"linear"`.
    Named(String),
    /// Exponent vectors.
    Monomials(Vec<Vec<u16>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PsiSpec {
    Zero,
    /// `scale |x|^2 / 2`.
    Isotropic {
        #[serde(default = "one")]
        scale: f64,
    },
    File {
        path: PathBuf,
    },
    /// Moment-matched quadratic from one long trajectory.
    Fit {
        burn_t: f64,
        count: usize,
        dt: f64,
        spacing: f64,
        seed: Option<u64>,
        initial: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub q: QSpec,
    pub psi: Option<PsiSpec>,
    /// Defaults to 1 with a nonzero `psi` and 0 otherwise.
    pub beta: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EndpointSpec {
    Fixed,
    Free,
}

impl From<EndpointSpec> for EndpointMode {
    fn from(e: EndpointSpec) -> Self {
        match e {
            EndpointSpec::Fixed => EndpointMode::FixedBoth,
            EndpointSpec::Free => EndpointMode::FixedStartFreeEnd,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SolverSpec {
    Newton,
    Lbfgs,
}

impl From<SolverSpec> for Solver {
    fn from(s: SolverSpec) -> Self {
        match s {
            SolverSpec::Newton => Solver::Newton,
            SolverSpec::Lbfgs => Solver::Lbfgs,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub segments: usize,
    pub lambda0: Vec<f64>,
    pub lambda1: Option<Vec<f64>>,
    pub endpoint: EndpointSpec,
    pub solver: Option<SolverSpec>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSpec {
    pub chains: usize,
    pub samples_per_chain: usize,
    pub burn_in: usize,
    #[serde(default = "one_usize")]
    pub thin: usize,
    pub proposal_scale: f64,
    pub seed: Option<u64>,
    #[serde(default)]
    pub keep_paths: bool,
    /// Histogram bins for the endpoint consistency distribution.
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn one_usize() -> usize {
    1
}

fn default_bins() -> usize {
    40
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub count: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: Option<u64>,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    /// Defaults to `path.lambda0`.
    pub lambda0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlScanSpec {
    pub offset: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub rate: Vec<f64>,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "default_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_dts() -> Vec<f64> {
    vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
}

fn default_steps() -> usize {
    64
}

/// Random `(lambda, lambda_dot)` contexts for `validate` and `reconcile`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    #[serde(default = "default_contexts")]
    pub contexts: usize,
    pub seed: Option<u64>,
    /// Centre of the sweep; defaults to a normalizable point of the family.
    pub lambda: Option<Vec<f64>>,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "one")]
    pub velocity_scale: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_contexts() -> usize {
    100
}

fn default_spread() -> f64 {
    0.2
}

fn default_tolerance() -> f64 {
    1e-10
}

/// A parsed configuration with everything it references resolved.
pub struct Loaded {
    pub config: ExperimentConfig,
    /// SHA-256 of the configuration text and every file it references.
    pub hash: String,
    pub system: DynamicalSystem,
    pub family: TrialFamily,
    pub warnings: Vec<String>,
}

pub fn require_seed(seed: Option<u64>, block: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Config(format!("[{block}] is missing the required `seed`")))
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_str(&text, base)
}

pub fn load_str(text: &str, base: &Path) -> Result<Loaded, CliError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Config(format!("configuration: {e}")))?;
    check_seeds(&config)?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let mut read = |rel: &Path| -> Result<String, CliError> {
        let full = base.join(rel);
        let body = std::fs::read_to_string(&full)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", full.display())))?;
        hasher.update(body.as_bytes());
        Ok(body)
    };
    let system = build_system(&config.system, &mut read)?;
    let mut warnings = Vec::new();
    let family = build_family(&config.family, &system, &mut read, &mut warnings)?;
    let hash = hex::encode(hasher.finalize());
    Ok(Loaded {
        config,
        hash,
        system,
        family,
        warnings,
    })
}

/// Every stochastic block must carry its own seed.
fn check_seeds(c: &ExperimentConfig) -> Result<(), CliError> {
    if let Some(PsiSpec::Fit { seed, .. }) = &c.family.psi {
        require_seed(*seed, "family.psi")?;
    }
    if let Some(m) = &c.mcmc {
        require_seed(m.seed, "mcmc")?;
    }
    if let Some(e) = &c.ensemble {
        require_seed(e.seed, "ensemble")?;
    }
    if let Some(v) = &c.validate {
        require_seed(v.seed, "validate")?;
    }
    if let Some(r) = &c.reconcile {
        require_seed(r.seed, "reconcile")?;
    }
    Ok(())
}

fn need<T: Clone>(v: &Option<T>, field: &str, builtin: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("[system] builtin `{builtin}` needs `{field}`")))
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config("[system] `matrix` must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn build_system(
    s: &SystemSpec,
    read: &mut impl FnMut(&Path) -> Result<String, CliError>,
) -> Result<DynamicalSystem, CliError> {
    let cfg = |e: liouville::Error| CliError::Config(format!("[system] {e}"));
    match (&s.builtin, &s.file) {
        (Some(_), Some(_)) => Err(CliError::Config("[system] give either `builtin` or `file`, not both".into())),
        (None, None) => Err(CliError::Config("[system] needs `builtin` or `file`".into())),
        (None, Some(file)) => {
            let body = read(file)?;
            let drift = parse_blocks(&body, None).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
            let name = file.display().to_string();
            DynamicalSystem::new(name, drift).map_err(cfg)
        }
        (Some(name), None) => match name.as_str() {
            "linear" => make_linear(&matrix(&need(&s.matrix, "matrix", name)?)?).map_err(cfg),
            "affine" => {
                let u = matrix(&need(&s.matrix, "matrix", name)?)?;
                let c = DVector::from_vec(need(&s.offset, "offset", name)?);
                make_affine(&u, &c).map_err(cfg)
            }
            "lorenz" => Ok(make_lorenz(
                s.sigma.unwrap_or(10.0),
                s.rho.unwrap_or(28.0),
                s.b.unwrap_or(8.0 / 3.0),
            )),
            "oscillator" => Ok(make_oscillator(&need(&s.frequencies, "frequencies", name)?)),
            "burgers" => {
                let modes = need(&s.modes, "modes", name)?;
                let forcing = s.forcing.clone().unwrap_or_else(|| vec![0.0; 2 * modes]);
                make_burgers(modes, need(&s.nu, "nu", name)?, &forcing)
                    .map(|(sys, _)| sys)
                    .map_err(cfg)
            }
            other => Err(CliError::Config(format!(
                "[system] unknown builtin `{other}` (linear, affine, lorenz, oscillator, burgers)"
            ))),
        },
    }
}

fn build_family(
    f: &FamilySpec,
    sys: &DynamicalSystem,
    read: &mut impl FnMut(&Path) -> Result<String, CliError>,
    warnings: &mut Vec<String>,
) -> Result<TrialFamily, CliError> {
    let n = sys.dim();
    let cfg = |e: liouville::Error| CliError::Config(format!("[family] {e}"));
    let q: Vec<Polynomial> = match &f.q {
        QSpec::Named(s) if s == "gaussian" => TrialFamily::full_gaussian(n).q().to_vec(),
        QSpec::Named(s) if s == "linear" => (0..n).map(|i| Polynomial::var(n, i)).collect(),
        QSpec::Named(s) => {
            return Err(CliError::Config(format!(
                "[family] unknown q `{s}` (gaussian, linear, or a list of exponent vectors)"
            )))
        }
        QSpec::Monomials(list) => list
            .iter()
            .map(|e| {
                if e.len() != n {
                    return Err(CliError::Config(format!(
                        "[family] monomial {e:?} has {} exponents, the system has {n} variables",
                        e.len()
                    )));
                }
                let mut p = Polynomial::zero(n);
                p.add_term(Monomial::new(e.clone()), 1.0);
                Ok(p)
            })
            .collect::<Result<_, _>>()?,
    };
    let psi = match f.psi.clone().unwrap_or(PsiSpec::Zero) {
        PsiSpec::Zero => Polynomial::zero(n),
        PsiSpec::Isotropic { scale } => {
            let mut p = Polynomial::zero(n);
            for i in 0..n {
                let x = Polynomial::var(n, i);
                p.add_scaled(&(&x * &x), 0.5 * scale).map_err(cfg)?;
            }
            p
        }
        PsiSpec::File { path } => {
            let body = read(&path)?;
            parse_polynomial(&body, Some(n)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        PsiSpec::Fit {
            burn_t,
            count,
            dt,
            spacing,
            seed,
            initial,
        } => {
            let opts = EquilibriumOptions {
                initial: initial.unwrap_or_else(|| vec![0.0; n]),
                burn_t,
                count,
                dt,
                spacing,
                seed: require_seed(seed, "family.psi")?,
            };
            let sample = equilibrium_sample(sys, &opts).map_err(|e| CliError::Numeric(format!("psi fit: {e}")))?;
            warnings.extend(sample.warnings.iter().map(|w| format!("psi fit: {w}")));
            fit_psi(&sample.states)
                .map_err(|e| CliError::Numeric(format!("psi fit: {e}")))?
                .psi
        }
    };
    let beta = f.beta.unwrap_or(if psi.is_zero() { 0.0 } else { 1.0 });
    TrialFamily::new(q, psi, beta).map_err(cfg)
}

/// A point of the family to centre random sweeps on: zero if that is
/// normalizable, else the standard normal.
pub fn default_lambda(family: &TrialFamily) -> Result<Vec<f64>, CliError> {
    let zero = vec![0.0; family.len()];
    if family.to_gaussian(&zero).is_ok() {
        return Ok(zero);
    }
    family
        .natural_from_gaussian(&liouville::polymoment::GaussianMoments::standard(family.dim()))
        .map_err(|_| CliError::Config("no default centre for this family; set `lambda` explicitly".into()))
}
