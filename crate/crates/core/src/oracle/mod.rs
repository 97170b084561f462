//! Ground truth for the closure: trajectory ensembles, exact Gaussian
//! transport under affine drift, and the direct information loss.

mod ensemble;
mod equilibrium;
mod exact;

pub use ensemble::{ensemble_evolve, write_ensemble_csv, EnsembleOptions, EnsembleResult, BLOW_UP_BOUND};
pub use equilibrium::{equilibrium_sample, EquilibriumOptions, EquilibriumSample};
pub use exact::{
    exact_gaussian_evolve, il_scan, information_loss_direct, loglog_slope, ExponentialPath, IlRow,
};
