//! Markov chain ensembles, experiment targets, and convergence bounds.

pub mod bounds;
pub mod ensemble;
pub mod kernel;
pub mod targets;

pub use bounds::{convergence_bounds, convergence_bounds_at, mixing_time, AsymptoteWindow, ConvergenceBoundTrajectory};
pub use ensemble::{chain_rng, run_ensemble, ChainEnsemble, EnsembleConfig};
pub use kernel::{ChainState, KernelKind, KernelSpec};
pub use targets::{
    simulate_stochastic_volatility, target_ar1_circulant, target_ar1_covariance, target_stochastic_volatility,
    target_stochastic_volatility_simulated, Density, GaussianDensity, InitialSampler, PointMass, Precision,
    StochasticVolatility, SvParams, SvPrior, Target,
};
