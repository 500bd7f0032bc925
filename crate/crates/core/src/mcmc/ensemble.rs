//! Independent chain ensembles with per-chain random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mcmc::kernel::{check_finite, Kernel, KernelSpec, StepScratch};
use crate::mcmc::targets::{InitialSampler, Target};
use crate::wasserstein::EmpiricalMeasure;

/// Random stream of chain `chain`; a pure function of `(seed, chain)`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    pub n_chains: usize,
    pub horizon: usize,
    pub thin: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    /// Iterations at which states are kept: `0, thin, 2 thin, ... <= horizon`.
    pub fn recorded_iterations(&self) -> Vec<usize> {
        (0..=self.horizon).step_by(self.thin.max(1)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(invalid("need at least one chain"));
        }
        if self.thin == 0 {
            return Err(invalid("thinning factor must be at least 1"));
        }
        Ok(())
    }
}

/// States of all chains at the recorded iterations. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEnsemble {
    n_chains: usize,
    dim: usize,
    recorded_iterations: Vec<usize>,
    states: Vec<Vec<f64>>,
    seed: u64,
    acceptance_rate: Option<f64>,
}

impl ChainEnsemble {
    /// Builds an ensemble from per-iteration `n_chains x dim` row-major states.
    pub fn from_states(
        n_chains: usize,
        dim: usize,
        recorded_iterations: Vec<usize>,
        states: Vec<Vec<f64>>,
        seed: u64,
        acceptance_rate: Option<f64>,
    ) -> Result<Self> {
        if recorded_iterations.len() != states.len() {
            return Err(Error::ShapeMismatch("one state block per recorded iteration".into()));
        }
        if recorded_iterations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("recorded iterations must be strictly increasing"));
        }
        if states.iter().any(|s| s.len() != n_chains * dim) {
            return Err(Error::ShapeMismatch(format!("state blocks must hold {n_chains} x {dim} values")));
        }
        Ok(Self {
            n_chains,
            dim,
            recorded_iterations,
            states,
            seed,
            acceptance_rate,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn recorded_iterations(&self) -> &[usize] {
        &self.recorded_iterations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fraction of accepted proposals across all chains, for Metropolis kernels.
    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance_rate
    }

    pub fn index_of(&self, t: usize) -> Option<usize> {
        self.recorded_iterations.binary_search(&t).ok()
    }

    /// Row-major `n_chains x dim` states at recorded iteration `t`.
    pub fn states_at(&self, t: usize) -> Result<&[f64]> {
        let k = self
            .index_of(t)
            .ok_or_else(|| invalid(format!("iteration {t} was not recorded")))?;
        Ok(&self.states[k])
    }

    pub fn measure_at(&self, t: usize) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.n_chains, self.dim, self.states_at(t)?.to_vec())
    }
}

struct ChainRun {
    records: Vec<f64>,
    accepted: u64,
}

fn run_chain(
    kernel: &Kernel<'_>,
    pi0: &dyn InitialSampler,
    cfg: &EnsembleConfig,
    chain: usize,
    n_records: usize,
) -> Result<ChainRun> {
    let d = kernel.dim();
    let mut rng = chain_rng(cfg.seed, chain);
    let mut x0 = vec![0.0; d];
    pi0.sample_into(&mut rng, &mut x0);
    check_finite(&x0, chain, 0)?;
    let mut state = kernel.init_state(x0);
    let mut work = StepScratch::new(d);
    let mut records = Vec::with_capacity(n_records * d);
    records.extend_from_slice(&state.x);
    let mut accepted = 0;
    for t in 1..=cfg.horizon {
        if kernel.step(&mut state, &mut rng, &mut work) {
            accepted += 1;
        }
        check_finite(&state.x, chain, t)?;
        if t % cfg.thin == 0 {
            records.extend_from_slice(&state.x);
        }
    }
    Ok(ChainRun { records, accepted })
}

/// Simulates `n_chains` independent chains from `pi0` for `horizon`
/// iterations and keeps every `thin`-th state (including `t = 0`).
pub fn run_ensemble(
    target: &Target,
    kernel: KernelSpec,
    pi0: &dyn InitialSampler,
    cfg: &EnsembleConfig,
) -> Result<ChainEnsemble> {
    cfg.validate()?;
    if pi0.dim() != target.dim() {
        return Err(Error::ShapeMismatch("initial distribution and target dimensions differ".into()));
    }
    let kernel = Kernel::new(target, kernel)?;
    let d = target.dim();
    let recorded = cfg.recorded_iterations();
    let n_records = recorded.len();

    let runs: Vec<Result<ChainRun>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|chain| run_chain(&kernel, pi0, cfg, chain, n_records))
        .collect();
    let mut chains = Vec::with_capacity(cfg.n_chains);
    for run in runs {
        chains.push(run?);
    }

    let acceptance_rate = if kernel.is_metropolis() && cfg.horizon > 0 {
        let total: u64 = chains.iter().map(|c| c.accepted).sum();
        Some(total as f64 / (cfg.horizon as f64 * cfg.n_chains as f64))
    } else {
        None
    };

    let mut states = vec![Vec::with_capacity(cfg.n_chains * d); n_records];
    for chain in &chains {
        for (k, block) in states.iter_mut().enumerate() {
            block.extend_from_slice(&chain.records[k * d..(k + 1) * d]);
        }
    }
    ChainEnsemble::from_states(cfg.n_chains, d, recorded, states, cfg.seed, acceptance_rate)
}
