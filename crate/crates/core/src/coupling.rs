//! Lagged coupled chains and the coupling upper bound on `W2(π_t, π_∞)`.
//!
//! The X chain runs `L` steps ahead of the Y chain. Proposals are coupled by
//! the reflection-maximal coupling of their Gaussian proposal laws, and the
//! Metropolis test shares one uniform. Gibbs sweeps are coupled one
//! coordinate at a time the same way. After the chains meet they stay equal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mcmc::ensemble::chain_rng;
use crate::mcmc::kernel::{check_finite, ChainState, Kernel, KernelSpec, StepScratch};
use crate::mcmc::targets::{InitialSampler, Target};

const COUPLING_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream for the Y chain and the coupling decisions of pair `pair`.
pub fn coupling_rng(seed: u64, pair: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(COUPLING_SEED_OFFSET));
    rng.set_stream(pair as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPairTrace {
    pub lag: usize,
    /// First `τ >= L` with `X_τ = Y_{τ-L}`, or `None` if the cap was hit.
    pub meeting_time: Option<usize>,
    /// `||X_{t+L} - Y_t||²` for `t = 0 .. τ - L - 1`.
    pub distance_sq_trace: Vec<f64>,
}

impl CoupledPairTrace {
    pub fn met(&self) -> bool {
        self.meeting_time.is_some()
    }

    /// Squared distance at lagged time `t`; zero after meeting.
    pub fn distance_sq(&self, t: usize) -> f64 {
        self.distance_sq_trace.get(t).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingConfig {
    pub lag: usize,
    /// Maximum number of X-chain iterations.
    pub cap: usize,
    pub seed: u64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Coupler<'k, 'a> {
    kernel: &'k Kernel<'a>,
    work_x: StepScratch,
    work_y: StepScratch,
    z: Vec<f64>,
    eta: Vec<f64>,
}

impl<'k, 'a> Coupler<'k, 'a> {
    fn new(kernel: &'k Kernel<'a>) -> Self {
        let d = kernel.dim();
        Self {
            kernel,
            work_x: StepScratch::new(d),
            work_y: StepScratch::new(d),
            z: vec![0.0; d],
            eta: vec![0.0; d],
        }
    }

    /// One joint step. X consumes exactly the draws of an uncoupled step from
    /// `rng_x`; the coupling uniform and nothing else comes from `rng_c`.
    fn step(&mut self, x: &mut ChainState, y: &mut ChainState, rng_x: &mut ChaCha8Rng, rng_c: &mut ChaCha8Rng) {
        let k = self.kernel;
        let d = k.dim();
        k.draw_noise(rng_x, &mut self.work_x.xi);
        if let Some(g) = k.gibbs() {
            g.coupled_sweep(&mut x.x, &mut y.x, &self.work_x.xi, rng_c);
            return;
        }
        k.proposal_mean(x, &mut self.work_x.mean);
        k.proposal_mean(y, &mut self.work_y.mean);
        let mut prop_x = vec![0.0; d];
        k.apply_noise(&self.work_x.mean, &self.work_x.xi, &mut prop_x);
        let u = if k.is_metropolis() { rng_x.random::<f64>() } else { 0.5 };

        for i in 0..d {
            self.z[i] = self.work_x.mean[i] - self.work_y.mean[i];
        }
        k.whiten(&mut self.z);
        let xi = &self.work_x.xi;
        let shifted: f64 = xi.iter().zip(&self.z).map(|(a, b)| (a + b) * (a + b)).sum();
        let plain: f64 = xi.iter().map(|a| a * a).sum();
        let log_ratio = -0.5 * (shifted - plain);
        let w: f64 = rng_c.random();
        let prop_y = if w.ln() <= log_ratio {
            prop_x.clone()
        } else {
            let norm = self.z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let proj: f64 = xi.iter().zip(&self.z).map(|(a, b)| a * b).sum::<f64>() / norm;
            for i in 0..d {
                self.eta[i] = xi[i] - 2.0 * proj * self.z[i] / norm;
            }
            let mut p = vec![0.0; d];
            k.apply_noise(&self.work_y.mean, &self.eta, &mut p);
            p
        };
        k.finish(x, prop_x, u, &mut self.work_x.grad);
        k.finish(y, prop_y, u, &mut self.work_y.grad);
    }
}

/// Drives a pair: `L` solo X steps, then joint steps. `visit(t, x_t, y_{t-L})`
/// is called for every `t >= L` until it returns `false` or `t` reaches the cap.
fn drive(
    kernel: &Kernel<'_>,
    x0: Vec<f64>,
    y0: Vec<f64>,
    cfg: &CouplingConfig,
    mut rng_x: ChaCha8Rng,
    mut rng_c: ChaCha8Rng,
    pair: usize,
    mut visit: impl FnMut(usize, &[f64], &[f64]) -> bool,
) -> Result<bool> {
    let mut x = kernel.init_state(x0);
    let mut y = kernel.init_state(y0);
    let mut work = StepScratch::new(kernel.dim());
    let lag = cfg.lag;
    if lag > cfg.cap {
        return Ok(false);
    }
    for t in 1..=lag {
        kernel.step(&mut x, &mut rng_x, &mut work);
        check_finite(&x.x, pair, t)?;
    }
    let mut coupler = Coupler::new(kernel);
    let mut t = lag;
    loop {
        if !visit(t, &x.x, &y.x) {
            return Ok(true);
        }
        if t >= cfg.cap {
            return Ok(false);
        }
        coupler.step(&mut x, &mut y, &mut rng_x, &mut rng_c);
        t += 1;
        check_finite(&x.x, pair, t)?;
        check_finite(&y.x, pair, t - lag)?;
    }
}

fn run_pair(
    kernel: &Kernel<'_>,
    x0: Vec<f64>,
    y0: Vec<f64>,
    cfg: &CouplingConfig,
    rng_x: ChaCha8Rng,
    rng_c: ChaCha8Rng,
    pair: usize,
) -> Result<CoupledPairTrace> {
    let mut trace = Vec::new();
    let mut meeting_time = None;
    drive(kernel, x0, y0, cfg, rng_x, rng_c, pair, |t, x, y| {
        if x == y {
            meeting_time = Some(t);
            return false;
        }
        trace.push(squared_distance(x, y));
        true
    })?;
    Ok(CoupledPairTrace {
        lag: cfg.lag,
        meeting_time,
        distance_sq_trace: trace,
    })
}

/// Full paths of a coupled pair for inspection: `x[k] = X_{L+k}` and
/// `y[k] = Y_k` for `k = 0..=steps`, continuing past any meeting.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

pub fn run_coupled_paths(
    target: &Target,
    kernel: KernelSpec,
    pi0: &dyn InitialSampler,
    lag: usize,
    steps: usize,
    seed: u64,
    pair: usize,
) -> Result<CoupledPaths> {
    let cfg = CouplingConfig {
        lag,
        cap: lag + steps,
        seed,
    };
    check_coupling(target, pi0, &cfg)?;
    let k = Kernel::new(target, kernel)?;
    let (x0, y0, rng_x, rng_c) = initial_states(target, pi0, seed, pair);
    let mut paths = CoupledPaths { x: Vec::new(), y: Vec::new() };
    drive(&k, x0, y0, &cfg, rng_x, rng_c, pair, |_, x, y| {
        paths.x.push(x.to_vec());
        paths.y.push(y.to_vec());
        true
    })?;
    Ok(paths)
}

fn initial_states(
    target: &Target,
    pi0: &dyn InitialSampler,
    seed: u64,
    pair: usize,
) -> (Vec<f64>, Vec<f64>, ChaCha8Rng, ChaCha8Rng) {
    let d = target.dim();
    let mut rng_x = chain_rng(seed, pair);
    let mut rng_c = coupling_rng(seed, pair);
    let mut x0 = vec![0.0; d];
    let mut y0 = vec![0.0; d];
    pi0.sample_into(&mut rng_x, &mut x0);
    pi0.sample_into(&mut rng_c, &mut y0);
    (x0, y0, rng_x, rng_c)
}

fn check_coupling(target: &Target, pi0: &dyn InitialSampler, cfg: &CouplingConfig) -> Result<()> {
    if cfg.lag == 0 {
        return Err(invalid("lag must be at least 1"));
    }
    if pi0.dim() != target.dim() {
        return Err(Error::ShapeMismatch("initial distribution and target dimensions differ".into()));
    }
    Ok(())
}

/// Runs coupled pair `pair`. Its X chain uses the same stream as chain
/// `pair` of an ensemble with the same seed, so the X path is bit-identical
/// to that uncoupled chain.
pub fn run_coupled_pair(
    target: &Target,
    kernel: KernelSpec,
    pi0: &dyn InitialSampler,
    cfg: &CouplingConfig,
    pair: usize,
) -> Result<CoupledPairTrace> {
    check_coupling(target, pi0, cfg)?;
    let k = Kernel::new(target, kernel)?;
    let (x0, y0, rng_x, rng_c) = initial_states(target, pi0, cfg.seed, pair);
    run_pair(&k, x0, y0, cfg, rng_x, rng_c, pair)
}

/// Coupled pair from explicit initial states `X_0 = x0`, `Y_0 = y0`. The
/// streams are used from their start, as for an ensemble chain whose initial
/// law is a point mass.
pub fn run_coupled_pair_from(
    target: &Target,
    kernel: KernelSpec,
    x0: Vec<f64>,
    y0: Vec<f64>,
    cfg: &CouplingConfig,
    pair: usize,
) -> Result<CoupledPairTrace> {
    if cfg.lag == 0 {
        return Err(invalid("lag must be at least 1"));
    }
    if x0.len() != target.dim() || y0.len() != target.dim() {
        return Err(Error::ShapeMismatch("initial states do not match the target dimension".into()));
    }
    let k = Kernel::new(target, kernel)?;
    run_pair(&k, x0, y0, cfg, chain_rng(cfg.seed, pair), coupling_rng(cfg.seed, pair), pair)
}

/// Independent coupled pairs `0..n_pairs`, in parallel.
pub fn run_coupled_pairs(
    target: &Target,
    kernel: KernelSpec,
    pi0: &dyn InitialSampler,
    cfg: &CouplingConfig,
    n_pairs: usize,
) -> Result<Vec<CoupledPairTrace>> {
    check_coupling(target, pi0, cfg)?;
    Kernel::new(target, kernel)?;
    (0..n_pairs)
        .into_par_iter()
        .map(|r| run_coupled_pair(target, kernel, pi0, cfg, r))
        .collect()
}

fn check_traces(traces: &[CoupledPairTrace]) -> Result<usize> {
    let first = traces.first().ok_or_else(|| invalid("need at least one coupled pair"))?;
    if traces.iter().any(|tr| tr.lag != first.lag) {
        return Err(invalid("coupled pairs use different lags"));
    }
    let unmet = traces.iter().filter(|tr| !tr.met()).count();
    if unmet > 0 {
        return Err(Error::Unmet {
            unmet,
            total: traces.len(),
        });
    }
    Ok(first.lag)
}

/// `Σ_{j>=1} sqrt( (1/R) Σ_r ||X_{t+jL} - Y_{t+(j-1)L}||² )`. Terms vanish
/// once every pair has met, so the series is summed until then.
pub fn coupling_bound(traces: &[CoupledPairTrace], t: usize) -> Result<f64> {
    let lag = check_traces(traces)?;
    Ok(bound_unchecked(traces, lag, t))
}

fn bound_unchecked(traces: &[CoupledPairTrace], lag: usize, t: usize) -> f64 {
    let longest = traces.iter().map(|tr| tr.distance_sq_trace.len()).max().unwrap_or(0);
    let r = traces.len() as f64;
    let mut total = 0.0;
    let mut s = t;
    while s < longest {
        let mean: f64 = traces.iter().map(|tr| tr.distance_sq(s)).sum::<f64>() / r;
        total += mean.sqrt();
        s += lag;
    }
    total
}

/// [`coupling_bound`] at each of `times`.
pub fn coupling_bounds(traces: &[CoupledPairTrace], times: &[usize]) -> Result<Vec<f64>> {
    let lag = check_traces(traces)?;
    Ok(times.iter().map(|&t| bound_unchecked(traces, lag, t)).collect())
}
