//! Markov kernels. RWM, MALA and ULA steps are a Gaussian proposal
//! `m(x) + h ξ` followed, for the Metropolis-adjusted kernels, by an
//! accept-reject test. The Gibbs kernel is a single-site sweep.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianDist;
use crate::mcmc::targets::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Rwm,
    Mala,
    Ula,
    GibbsGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Step size `h`; ignored by the Gibbs sampler.
    pub step: f64,
}

impl KernelSpec {
    pub fn rwm(h: f64) -> Self {
        Self { kind: KernelKind::Rwm, step: h }
    }

    pub fn mala(h: f64) -> Self {
        Self { kind: KernelKind::Mala, step: h }
    }

    pub fn ula(h: f64) -> Self {
        Self { kind: KernelKind::Ula, step: h }
    }

    /// Deterministic-scan single-site Gibbs, coordinates in increasing order.
    pub fn gibbs() -> Self {
        Self {
            kind: KernelKind::GibbsGaussian,
            step: 1.0,
        }
    }
}

/// Deterministic-scan single-site sweep: coordinate `i` is redrawn from
/// `N(μ_i - Q_ii⁻¹ Σ_{j≠i} Q_ij (x_j - μ_j), Q_ii⁻¹)` given the current values
/// of all others, `Q` the precision.
#[derive(Debug, Clone)]
pub(crate) struct GibbsSweep {
    mean: Vec<f64>,
    precision: DMatrix<f64>,
    sd: Vec<f64>,
}

impl GibbsSweep {
    fn new(target: &GaussianDist) -> Result<Self> {
        let precision = target.precision();
        let sd = (0..target.dim()).map(|i| precision[(i, i)].recip().sqrt()).collect();
        Ok(Self {
            mean: target.mean().iter().copied().collect(),
            precision,
            sd,
        })
    }

    fn conditional_mean(&self, x: &[f64], i: usize) -> f64 {
        let q = self.precision.column(i);
        let mut acc = 0.0;
        for (j, (xj, mj)) in x.iter().zip(&self.mean).enumerate() {
            if j != i {
                acc += q[j] * (xj - mj);
            }
        }
        self.mean[i] - acc / q[i]
    }

    /// Sweep driven by the standard normals `xi`, one per coordinate.
    pub(crate) fn sweep(&self, x: &mut [f64], xi: &[f64]) {
        for i in 0..x.len() {
            x[i] = self.conditional_mean(x, i) + self.sd[i] * xi[i];
        }
    }

    /// Sweeps `x` exactly as [`GibbsSweep::sweep`] and couples each update of
    /// `y` to it with the reflection-maximal coupling of the two conditionals.
    /// One coupling uniform is drawn from `rng_c` per coordinate.
    pub(crate) fn coupled_sweep<R: Rng + ?Sized>(&self, x: &mut [f64], y: &mut [f64], xi: &[f64], rng_c: &mut R) {
        for i in 0..x.len() {
            let mx = self.conditional_mean(x, i);
            let my = self.conditional_mean(y, i);
            x[i] = mx + self.sd[i] * xi[i];
            let z = (mx - my) / self.sd[i];
            let w: f64 = rng_c.random();
            y[i] = if w.ln() <= -0.5 * ((xi[i] + z) * (xi[i] + z) - xi[i] * xi[i]) {
                x[i]
            } else {
                my - self.sd[i] * xi[i]
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub(crate) log_density: f64,
    pub(crate) grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Kernel<'a> {
    kind: KernelKind,
    h: f64,
    target: &'a Target,
    gibbs: Option<GibbsSweep>,
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(target: &'a Target, spec: KernelSpec) -> Result<Self> {
        let gibbs = match spec.kind {
            KernelKind::GibbsGaussian => {
                let dist = target
                    .gaussian_dist()
                    .ok_or_else(|| invalid("the Gibbs kernel needs a Gaussian target"))?;
                Some(GibbsSweep::new(dist)?)
            }
            KernelKind::Mala | KernelKind::Ula if !target.has_gradient() => {
                return Err(invalid("the kernel needs a target gradient"));
            }
            _ => {
                if !(spec.step > 0.0) || !spec.step.is_finite() {
                    return Err(invalid(format!("step size must be positive, got {}", spec.step)));
                }
                None
            }
        };
        Ok(Self {
            kind: spec.kind,
            h: spec.step,
            target,
            gibbs,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.target.dim()
    }

    pub(crate) fn is_metropolis(&self) -> bool {
        matches!(self.kind, KernelKind::Rwm | KernelKind::Mala)
    }

    pub(crate) fn init_state(&self, x: Vec<f64>) -> ChainState {
        let mut grad = vec![0.0; x.len()];
        let log_density = match self.kind {
            KernelKind::GibbsGaussian => 0.0,
            _ => self.target.log_density_and_grad(&x, &mut grad),
        };
        ChainState { x, log_density, grad }
    }

    pub(crate) fn proposal_mean(&self, s: &ChainState, out: &mut [f64]) {
        match self.kind {
            KernelKind::Rwm => out.copy_from_slice(&s.x),
            KernelKind::Mala | KernelKind::Ula => {
                let c = 0.5 * self.h * self.h;
                for ((o, x), g) in out.iter_mut().zip(&s.x).zip(&s.grad) {
                    *o = x + c * g;
                }
            }
            KernelKind::GibbsGaussian => unreachable!("Gibbs sweeps have no joint proposal"),
        }
    }

    /// `out = mean + h ξ`.
    pub(crate) fn apply_noise(&self, mean: &[f64], xi: &[f64], out: &mut [f64]) {
        for ((o, m), z) in out.iter_mut().zip(mean).zip(xi) {
            *o = m + self.h * z;
        }
    }

    /// In place `v <- v / h`.
    pub(crate) fn whiten(&self, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x /= self.h);
    }

    pub(crate) fn gibbs(&self) -> Option<&GibbsSweep> {
        self.gibbs.as_ref()
    }

    fn log_proposal(&self, from: &ChainState, to: &[f64]) -> f64 {
        let c = 0.5 * self.h * self.h;
        let ss: f64 = to
            .iter()
            .zip(&from.x)
            .zip(&from.grad)
            .map(|((y, x), g)| {
                let r = y - x - c * g;
                r * r
            })
            .sum();
        -ss / (2.0 * self.h * self.h)
    }

    /// Moves to `proposal` or stays, using the uniform `u` for Metropolis
    /// kernels. Returns whether the proposal was accepted.
    pub(crate) fn finish(&self, s: &mut ChainState, proposal: Vec<f64>, u: f64, scratch: &mut Vec<f64>) -> bool {
        match self.kind {
            KernelKind::GibbsGaussian => unreachable!("Gibbs sweeps have no joint proposal"),
            KernelKind::Ula => {
                s.log_density = self.target.log_density_and_grad(&proposal, &mut s.grad);
                s.x = proposal;
                true
            }
            KernelKind::Rwm => {
                let lp = self.target.log_density(&proposal);
                let accept = u.ln() < lp - s.log_density;
                if accept {
                    s.x = proposal;
                    s.log_density = lp;
                }
                accept
            }
            KernelKind::Mala => {
                scratch.resize(proposal.len(), 0.0);
                let lp = self.target.log_density_and_grad(&proposal, scratch);
                let candidate = ChainState {
                    x: proposal,
                    log_density: lp,
                    grad: std::mem::take(scratch),
                };
                let log_alpha = lp - s.log_density + self.log_proposal(&candidate, &s.x)
                    - self.log_proposal(s, &candidate.x);
                if u.ln() < log_alpha {
                    *scratch = std::mem::replace(s, candidate).grad;
                    true
                } else {
                    *scratch = candidate.grad;
                    false
                }
            }
        }
    }

    pub(crate) fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R, xi: &mut [f64]) {
        for z in xi.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
    }

    /// One uncoupled transition. Draw order: `d` normals, then one uniform
    /// for Metropolis kernels.
    pub(crate) fn step<R: Rng + ?Sized>(&self, s: &mut ChainState, rng: &mut R, work: &mut StepScratch) -> bool {
        self.draw_noise(rng, &mut work.xi);
        if let Some(g) = &self.gibbs {
            g.sweep(&mut s.x, &work.xi);
            return true;
        }
        self.proposal_mean(s, &mut work.mean);
        let mut proposal = vec![0.0; self.dim()];
        self.apply_noise(&work.mean, &work.xi, &mut proposal);
        let u = if self.is_metropolis() { rng.random::<f64>() } else { 0.5 };
        self.finish(s, proposal, u, &mut work.grad)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StepScratch {
    pub(crate) xi: Vec<f64>,
    pub(crate) mean: Vec<f64>,
    pub(crate) grad: Vec<f64>,
}

impl StepScratch {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            xi: vec![0.0; d],
            mean: vec![0.0; d],
            grad: vec![0.0; d],
        }
    }
}

pub(crate) fn check_finite(x: &[f64], chain: usize, iteration: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { chain, iteration })
    }
}
