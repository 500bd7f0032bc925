//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use wassbound::gaussian::GaussianDist;
use wassbound::mcmc::{
    target_ar1_circulant, target_ar1_covariance, target_stochastic_volatility_simulated, AsymptoteWindow,
    InitialSampler, KernelSpec, PointMass, SvParams, SvPrior, Target,
};

use crate::error::{config_err, CliError, Result};

fn default_alpha() -> f64 {
    0.05
}

fn default_threshold() -> f64 {
    6.0
}

fn default_initial_variance() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    EstimateFromSamples(EstimateConfig),
    GibbsAr1(ChainExperiment),
    UlaMalaScaling(ScalingConfig),
    StochasticVolatility(ChainExperiment),
    CouplingBaseline(ChainExperiment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub nu: PathBuf,
    pub mu: PathBuf,
    pub mu_prime: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Ar1Circulant { d: usize, rho: f64 },
    Ar1Covariance { d: usize },
    StandardGaussian { d: usize },
    StochasticVolatility { len: usize, beta: f64, phi: f64, sigma: f64, data_seed: u64 },
}

impl TargetConfig {
    pub fn build(&self) -> Result<Target> {
        match *self {
            TargetConfig::Ar1Circulant { d, rho } => target_ar1_circulant(d, rho),
            TargetConfig::Ar1Covariance { d } => target_ar1_covariance(d),
            TargetConfig::StandardGaussian { d } => GaussianDist::standard(d).and_then(Target::gaussian),
            TargetConfig::StochasticVolatility { len, beta, phi, sigma, data_seed } => {
                target_stochastic_volatility_simulated(SvParams { beta, phi, sigma }, len, data_seed)
            }
        }
        .map_err(config_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Rwm { step: f64 },
    Mala { step: f64 },
    Ula { step: f64 },
    Gibbs,
}

impl KernelConfig {
    pub fn spec(&self) -> KernelSpec {
        match *self {
            KernelConfig::Rwm { step } => KernelSpec::rwm(step),
            KernelConfig::Mala { step } => KernelSpec::mala(step),
            KernelConfig::Ula { step } => KernelSpec::ula(step),
            KernelConfig::Gibbs => KernelSpec::gibbs(),
        }
    }
}

/// Initial distribution of every chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// A Gaussian target with its covariance multiplied by `factor`.
    ScaledTarget { factor: f64 },
    /// `N(0, variance I)`.
    Isotropic { variance: f64 },
    /// The latent-process prior of a stochastic volatility target.
    Prior,
    Point { x: Vec<f64> },
}

impl InitialConfig {
    pub fn build(&self, target_cfg: &TargetConfig, target: &Target) -> Result<Box<dyn InitialSampler>> {
        let d = target.dim();
        match self {
            InitialConfig::ScaledTarget { factor } => {
                let dist = target
                    .gaussian_dist()
                    .ok_or_else(|| CliError::Config("scaled_target start needs a Gaussian target".into()))?;
                Ok(Box::new(dist.with_scaled_cov(*factor).map_err(config_err)?))
            }
            InitialConfig::Isotropic { variance } => {
                Ok(Box::new(GaussianDist::isotropic(d, *variance).map_err(config_err)?))
            }
            InitialConfig::Prior => match *target_cfg {
                TargetConfig::StochasticVolatility { len, beta, phi, sigma, .. } => Ok(Box::new(SvPrior {
                    params: SvParams { beta, phi, sigma },
                    len,
                })),
                _ => Err(CliError::Config("prior start needs a stochastic volatility target".into())),
            },
            InitialConfig::Point { x } => {
                if x.len() != d {
                    return Err(CliError::Config(format!("point start has {} coordinates, target has {d}", x.len())));
                }
                Ok(Box::new(PointMass(x.clone())))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: usize,
    pub end: usize,
    pub stride: usize,
}

impl WindowConfig {
    pub fn window(&self) -> AsymptoteWindow {
        AsymptoteWindow {
            start: self.start,
            end: self.end,
            stride: self.stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub lag: usize,
    pub pairs: usize,
    /// Maximum X-chain iterations per pair.
    pub cap: usize,
}

/// One ensemble run with asymptote-averaged bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainExperiment {
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n_chains: usize,
    pub target: TargetConfig,
    pub kernel: KernelConfig,
    pub initial: InitialConfig,
    pub horizon: usize,
    pub thin: usize,
    /// `T`: the ensemble at this iteration stands in for the limit.
    pub reference_iteration: usize,
    pub asymptote: WindowConfig,
    /// Report recorded iterations strictly below this; defaults to `T`.
    #[serde(default)]
    pub report_until: Option<usize>,
    #[serde(default)]
    pub coupling: Option<CouplingSection>,
}

impl ChainExperiment {
    /// Checks that every referenced iteration is recorded under the thinning.
    pub fn validate(&self) -> Result<Vec<usize>> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n_chains < 2 {
            return bad("n_chains must be at least 2".into());
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        let t = self.reference_iteration;
        if t > self.horizon || t % self.thin != 0 {
            return bad(format!("reference_iteration {t} is not a recorded iteration"));
        }
        let window = self.asymptote.window().iterations().map_err(config_err)?;
        for &a in &window {
            if a % self.thin != 0 {
                return bad(format!("asymptote iteration {a} is not a multiple of thin = {}", self.thin));
            }
            if a >= t {
                return bad(format!("asymptote iteration {a} is not below reference_iteration {t}"));
            }
        }
        if let Some(c) = &self.coupling {
            if c.lag == 0 || c.pairs == 0 || c.cap < c.lag {
                return bad("coupling needs lag >= 1, pairs >= 1 and cap >= lag".into());
            }
        }
        Ok(window)
    }

    pub fn report_times(&self) -> Vec<usize> {
        let until = self.report_until.unwrap_or(self.reference_iteration).min(self.reference_iteration);
        (0..until).step_by(self.thin).collect()
    }
}

/// `h = coef * d^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRule {
    pub coef: f64,
    pub exponent: f64,
}

impl StepRule {
    pub fn step(&self, d: usize) -> f64 {
        self.coef * (d as f64).powf(self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRun {
    pub step_rule: StepRule,
    pub horizon: usize,
    pub thin: usize,
    pub reference_iteration: usize,
    pub asymptote: WindowConfig,
}

/// MALA and ULA on `N(0, Σ)`, `Σ_ij = 0.5^{|i-j|}`, from `N(0, v I)` across
/// dimensions; mixing times at a threshold on the squared distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n_chains: usize,
    pub dimensions: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_initial_variance")]
    pub initial_variance: f64,
    pub mala: ScalingRun,
    pub ula: ScalingRun,
}

impl ScalingRun {
    /// The equivalent single-dimension chain experiment. Bounds are reported
    /// up to the start of the asymptote window.
    pub fn experiment(&self, cfg: &ScalingConfig, d: usize, kernel: KernelConfig) -> ChainExperiment {
        ChainExperiment {
            seed: cfg.seed,
            alpha: cfg.alpha,
            n_chains: cfg.n_chains,
            target: TargetConfig::Ar1Covariance { d },
            kernel,
            initial: InitialConfig::Isotropic {
                variance: cfg.initial_variance,
            },
            horizon: self.horizon,
            thin: self.thin,
            reference_iteration: self.reference_iteration,
            asymptote: self.asymptote,
            report_until: Some(self.asymptote.start),
            coupling: None,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// Reads a configuration file. Relative sample paths resolve against the
/// directory holding the file.
pub fn read_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut config = parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let (ExperimentConfig::EstimateFromSamples(c), Some(dir)) = (&mut config, path.parent()) {
        for p in [&mut c.nu, &mut c.mu, &mut c.mu_prime] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(config)
}
