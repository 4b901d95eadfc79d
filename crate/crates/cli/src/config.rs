//! Flat `key = value` run configuration.
//!
//! Resolution order: task defaults, then the config file, then `--set`
//! overrides, then dedicated flags. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use aquasi::degradation::{DecimationSpec, NoiseKind, NoiseSpec};
use aquasi::solvers::PenaltyUpdate;
use aquasi::{ChannelWeights, Guidance, QuantileConfig, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Denoise,
    Deblur,
    Upsample,
    Degrade,
    ResidualHist,
    Compare,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Denoise => "denoise",
            Task::Deblur => "deblur",
            Task::Upsample => "upsample",
            Task::Degrade => "degrade",
            Task::ResidualHist => "residual-hist",
            Task::Compare => "compare",
        }
    }
}

/// How the quantile filter is guided. `Auto` resolves to static guidance
/// when a guidance image is supplied and to the current iterate otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceMode {
    Auto,
    Fixed(Guidance),
}

impl GuidanceMode {
    fn name(self) -> &'static str {
        match self {
            GuidanceMode::Auto => "auto",
            GuidanceMode::Fixed(g) => g.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    None,
    Gaussian,
    SaltPepper,
    Poisson,
    Speckle,
    GaussianSaltPepper,
}

impl NoiseModel {
    fn name(self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::SaltPepper => "salt-pepper",
            NoiseModel::Poisson => "poisson",
            NoiseModel::Speckle => "speckle",
            NoiseModel::GaussianSaltPepper => "gaussian-salt-pepper",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => NoiseModel::None,
            "gaussian" => NoiseModel::Gaussian,
            "salt-pepper" => NoiseModel::SaltPepper,
            "poisson" => NoiseModel::Poisson,
            "speckle" => NoiseModel::Speckle,
            "gaussian-salt-pepper" => NoiseModel::GaussianSaltPepper,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Rgb,
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub input: Option<PathBuf>,
    pub guidance: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub seed: u64,

    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub q_refresh_period: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub penalty_update: bool,
    pub penalty_factor: f64,
    pub penalty_ratio: f64,
    pub energy_tol: f64,

    pub p: f64,
    pub radius: usize,
    pub sigma_w: f64,
    pub guidance_mode: GuidanceMode,

    pub multichannel: bool,
    pub channel_weights: WeightScheme,

    pub noise: NoiseModel,
    pub noise_sigma: f64,
    pub noise_density: f64,
    pub noise_scale: f64,

    pub decimate: bool,
    pub factor: usize,
    pub blur_sigma: f64,

    pub bins: usize,
    pub bme_delta: f64,
    pub red_lambda: f64,
    pub red_step_size: f64,
    pub red_max_iters: usize,
}

const KEYS: &[&str] = &[
    "task",
    "input",
    "guidance",
    "reference",
    "kernel",
    "output",
    "trace",
    "seed",
    "lambda",
    "mu",
    "epsilon",
    "alpha",
    "beta",
    "step_size",
    "max_iters",
    "q_refresh_period",
    "cg_iters",
    "cg_tol",
    "penalty_update",
    "penalty_factor",
    "penalty_ratio",
    "energy_tol",
    "p",
    "radius",
    "sigma_w",
    "guidance_mode",
    "multichannel",
    "channel_weights",
    "noise",
    "noise_sigma",
    "noise_density",
    "noise_scale",
    "decimate",
    "factor",
    "blur_sigma",
    "bins",
    "bme_delta",
    "red_lambda",
    "red_step_size",
    "red_max_iters",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Defaults for `task`. Restoration tasks share the TV + AQuaSI
    /// denoising defaults; deblurring and upsampling drop TV and use
    /// weights suited to their data terms.
    pub fn for_task(task: Task) -> Self {
        let solver = SolverConfig::default();
        let gd = SolverConfig::gd_default();
        let penalty = solver.penalty_update.unwrap_or_default();
        let mut cfg = Self {
            task,
            input: None,
            guidance: None,
            reference: None,
            kernel: None,
            output: None,
            trace: None,
            seed: 0,
            lambda: solver.lambda,
            mu: solver.mu,
            epsilon: solver.epsilon,
            alpha: solver.alpha,
            beta: solver.beta,
            step_size: solver.step_size,
            max_iters: solver.max_iters,
            q_refresh_period: solver.q_refresh_period,
            cg_iters: solver.cg_iters,
            cg_tol: solver.cg_tol,
            penalty_update: solver.penalty_update.is_some(),
            penalty_factor: penalty.factor,
            penalty_ratio: penalty.ratio,
            energy_tol: solver.energy_tol,
            p: solver.quantile.p,
            radius: solver.quantile.radius,
            sigma_w: solver.quantile.sigma_w,
            guidance_mode: GuidanceMode::Auto,
            multichannel: false,
            channel_weights: WeightScheme::Rgb,
            noise: NoiseModel::Gaussian,
            noise_sigma: 0.1,
            noise_density: 0.05,
            noise_scale: 255.0,
            decimate: false,
            factor: DecimationSpec::default().factor,
            blur_sigma: DecimationSpec::default().blur_sigma,
            bins: 64,
            bme_delta: 0.01,
            red_lambda: 0.1,
            red_step_size: gd.step_size,
            red_max_iters: gd.max_iters,
        };
        match task {
            Task::Deblur => {
                cfg.lambda = 0.05;
                cfg.alpha = 10.0;
                cfg.mu = 0.0;
            }
            Task::Upsample => {
                cfg.lambda = 0.1;
                cfg.mu = 0.0;
                cfg.radius = 4;
                cfg.guidance_mode = GuidanceMode::Fixed(Guidance::Static);
            }
            Task::ResidualHist => {
                cfg.guidance_mode = GuidanceMode::Fixed(Guidance::Uniform);
            }
            _ => {}
        }
        cfg
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "task" => {
                if value != self.task.name() {
                    return Err(CliError::Config(format!(
                        "task: config is for {value:?} but the command is {:?}",
                        self.task.name()
                    )));
                }
            }
            "input" => self.input = opt_path(value),
            "guidance" => self.guidance = opt_path(value),
            "reference" => self.reference = opt_path(value),
            "kernel" => self.kernel = opt_path(value),
            "output" => self.output = opt_path(value),
            "trace" => self.trace = opt_path(value),
            "seed" => self.seed = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "mu" => self.mu = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "step_size" => self.step_size = parse_num(key, value)?,
            "max_iters" => self.max_iters = parse_num(key, value)?,
            "q_refresh_period" => self.q_refresh_period = parse_num(key, value)?,
            "cg_iters" => self.cg_iters = parse_num(key, value)?,
            "cg_tol" => self.cg_tol = parse_num(key, value)?,
            "penalty_update" => self.penalty_update = parse_bool(key, value)?,
            "penalty_factor" => self.penalty_factor = parse_num(key, value)?,
            "penalty_ratio" => self.penalty_ratio = parse_num(key, value)?,
            "energy_tol" => self.energy_tol = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "radius" => self.radius = parse_num(key, value)?,
            "sigma_w" => self.sigma_w = parse_num(key, value)?,
            "guidance_mode" => {
                self.guidance_mode = match value {
                    "auto" => GuidanceMode::Auto,
                    other => GuidanceMode::Fixed(other.parse().map_err(|_| {
                        CliError::Config(format!("guidance_mode: unknown mode {other:?}"))
                    })?),
                }
            }
            "multichannel" => self.multichannel = parse_bool(key, value)?,
            "channel_weights" => {
                self.channel_weights = match value {
                    "rgb" => WeightScheme::Rgb,
                    "unit" => WeightScheme::Unit,
                    _ => return Err(CliError::Config(format!("channel_weights: expected rgb or unit, got {value:?}"))),
                }
            }
            "noise" => {
                self.noise = NoiseModel::parse(value)
                    .ok_or_else(|| CliError::Config(format!("noise: unknown model {value:?}")))?
            }
            "noise_sigma" => self.noise_sigma = parse_num(key, value)?,
            "noise_density" => self.noise_density = parse_num(key, value)?,
            "noise_scale" => self.noise_scale = parse_num(key, value)?,
            "decimate" => self.decimate = parse_bool(key, value)?,
            "factor" => self.factor = parse_num(key, value)?,
            "blur_sigma" => self.blur_sigma = parse_num(key, value)?,
            "bins" => self.bins = parse_num(key, value)?,
            "bme_delta" => self.bme_delta = parse_num(key, value)?,
            "red_lambda" => self.red_lambda = parse_num(key, value)?,
            "red_step_size" => self.red_step_size = parse_num(key, value)?,
            "red_max_iters" => self.red_max_iters = parse_num(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key = value` assignment written as one string.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(key.trim(), value)
    }

    /// Apply a config file body. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_assignment(line)
                .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.detail())))?;
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "task" => self.task.name().into(),
            "input" => path_text(&self.input),
            "guidance" => path_text(&self.guidance),
            "reference" => path_text(&self.reference),
            "kernel" => path_text(&self.kernel),
            "output" => path_text(&self.output),
            "trace" => path_text(&self.trace),
            "seed" => self.seed.to_string(),
            "lambda" => self.lambda.to_string(),
            "mu" => self.mu.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "step_size" => self.step_size.to_string(),
            "max_iters" => self.max_iters.to_string(),
            "q_refresh_period" => self.q_refresh_period.to_string(),
            "cg_iters" => self.cg_iters.to_string(),
            "cg_tol" => self.cg_tol.to_string(),
            "penalty_update" => self.penalty_update.to_string(),
            "penalty_factor" => self.penalty_factor.to_string(),
            "penalty_ratio" => self.penalty_ratio.to_string(),
            "energy_tol" => self.energy_tol.to_string(),
            "p" => self.p.to_string(),
            "radius" => self.radius.to_string(),
            "sigma_w" => self.sigma_w.to_string(),
            "guidance_mode" => self.guidance_mode.name().into(),
            "multichannel" => self.multichannel.to_string(),
            "channel_weights" => match self.channel_weights {
                WeightScheme::Rgb => "rgb".into(),
                WeightScheme::Unit => "unit".into(),
            },
            "noise" => self.noise.name().into(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "noise_density" => self.noise_density.to_string(),
            "noise_scale" => self.noise_scale.to_string(),
            "decimate" => self.decimate.to_string(),
            "factor" => self.factor.to_string(),
            "blur_sigma" => self.blur_sigma.to_string(),
            "bins" => self.bins.to_string(),
            "bme_delta" => self.bme_delta.to_string(),
            "red_lambda" => self.red_lambda.to_string(),
            "red_step_size" => self.red_step_size.to_string(),
            "red_max_iters" => self.red_max_iters.to_string(),
            _ => unreachable!("every listed key has a value"),
        }
    }

    /// Every key with its current value, in a form `apply_text` accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    /// The guidance mode actually used, given whether a guidance image exists.
    pub fn resolved_guidance(&self) -> Guidance {
        match self.guidance_mode {
            GuidanceMode::Fixed(g) => g,
            GuidanceMode::Auto if self.guidance.is_some() => Guidance::Static,
            GuidanceMode::Auto => Guidance::DynamicIterate,
        }
    }

    pub fn quantile(&self) -> QuantileConfig {
        QuantileConfig {
            p: self.p,
            radius: self.radius,
            sigma_w: self.sigma_w,
            guidance: self.resolved_guidance(),
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            mu: self.mu,
            epsilon: self.epsilon,
            alpha: self.alpha,
            beta: self.beta,
            step_size: self.step_size,
            max_iters: self.max_iters,
            q_refresh_period: self.q_refresh_period,
            cg_iters: self.cg_iters,
            cg_tol: self.cg_tol,
            penalty_update: self.penalty_update.then_some(PenaltyUpdate {
                factor: self.penalty_factor,
                ratio: self.penalty_ratio,
            }),
            energy_tol: self.energy_tol,
            quantile: self.quantile(),
        }
    }

    pub fn noise_spec(&self) -> Option<NoiseSpec> {
        let kind = match self.noise {
            NoiseModel::None => return None,
            NoiseModel::Gaussian => NoiseKind::Gaussian { sigma: self.noise_sigma },
            NoiseModel::SaltPepper => NoiseKind::SaltPepper {
                density: self.noise_density,
            },
            NoiseModel::Poisson => NoiseKind::Poisson { scale: self.noise_scale },
            NoiseModel::Speckle => NoiseKind::Speckle { sigma: self.noise_sigma },
            NoiseModel::GaussianSaltPepper => NoiseKind::GaussianSaltPepper {
                sigma: self.noise_sigma,
                density: self.noise_density,
            },
        };
        Some(NoiseSpec::new(kind, self.seed))
    }

    pub fn decimation(&self) -> DecimationSpec {
        DecimationSpec {
            factor: self.factor,
            blur_sigma: self.blur_sigma,
        }
    }

    pub fn weights(&self, channels: usize) -> ChannelWeights {
        match self.channel_weights {
            WeightScheme::Rgb if channels == 3 => ChannelWeights::rgb(),
            _ => ChannelWeights::unit(channels),
        }
    }
}
