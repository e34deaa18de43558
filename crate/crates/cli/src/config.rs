//! Experiment configuration: a TOML file with nested sections, mirrored
//! verbatim (fully resolved, seeds included) into `config.json` next to the
//! outputs of every run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gnda::{AlphaChoice, GnConfig, LmConfig, ModelSpec, ObservationOperator, WcConfig};

/// Window lengths above this need `window.allow_long = true`; a full
/// data-generation horizon (T = 100) reaches ~1.6M unknowns on Lorenz 96.
pub const LONG_WINDOW_T: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub window: WindowSection,
    pub observations: ObsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub parameters: ParamSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Noisefree,
    Noisy,
    Param,
    CompareWc,
    SweepAlpha,
    SweepGamma,
    SweepObs,
    SweepWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKindName,
    pub dt: f64,
    /// Lorenz 96 state dimension.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Lorenz 96 forcing.
    #[serde(default = "default_forcing")]
    pub forcing: f64,
    /// Lorenz 63 parameters.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindName {
    Lorenz63,
    Lorenz96,
}

fn default_dim() -> usize {
    40
}
fn default_forcing() -> f64 {
    8.0
}
fn default_sigma() -> f64 {
    10.0
}
fn default_rho() -> f64 {
    28.0
}
fn default_beta() -> f64 {
    8.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    /// Assimilation window length; the number of steps is `round(t / dt)`.
    pub t: f64,
    /// Long windows (T > 10) must be opted into; they are far outside the
    /// desk-scale defaults and emit a runtime warning.
    #[serde(default)]
    pub allow_long: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSection {
    /// Steps between observation times.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Observed components; mutually exclusive with `count`.
    #[serde(default)]
    pub components: Option<Vec<usize>>,
    /// Observe this many evenly spaced components.
    #[serde(default)]
    pub count: Option<usize>,
    /// Observation noise standard deviation; zero means noise-free.
    #[serde(default)]
    pub gamma: f64,
    /// Standard deviation of the background perturbation around the truth.
    #[serde(default = "default_sigma_b")]
    pub sigma_b: f64,
}

fn default_cadence() -> usize {
    10
}
fn default_sigma_b() -> f64 {
    1.0
}

/// `alpha = 0.004` or `alpha = "auto"` in the TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaField {
    Fixed(f64),
    Search(String),
}

impl Default for AlphaField {
    fn default() -> Self {
        AlphaField::Search("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub alpha: AlphaField,
    pub alpha0: f64,
    /// Assumed bound on the initial error; when absent the measured initial
    /// error of each realization is used.
    pub c: Option<f64>,
    pub step_tol: f64,
    pub max_iter: usize,
    pub monitor: bool,
    pub norm_rel_tol: f64,
    pub safety_max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let g = GnConfig::noisefree();
        Self {
            alpha: AlphaField::default(),
            alpha0: g.alpha0,
            c: g.c,
            step_tol: g.step_tol,
            max_iter: g.max_iter,
            monitor: g.monitor,
            norm_rel_tol: g.norm_rel_tol,
            safety_max_iter: g.safety_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub size: usize,
    pub master_seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            size: 100,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSection {
    /// Indices of the model parameters to estimate.
    pub indices: Vec<usize>,
    /// Initial guesses, one per estimated index.
    pub initial: Vec<f64>,
    pub tol: f64,
    pub max_outer: usize,
}

impl Default for ParamSection {
    fn default() -> Self {
        Self {
            indices: Vec::new(),
            initial: Vec::new(),
            tol: 1e-3,
            max_outer: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Model-error variance Q = q_var I.
    pub q_var: f64,
    /// Observation-error variance R = r_var I; when absent, gamma^2 is used
    /// (or 1 for noise-free data).
    pub r_var: Option<f64>,
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let lm = LmConfig::default();
        Self {
            q_var: 1.0,
            r_var: None,
            lambda0: lm.lambda0,
            lambda_up: lm.lambda_up,
            lambda_down: lm.lambda_down,
            grad_tol: lm.grad_tol,
            step_tol: lm.step_tol,
            max_iter: lm.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub obs_counts: Vec<usize>,
    /// Window lengths (same unit as `window.t`).
    pub window_lengths: Vec<f64>,
    /// Error level defining "iterations to tolerance" in observation sweeps.
    pub err_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; falls back to $GNDA_OUT, then "./gnda-out".
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        let cfg = Self::parse_toml(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse without validating, for callers that still override fields
    /// (mode, seed, output directory) before the final validation.
    pub fn parse_toml(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml_str(&s)
    }

    pub fn parse_path(path: &Path) -> Result<Self, String> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse_toml(&s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model.dt <= 0.0 {
            return Err("model.dt must be positive".into());
        }
        if self.window.t <= 0.0 {
            return Err("window.t must be positive".into());
        }
        if self.num_steps() == 0 {
            return Err("window shorter than one model step".into());
        }
        if self.window.t > LONG_WINDOW_T && !self.window.allow_long {
            return Err(format!(
                "window.t = {} exceeds the desk-scale limit {LONG_WINDOW_T}; \
                 set window.allow_long = true to opt in",
                self.window.t
            ));
        }
        if self.observations.cadence == 0 {
            return Err("observations.cadence must be at least 1".into());
        }
        if self.observations.gamma < 0.0 {
            return Err("observations.gamma must be non-negative".into());
        }
        if self.observations.components.is_some() && self.observations.count.is_some() {
            return Err("give observations.components or observations.count, not both".into());
        }
        let dim = self.state_dim();
        if let Some(count) = self.observations.count {
            if count == 0 || count > dim {
                return Err(format!("observations.count must be in 1..={dim}"));
            }
        }
        if let Some(comps) = &self.observations.components {
            if comps.is_empty() {
                return Err("observations.components must not be empty".into());
            }
            if comps.iter().any(|&c| c >= dim) {
                return Err(format!("observation component out of range (dim {dim})"));
            }
        }
        if let AlphaField::Search(s) = &self.solver.alpha {
            if s != "auto" {
                return Err(format!("solver.alpha must be a number or \"auto\", got {s:?}"));
            }
        }
        if self.ensemble.size == 0 {
            return Err("ensemble.size must be at least 1".into());
        }
        match self.mode {
            Mode::Noisefree if self.observations.gamma != 0.0 => {
                return Err("mode = noisefree requires observations.gamma = 0".into());
            }
            Mode::Noisy if self.observations.gamma == 0.0 => {
                return Err("mode = noisy requires observations.gamma > 0".into());
            }
            Mode::Param => {
                if self.parameters.indices.is_empty() {
                    return Err("mode = param requires parameters.indices".into());
                }
                if self.parameters.indices.len() != self.parameters.initial.len() {
                    return Err("parameters.initial must match parameters.indices in length".into());
                }
            }
            Mode::SweepAlpha if self.sweep.alphas.is_empty() => {
                return Err("mode = sweep_alpha requires sweep.alphas".into());
            }
            Mode::SweepGamma if self.sweep.gammas.is_empty() => {
                return Err("mode = sweep_gamma requires sweep.gammas".into());
            }
            Mode::SweepObs if self.sweep.obs_counts.is_empty() => {
                return Err("mode = sweep_obs requires sweep.obs_counts".into());
            }
            Mode::SweepWindow if self.sweep.window_lengths.is_empty() => {
                return Err("mode = sweep_window requires sweep.window_lengths".into());
            }
            _ => {}
        }
        if self.sweep.err_tol < 0.0 {
            return Err("sweep.err_tol must be non-negative".into());
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self.model.kind {
            ModelKindName::Lorenz63 => 3,
            ModelKindName::Lorenz96 => self.model.dim,
        }
    }

    pub fn num_steps(&self) -> usize {
        (self.window.t / self.model.dt).round() as usize
    }

    pub fn model_spec(&self) -> ModelSpec {
        match self.model.kind {
            ModelKindName::Lorenz63 => ModelSpec::lorenz63_with(
                self.model.sigma,
                self.model.rho,
                self.model.beta,
                self.model.dt,
            ),
            ModelKindName::Lorenz96 => {
                ModelSpec::lorenz96(self.model.dim, self.model.forcing, self.model.dt)
            }
        }
    }

    /// The observed components, resolved from either form.
    pub fn observed_components(&self) -> Vec<usize> {
        if let Some(comps) = &self.observations.components {
            comps.clone()
        } else if let Some(count) = self.observations.count {
            ObservationOperator::evenly_spaced_components(self.state_dim(), count)
        } else {
            (0..self.state_dim()).collect()
        }
    }

    pub fn observation_operator(&self) -> ObservationOperator {
        ObservationOperator::every_kth(
            self.state_dim(),
            self.num_steps(),
            self.observations.cadence,
            &self.observed_components(),
        )
    }

    pub fn gn_config(&self) -> GnConfig {
        GnConfig {
            alpha: match self.solver.alpha {
                AlphaField::Fixed(a) => AlphaChoice::Fixed(a),
                AlphaField::Search(_) => AlphaChoice::Auto,
            },
            alpha0: self.solver.alpha0,
            c: self.solver.c,
            step_tol: self.solver.step_tol,
            max_iter: self.solver.max_iter,
            monitor: self.solver.monitor,
            norm_rel_tol: self.solver.norm_rel_tol,
            safety_max_iter: self.solver.safety_max_iter,
        }
    }

    pub fn wc_config(&self) -> Result<WcConfig, String> {
        let r_var = self.baseline.r_var.unwrap_or(if self.observations.gamma > 0.0 {
            self.observations.gamma * self.observations.gamma
        } else {
            1.0
        });
        WcConfig::new(self.baseline.q_var, r_var).map_err(|e| e.to_string())
    }

    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            lambda0: self.baseline.lambda0,
            lambda_up: self.baseline.lambda_up,
            lambda_down: self.baseline.lambda_down,
            grad_tol: self.baseline.grad_tol,
            step_tol: self.baseline.step_tol,
            max_iter: self.baseline.max_iter,
        }
    }

    /// The directory all files of this run go to.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            d.clone()
        } else if let Ok(d) = std::env::var("GNDA_OUT") {
            PathBuf::from(d)
        } else {
            PathBuf::from("gnda-out")
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
