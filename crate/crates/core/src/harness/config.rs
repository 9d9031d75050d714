// SPDX-License-Identifier: Apache-2.0

//! Versioned JSON experiment configuration.
//!
//! Every key has a default, so `{}` is a valid config. Unknown keys are
//! rejected. CLI flags are applied on top of the file with
//! [`ExperimentConfig::apply_overrides`] and the result is validated once.

use crate::activation::LutParams;
use crate::datapath::{Arch, CycleModel, StageCosts, DEFAULT_CLOCK_HZ};
use crate::environments::{EnvSpec, Environment, DEFAULT_GAMMA};
use crate::fixedpoint::QFormat;
use crate::neural::{BackendKind, Topology, UpdateRule};
use crate::qlearning::{EpsilonSchedule, Hyperparams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EnvPreset {
    Simple,
    Complex,
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,

    pub env: EnvPreset,
    /// Chain length; `env = chain` only.
    pub chain_length: usize,
    /// Grid overrides; `None` keeps the preset value.
    pub state_dim: Option<usize>,
    pub action_dim: Option<usize>,
    pub actions_per_state: Option<usize>,
    pub state_space_size: Option<usize>,
    /// Reward scaling of the environment; defaults to `gamma`.
    pub gamma_cap: Option<f64>,
    pub env_seed: u64,

    pub arch: Arch,
    /// Hidden layer sizes for `arch = mlp`.
    pub hidden_sizes: Vec<usize>,
    /// Optional cross-check against the environment's encoding width.
    pub input_dim: Option<usize>,
    pub init_scale: f64,

    pub backend: BackendKind,
    pub word_bits: u32,
    pub frac_bits: u32,
    pub lut_depth: usize,
    pub lut_lo: f64,
    pub lut_hi: f64,
    pub float_uses_lut: bool,

    pub alpha: f64,
    pub gamma: f64,
    pub c_rate: f64,
    /// When set, the learning factor ramps linearly from this value to
    /// `c_rate` over `c_rate_ramp_steps` updates.
    pub c_rate_start: Option<f64>,
    pub c_rate_ramp_steps: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub rule: UpdateRule,

    pub seed: u64,
    pub steps: u64,
    pub eval_every: u64,
    pub episode_len: u64,
    /// Final policy accuracy that `train --check` requires.
    pub check_min_accuracy: f64,

    pub clock_hz: f64,
    /// Stage costs for the cycle model; `None` uses the calibrated defaults.
    pub stage_costs: Option<StageCosts>,

    pub sweep_word_bits: Vec<u32>,
    pub sweep_frac_bits: Vec<u32>,
    pub sweep_lut_depths: Vec<usize>,
    /// Probe pairs per sweep combination.
    pub probe_pairs: usize,

    pub timing_trials: usize,
    pub timing_updates: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        let l = LutParams::default();
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            env: EnvPreset::Simple,
            chain_length: 5,
            state_dim: None,
            action_dim: None,
            actions_per_state: None,
            state_space_size: None,
            gamma_cap: None,
            env_seed: 0,
            arch: Arch::Mlp,
            hidden_sizes: vec![4],
            input_dim: None,
            init_scale: 0.5,
            backend: BackendKind::Float,
            word_bits: QFormat::DEFAULT.word_bits(),
            frac_bits: QFormat::DEFAULT.frac_bits(),
            lut_depth: l.depth,
            lut_lo: l.lo,
            lut_hi: l.hi,
            float_uses_lut: false,
            alpha: h.alpha,
            gamma: DEFAULT_GAMMA,
            c_rate: h.c_rate,
            c_rate_start: None,
            c_rate_ramp_steps: 0,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_decay_steps: 10_000,
            rule: UpdateRule::Textbook,
            seed: 0,
            steps: 20_000,
            eval_every: 1_000,
            episode_len: 50,
            check_min_accuracy: 0.9,
            clock_hz: DEFAULT_CLOCK_HZ,
            stage_costs: None,
            sweep_word_bits: vec![32],
            sweep_frac_bits: vec![2, 4, 8, 12, 16],
            sweep_lut_depths: vec![256, 1024],
            probe_pairs: 1000,
            timing_trials: 5,
            timing_updates: 1000,
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub arch: Option<Arch>,
    pub env: Option<EnvPreset>,
    pub steps: Option<u64>,
    pub rule: Option<UpdateRule>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.backend {
            self.backend = v;
        }
        if let Some(v) = o.arch {
            self.arch = v;
        }
        if let Some(v) = o.env {
            self.env = v;
        }
        if let Some(v) = o.steps {
            self.steps = v;
        }
        if let Some(v) = o.rule {
            self.rule = v;
        }
    }

    pub fn gamma_cap(&self) -> f64 {
        self.gamma_cap.unwrap_or(self.gamma)
    }

    pub fn env_spec(&self) -> EnvSpec {
        let base = match self.env {
            EnvPreset::Simple => EnvSpec::simple(),
            EnvPreset::Complex => EnvSpec::complex(),
            EnvPreset::Chain => EnvSpec {
                state_dim: 1,
                action_dim: 1,
                actions_per_state: 2,
                state_space_size: self.chain_length,
                gamma_cap: self.gamma_cap(),
                seed: 0,
            },
        };
        if self.env == EnvPreset::Chain {
            return base;
        }
        EnvSpec {
            state_dim: self.state_dim.unwrap_or(base.state_dim),
            action_dim: self.action_dim.unwrap_or(base.action_dim),
            actions_per_state: self.actions_per_state.unwrap_or(base.actions_per_state),
            state_space_size: self.state_space_size.unwrap_or(base.state_space_size),
            gamma_cap: self.gamma_cap(),
            seed: self.env_seed,
        }
    }

    pub fn build_env(&self) -> Result<Environment, ConfigError> {
        let built = match self.env {
            EnvPreset::Chain => Environment::chain(self.chain_length, self.gamma_cap()),
            _ => Environment::grid(self.env_spec()),
        };
        built.map_err(|e| ConfigError::Invalid(format!("environment: {e}")))
    }

    pub fn topology(&self, input_dim: usize) -> Topology {
        match self.arch {
            Arch::Perceptron => Topology::perceptron(input_dim),
            Arch::Mlp => Topology::mlp(input_dim, self.hidden_sizes.clone()),
        }
    }

    pub fn qformat(&self) -> Result<QFormat, ConfigError> {
        QFormat::new(self.word_bits, self.frac_bits).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn lut_params(&self) -> LutParams {
        LutParams {
            lo: self.lut_lo,
            hi: self.lut_hi,
            depth: self.lut_depth,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            gamma: self.gamma,
            c_rate: self.c_rate,
            epsilon: self.eps_end,
        }
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.eps_start,
            end: self.eps_end,
            decay_steps: self.eps_decay_steps,
        }
    }

    /// Learning factor for update `step`.
    pub fn c_rate_at(&self, step: u64) -> f64 {
        match self.c_rate_start {
            Some(start) if step < self.c_rate_ramp_steps => {
                start + (self.c_rate - start) * (step as f64 / self.c_rate_ramp_steps as f64)
            }
            _ => self.c_rate,
        }
    }

    pub fn cycle_model(&self) -> CycleModel {
        let mut m = CycleModel::new(self.arch, self.backend).with_clock(self.clock_hz);
        if let Some(c) = self.stage_costs {
            m.costs = c;
        }
        m
    }

    /// Checks every key and cross-key constraint; the error names the
    /// offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!("schema_version must be {SCHEMA_VERSION}"));
        }
        if self.env == EnvPreset::Chain {
            if self.chain_length < 2 {
                return invalid("chain_length must be at least 2");
            }
            if self.state_dim.is_some()
                || self.action_dim.is_some()
                || self.actions_per_state.is_some()
                || self.state_space_size.is_some()
            {
                return invalid("grid overrides are not allowed with env = chain");
            }
        }
        let cap = self.gamma_cap();
        if !(0.0..1.0).contains(&cap) {
            return invalid(format!("gamma_cap must lie in [0, 1), got {cap}"));
        }
        if self.gamma > cap {
            return invalid(format!(
                "gamma {} exceeds gamma_cap {cap}; discounted returns could leave the sigmoid range",
                self.gamma
            ));
        }
        self.hyperparams().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.epsilon_schedule()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(c) = self.c_rate_start {
            if !(c > 0.0 && c.is_finite()) {
                return invalid(format!("c_rate_start must be positive, got {c}"));
            }
        }
        let env = self.build_env()?;
        if let Some(d) = self.input_dim {
            if d != env.input_width() {
                return invalid(format!(
                    "input_dim {d} does not match the environment encoding width {}",
                    env.input_width()
                ));
            }
        }
        if self.arch == Arch::Mlp && self.hidden_sizes.is_empty() {
            return invalid("arch = mlp needs at least one hidden layer in hidden_sizes");
        }
        self.topology(env.input_width())
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return invalid("init_scale must be positive");
        }
        let fmt = self.qformat()?;
        self.lut_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.backend == BackendKind::Fixed {
            crate::activation::LutPair::fixed(self.lut_params(), fmt)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.eval_every == 0 {
            return invalid("eval_every must be positive");
        }
        if self.episode_len == 0 {
            return invalid("episode_len must be positive");
        }
        if !(0.0..=1.0).contains(&self.check_min_accuracy) {
            return invalid("check_min_accuracy must lie in [0, 1]");
        }
        self.cycle_model().validate().map_err(ConfigError::Invalid)?;
        if self.sweep_word_bits.is_empty() || self.sweep_frac_bits.is_empty() || self.sweep_lut_depths.is_empty() {
            return invalid("sweep lists must be non-empty");
        }
        if self.probe_pairs == 0 {
            return invalid("probe_pairs must be positive");
        }
        if self.timing_trials < 5 {
            return invalid("timing_trials must be at least 5");
        }
        if self.timing_updates == 0 {
            return invalid("timing_updates must be positive");
        }
        Ok(())
    }
}
