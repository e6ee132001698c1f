use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{self, parse_value};

/// When the decoupled weight decay is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayMode {
    /// Every optimizer step.
    EveryStep,
    /// Only at iterations that are positive multiples of the decay period.
    Periodic,
}

impl fmt::Display for DecayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayMode::EveryStep => "every_step",
            DecayMode::Periodic => "periodic",
        })
    }
}

impl FromStr for DecayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every_step" => Ok(DecayMode::EveryStep),
            "periodic" => Ok(DecayMode::Periodic),
            _ => Err(Error::Invalid(format!("unknown decay mode `{s}`"))),
        }
    }
}

/// Optimizer and sampling hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub decay_period: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    /// Total optimizer steps.
    pub iterations: u64,
    pub seed: u64,
    /// Minimum share of each batch drawn around a foreground voxel.
    pub foreground_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3.3e-3,
            weight_decay: 2e-6,
            decay_mode: DecayMode::EveryStep,
            decay_period: 1000,
            batch_size: 5,
            patch_size: 32,
            iterations: 1000,
            seed: 0,
            foreground_fraction: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("TrainConfig: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.decay_period == 0 {
            return bad("decay_period must be ≥ 1");
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return bad("batch_size and patch_size must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.foreground_fraction) {
            return bad("foreground_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam betas must lie in [0, 1) and epsilon be positive");
        }
        Ok(())
    }

    /// Number of patches per batch that must contain foreground.
    pub fn foreground_quota(&self) -> usize {
        (self.batch_size as f64 * self.foreground_fraction).ceil() as usize
    }

    /// Every field except `iterations`, which may grow between resumes.
    fn identity_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("decay_mode", self.decay_mode.to_string()),
            ("decay_period", self.decay_period.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("foreground_fraction", format!("{:?}", self.foreground_fraction)),
            ("beta1", format!("{:?}", self.beta1)),
            ("beta2", format!("{:?}", self.beta2)),
            ("epsilon", format!("{:?}", self.epsilon)),
        ]
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = self.identity_pairs();
        pairs.insert(6, ("iterations", self.iterations.to_string()));
        pairs
    }

    /// Canonical text of the fields that define a training run's identity.
    pub fn identity(&self) -> String {
        kv::describe(&self.identity_pairs())
    }

    pub fn describe(&self) -> String {
        kv::describe(&self.to_pairs())
    }

    /// Sets one field from text. Returns `Ok(false)` for a key this config
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "decay_mode" => self.decay_mode = value.trim().parse()?,
            "decay_period" => self.decay_period = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "patch_size" => self.patch_size = parse_value(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "foreground_fraction" => self.foreground_fraction = parse_value(key, value)?,
            "beta1" => self.beta1 = parse_value(key, value)?,
            "beta2" => self.beta2 = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_description(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (k, v) in kv::parse_description(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::Invalid(format!("unknown train config key `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Learning rate at a 0-based iteration: constant.
pub fn lr_schedule(_iteration: u64, cfg: &TrainConfig) -> f64 {
    cfg.learning_rate
}

/// Decay coefficient applied at a 0-based iteration.
pub fn weight_decay_at(iteration: u64, cfg: &TrainConfig) -> f64 {
    match cfg.decay_mode {
        DecayMode::EveryStep => cfg.weight_decay,
        DecayMode::Periodic if iteration > 0 && iteration % cfg.decay_period == 0 => cfg.weight_decay,
        DecayMode::Periodic => 0.0,
    }
}
