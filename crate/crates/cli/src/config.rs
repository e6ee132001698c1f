use std::fmt::Write;
use std::path::Path;

use dualseg::network::{SegNetConfig, Variant};
use dualseg::training::{TrainConfig, EVAL_STRIDE};
use dualseg::volume::LabelMap;

use crate::error::{io_error, CliError, CliResult};

/// Everything a run needs besides file paths: the model, the optimizer and
/// run-level settings, addressed as `model.*`, `train.*` and `run.*` keys.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: SegNetConfig,
    pub train: TrainConfig,
    pub labelmap: LabelMap,
    pub eval_stride: usize,
    /// Subjects held out when no fold index is given.
    pub holdout: Vec<String>,
    pub model_name: String,
    pub log_every: u64,
    /// Checkpoint period in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: SegNetConfig::default(),
            train: TrainConfig::default(),
            labelmap: LabelMap::default(),
            eval_stride: EVAL_STRIDE,
            holdout: Vec::new(),
            model_name: Variant::Full.name().to_string(),
            log_every: 50,
            checkpoint_every: 0,
        }
    }
}

fn variant_key(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Model1 => "model1",
        Variant::Model2 => "model2",
        Variant::Baseline => "baseline",
    }
}

pub fn parse_variant(s: &str) -> CliResult<Variant> {
    Variant::ALL
        .into_iter()
        .find(|&v| variant_key(v) == s)
        .ok_or_else(|| CliError::Config {
            line: None,
            detail: format!("unknown variant `{s}` (expected full, model1, model2 or baseline)"),
        })
}

fn bad(detail: String) -> CliError {
    CliError::Config { line: None, detail }
}

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> CliResult<V> {
    value.trim().parse().map_err(|_| bad(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        let known = if let Some(k) = key.strip_prefix("model.") {
            if k == "variant" {
                let v = parse_variant(value)?;
                self.model = self.model.clone().with_variant(v);
                self.model_name = v.name().to_string();
                true
            } else {
                self.model.set(k, value)?
            }
        } else if let Some(k) = key.strip_prefix("train.") {
            self.train.set(k, value)?
        } else {
            match key {
                "run.labelmap" => {
                    self.labelmap = value.parse()?;
                    true
                }
                "run.eval_stride" => {
                    self.eval_stride = parse_num(key, value)?;
                    true
                }
                "run.holdout" => {
                    self.holdout = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
                    true
                }
                "run.model_name" => {
                    self.model_name = value.to_string();
                    true
                }
                "run.log_every" => {
                    self.log_every = parse_num(key, value)?;
                    true
                }
                "run.checkpoint_every" => {
                    self.checkpoint_every = parse_num(key, value)?;
                    true
                }
                _ => false,
            }
        };
        if known {
            Ok(())
        } else {
            Err(bad(format!("unknown config key `{key}`")))
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_text(&mut self, text: &str) -> CliResult<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |detail: String| CliError::Config { line: Some(n + 1), detail };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(at(format!("duplicate key `{k}`")));
            }
            self.set(k, v).map_err(|e| match e {
                CliError::Config { detail, .. } => at(detail),
                other => at(other.to_string()),
            })?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `key=value` overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            cfg.parse_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{o}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.model.check_extents(&[self.train.patch_size; 3])?;
        if self.labelmap.classes() != self.model.classes {
            return Err(bad(format!(
                "label map has {} classes, model.classes is {}",
                self.labelmap.classes(),
                self.model.classes
            )));
        }
        if self.eval_stride == 0 {
            return Err(bad("run.eval_stride must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Every key in a fixed order, in the syntax [`parse_text`](Self::parse_text) reads.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (k, v) in self.model.to_pairs() {
            let _ = writeln!(s, "model.{k} = {v}");
        }
        for (k, v) in self.train.to_pairs() {
            let _ = writeln!(s, "train.{k} = {v}");
        }
        let _ = writeln!(s, "run.labelmap = {}", self.labelmap);
        let _ = writeln!(s, "run.eval_stride = {}", self.eval_stride);
        let _ = writeln!(s, "run.holdout = {}", self.holdout.join(","));
        let _ = writeln!(s, "run.model_name = {}", self.model_name);
        let _ = writeln!(s, "run.log_every = {}", self.log_every);
        let _ = writeln!(s, "run.checkpoint_every = {}", self.checkpoint_every);
        s
    }
}
