use crate::error::{Error, Result};
use crate::kv::{self, parse_value};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SegNetConfig {
    /// Input modalities (T1, T2).
    pub modalities: usize,
    /// Output classes including background.
    pub classes: usize,
    /// Channels after the stem; level `l` carries `base_channels · 2^l`.
    pub base_channels: usize,
    /// Number of downsamplings.
    pub depth: usize,
    /// Levels at which dual attention is applied (`depth` is the bottleneck).
    pub attention_levels: Vec<usize>,
    pub enable_attention: bool,
    pub enable_dcp: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            modalities: 2,
            classes: 4,
            base_channels: 16,
            depth: 3,
            attention_levels: vec![3],
            enable_attention: true,
            enable_dcp: true,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

/// The ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// DCP downsampling and dual attention.
    Full,
    /// Attention removed.
    Model1,
    /// DCP downsampling replaced by plain strided convolutions.
    Model2,
    /// Both removed: a plain U-shaped network.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::Model1, Variant::Model2, Variant::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "Our model",
            Variant::Model1 => "Model-1",
            Variant::Model2 => "Model-2",
            Variant::Baseline => "Baseline",
        }
    }
}

impl SegNetConfig {
    /// Reduced configuration used for desk-scale checks.
    pub fn reduced(depth: usize, base_channels: usize) -> Self {
        SegNetConfig {
            depth,
            base_channels,
            attention_levels: vec![depth],
            ..Default::default()
        }
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        let (attn, dcp) = match v {
            Variant::Full => (true, true),
            Variant::Model1 => (false, true),
            Variant::Model2 => (true, false),
            Variant::Baseline => (false, false),
        };
        self.enable_attention = attn;
        self.enable_dcp = dcp;
        self
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn has_attention(&self, level: usize) -> bool {
        self.enable_attention && self.attention_levels.contains(&level)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("SegNetConfig: {m}")));
        if self.modalities == 0 || self.classes < 2 {
            return bad(format!("modalities {} / classes {}", self.modalities, self.classes));
        }
        if self.base_channels < 2 || self.base_channels % 2 != 0 {
            return bad(format!("base_channels must be even and ≥ 2, got {}", self.base_channels));
        }
        if self.depth == 0 {
            return bad("depth must be ≥ 1".into());
        }
        if let Some(l) = self.attention_levels.iter().find(|&&l| l > self.depth) {
            return bad(format!("attention level {l} exceeds depth {}", self.depth));
        }
        if !(self.bn_eps > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return bad("batch-norm epsilon/momentum out of range".into());
        }
        Ok(())
    }

    /// Spatial extents must be divisible by `2^depth`.
    pub fn check_extents(&self, dims: &[usize]) -> Result<()> {
        let f = 1usize << self.depth;
        if dims.iter().any(|&d| d % f != 0) {
            return Err(Error::shape(
                "model_forward",
                format!("spatial extents {dims:?} not divisible by 2^{} = {f}", self.depth),
            ));
        }
        Ok(())
    }
}

impl SegNetConfig {
    /// Every field as `(key, value)` text in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let levels: Vec<String> = self.attention_levels.iter().map(ToString::to_string).collect();
        vec![
            ("modalities", self.modalities.to_string()),
            ("classes", self.classes.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("depth", self.depth.to_string()),
            ("attention_levels", levels.join(",")),
            ("enable_attention", self.enable_attention.to_string()),
            ("enable_dcp", self.enable_dcp.to_string()),
            ("bn_eps", format!("{:?}", self.bn_eps)),
            ("bn_momentum", format!("{:?}", self.bn_momentum)),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one field from text. Returns `Ok(false)` for a key this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "modalities" => self.modalities = parse_value(key, value)?,
            "classes" => self.classes = parse_value(key, value)?,
            "base_channels" => self.base_channels = parse_value(key, value)?,
            "depth" => self.depth = parse_value(key, value)?,
            "attention_levels" => {
                self.attention_levels = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_>>()?
            }
            "enable_attention" => self.enable_attention = parse_value(key, value)?,
            "enable_dcp" => self.enable_dcp = parse_value(key, value)?,
            "bn_eps" => self.bn_eps = parse_value(key, value)?,
            "bn_momentum" => self.bn_momentum = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Canonical one-line description.
    pub fn describe(&self) -> String {
        kv::describe(&self.to_pairs())
    }

    /// Parses the output of [`describe`](Self::describe).
    pub fn from_description(text: &str) -> Result<Self> {
        let mut cfg = SegNetConfig::default();
        for (k, v) in kv::parse_description(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::Invalid(format!("unknown model config key `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
