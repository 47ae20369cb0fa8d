//! Run configuration: a flat `key = value` file with `#` comments.
//!
//! Every key has a default, so an empty file is a valid (tiny) run; the
//! shipped presets override the scale knobs. Parse errors and validation
//! errors name the offending key and map to exit code 2.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use dyce_core::losses::{ConfidenceGate, CtNormalization, DyceConfig, LossMode};
use dyce_core::model::{AttentionKind, ModelConfig};
use dyce_core::synthdata::DomainSpec;
use dyce_core::trainer::{RunConfig, TrainerConfig};

/// A config problem, always attributed to a key.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Dataset seed; follows `seed` unless set explicitly.
    pub data_seed: Option<u64>,
    pub out_dir: String,

    // data
    pub height: usize,
    pub width: usize,
    pub raw_channels: usize,
    pub n_classes: usize,
    pub tail_exponent: f64,
    pub shift: f64,
    pub source_images: usize,
    pub labeled_target: usize,
    pub unlabeled_target: usize,
    pub export_data: bool,

    // model
    pub channels: usize,

    // trainer
    pub steps: u64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub mode: LossMode,
    pub lr: f64,
    pub decay_interval: u64,
    pub alpha: f64,
    pub th: f64,
    pub lambda_ct: f64,
    pub omega: f64,
    pub hard_fraction: f64,
    pub gate: ConfidenceGate,
    pub ct_norm: CtNormalization,
    pub momentum: f64,
    pub weight_decay: f64,
    pub attention: AttentionKind,
    pub language: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_seed: None,
            out_dir: "runs/out".to_string(),
            height: 6,
            width: 6,
            raw_channels: 4,
            n_classes: 4,
            tail_exponent: 1.5,
            shift: 0.4,
            source_images: 40,
            labeled_target: 10,
            unlabeled_target: 100,
            export_data: false,
            channels: 8,
            steps: 300,
            batch_labeled: 4,
            batch_unlabeled: 4,
            mode: LossMode::DyCe,
            // standard published defaults for the schedule and the
            // mean-teacher pair; the balance knobs have no reference
            // values and are tuning choices
            lr: 1e-4,
            decay_interval: 1000,
            alpha: 0.999,
            th: 0.95,
            lambda_ct: 1.0,
            omega: 0.5,
            hard_fraction: 0.5,
            gate: ConfidenceGate::Teacher,
            ct_norm: CtNormalization::MaskedMean,
            momentum: 0.0,
            weight_decay: 0.0,
            attention: AttentionKind::Dlg,
            language: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_document(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key = value` lines (later keys win).
    pub fn apply_document(&mut self, text: &str) -> Result<(), ConfigError> {
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(
                    "config",
                    format!("line {}: expected `key = value`, got `{raw}`", line_no + 1),
                ));
            };
            self.apply_override(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply one `key=value` pair (also used by sweep rows).
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| err(key, format!("cannot parse `{value}`: {e}")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data_seed" => self.data_seed = Some(parse(key, value)?),
            "out_dir" => self.out_dir = value.to_string(),
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "raw_channels" => self.raw_channels = parse(key, value)?,
            "n_classes" => self.n_classes = parse(key, value)?,
            "tail_exponent" => self.tail_exponent = parse(key, value)?,
            "shift" => self.shift = parse(key, value)?,
            "source_images" => self.source_images = parse(key, value)?,
            "labeled_target" => self.labeled_target = parse(key, value)?,
            "unlabeled_target" => self.unlabeled_target = parse(key, value)?,
            "export_data" => self.export_data = parse_switch(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "batch_labeled" => self.batch_labeled = parse(key, value)?,
            "batch_unlabeled" => self.batch_unlabeled = parse(key, value)?,
            "mode" => {
                self.mode = match value.to_ascii_lowercase().as_str() {
                    "ce" => LossMode::Ce,
                    "dyce" => LossMode::DyCe,
                    other => return Err(err(key, format!("expected ce|dyce, got `{other}`"))),
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "decay_interval" => self.decay_interval = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "th" => self.th = parse(key, value)?,
            "lambda_ct" => self.lambda_ct = parse(key, value)?,
            "omega" => self.omega = parse(key, value)?,
            "hard_fraction" => self.hard_fraction = parse(key, value)?,
            "gate" => {
                self.gate = match value.to_ascii_lowercase().as_str() {
                    "teacher" => ConfidenceGate::Teacher,
                    "student" => ConfidenceGate::Student,
                    other => return Err(err(key, format!("expected teacher|student, got `{other}`"))),
                }
            }
            "ct_norm" => {
                self.ct_norm = match value.to_ascii_lowercase().as_str() {
                    "masked" => CtNormalization::MaskedMean,
                    "all" => CtNormalization::AllPixels,
                    other => return Err(err(key, format!("expected masked|all, got `{other}`"))),
                }
            }
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "attention" => {
                self.attention = match value.to_ascii_lowercase().as_str() {
                    "dlg" => AttentionKind::Dlg,
                    "generic" => AttentionKind::Generic,
                    other => return Err(err(key, format!("expected dlg|generic, got `{other}`"))),
                }
            }
            "language" => self.language = parse_switch(key, value)?,
            other => return Err(err(other, "unknown key".to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_classes < 2 || self.n_classes > 200 {
            return Err(err("n_classes", "must lie in 2..=200"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(err("height/width", "grid dimensions must be positive"));
        }
        if self.raw_channels == 0 || self.channels == 0 {
            return Err(err("raw_channels/channels", "channel widths must be positive"));
        }
        if !self.tail_exponent.is_finite() || self.tail_exponent <= 0.0 {
            return Err(err("tail_exponent", "must be positive"));
        }
        if !self.shift.is_finite() || self.shift < 0.0 {
            return Err(err("shift", "must be nonnegative"));
        }
        if self.source_images == 0 && self.labeled_target == 0 {
            return Err(err(
                "source_images",
                "source_images and labeled_target cannot both be zero",
            ));
        }
        if self.batch_labeled == 0 && self.batch_unlabeled == 0 {
            return Err(err("batch_labeled", "both batch sizes are zero"));
        }
        if self.steps == 0 {
            return Err(err("steps", "must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(err("alpha", "must lie in [0, 1]"));
        }
        if !(self.th > 0.0 && self.th < 1.0) {
            return Err(err("th", "must lie in (0, 1)"));
        }
        if !(self.omega >= 0.0 && self.omega <= 1.0) {
            return Err(err("omega", "must lie in [0, 1]"));
        }
        if !(self.hard_fraction > 0.0 && self.hard_fraction <= 1.0) {
            return Err(err("hard_fraction", "must lie in (0, 1]"));
        }
        if !self.lr.is_finite() || self.lr < 0.0 || !self.lambda_ct.is_finite() || self.lambda_ct < 0.0 {
            return Err(err("lr/lambda_ct", "must be nonnegative"));
        }
        if self.decay_interval == 0 {
            return Err(err("decay_interval", "must be positive"));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(err("momentum", "must lie in [0, 1)"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(err("weight_decay", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn source_spec(&self) -> DomainSpec {
        DomainSpec {
            seed: self.data_seed() ^ 0x5357_0000,
            height: self.height,
            width: self.width,
            raw_channels: self.raw_channels,
            n_classes: self.n_classes,
            tail_exponent: self.tail_exponent,
            shift: 0.0,
            n_images: self.source_images,
        }
    }

    pub fn target_spec(&self) -> DomainSpec {
        DomainSpec {
            seed: self.data_seed() ^ 0x7A57_0000,
            shift: self.shift,
            n_images: self.unlabeled_target,
            ..self.source_spec()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            raw_channels: self.raw_channels,
            channels: self.channels,
            vocab: self.n_classes,
            n_tokens: self.n_classes,
            n_classes: self.n_classes,
        }
    }

    pub fn trainer_config(&self) -> Result<TrainerConfig, ConfigError> {
        let dyce = DyceConfig::ablation(self.omega, self.hard_fraction)
            .map_err(|e| err("omega", e.to_string()))?;
        Ok(TrainerConfig {
            alpha: self.alpha,
            th: self.th,
            base_lr: self.lr,
            decay_interval: self.decay_interval,
            lambda_ct: self.lambda_ct,
            mode: self.mode,
            dyce,
            gate: self.gate,
            ct_normalization: self.ct_norm,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            attention: self.attention,
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            steps: self.steps,
            batch_labeled: self.batch_labeled,
            batch_unlabeled: self.batch_unlabeled,
            seed: self.seed,
            language_on: self.language,
        }
    }
}

fn parse_switch(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(err(key, format!("expected on|off, got `{other}`"))),
    }
}

/// One sweep row: named overrides applied on top of the base config.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub overrides: Vec<(String, String)>,
}

/// Parse a sweep file: one configuration per non-comment line, written
/// as space-separated `key=value` pairs. An empty file is an empty sweep.
pub fn parse_sweep(text: &str) -> Result<Vec<SweepRow>, ConfigError> {
    let mut rows = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut overrides = Vec::new();
        for pair in line.split_whitespace() {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(err(
                    "sweep",
                    format!("line {}: expected `key=value`, got `{pair}`", line_no + 1),
                ));
            };
            overrides.push((key.to_string(), value.to_string()));
        }
        rows.push(SweepRow {
            label: line.to_string(),
            overrides,
        });
    }
    Ok(rows)
}

/// Sorted `key=value` pairs of every field, used to echo the resolved
/// configuration into run manifests.
pub fn resolved_pairs(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("seed".into(), cfg.seed.to_string());
    map.insert("data_seed".into(), cfg.data_seed().to_string());
    map.insert("out_dir".into(), cfg.out_dir.clone());
    map.insert("height".into(), cfg.height.to_string());
    map.insert("width".into(), cfg.width.to_string());
    map.insert("raw_channels".into(), cfg.raw_channels.to_string());
    map.insert("n_classes".into(), cfg.n_classes.to_string());
    map.insert("tail_exponent".into(), cfg.tail_exponent.to_string());
    map.insert("shift".into(), cfg.shift.to_string());
    map.insert("source_images".into(), cfg.source_images.to_string());
    map.insert("labeled_target".into(), cfg.labeled_target.to_string());
    map.insert("unlabeled_target".into(), cfg.unlabeled_target.to_string());
    map.insert("channels".into(), cfg.channels.to_string());
    map.insert("steps".into(), cfg.steps.to_string());
    map.insert("batch_labeled".into(), cfg.batch_labeled.to_string());
    map.insert("batch_unlabeled".into(), cfg.batch_unlabeled.to_string());
    map.insert(
        "mode".into(),
        match cfg.mode {
            LossMode::Ce => "ce".into(),
            LossMode::DyCe => "dyce".into(),
        },
    );
    map.insert("lr".into(), cfg.lr.to_string());
    map.insert("decay_interval".into(), cfg.decay_interval.to_string());
    map.insert("alpha".into(), cfg.alpha.to_string());
    map.insert("th".into(), cfg.th.to_string());
    map.insert("lambda_ct".into(), cfg.lambda_ct.to_string());
    map.insert("omega".into(), cfg.omega.to_string());
    map.insert("hard_fraction".into(), cfg.hard_fraction.to_string());
    map.insert(
        "gate".into(),
        match cfg.gate {
            ConfidenceGate::Teacher => "teacher".into(),
            ConfidenceGate::Student => "student".into(),
        },
    );
    map.insert(
        "ct_norm".into(),
        match cfg.ct_norm {
            CtNormalization::MaskedMean => "masked".into(),
            CtNormalization::AllPixels => "all".into(),
        },
    );
    map.insert("momentum".into(), cfg.momentum.to_string());
    map.insert("weight_decay".into(), cfg.weight_decay.to_string());
    map.insert(
        "attention".into(),
        match cfg.attention {
            AttentionKind::Dlg => "dlg".into(),
            AttentionKind::Generic => "generic".into(),
        },
    );
    map.insert(
        "language".into(),
        if cfg.language { "on".into() } else { "off".into() },
    );
    map
}
