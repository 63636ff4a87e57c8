//! Run configuration: a flat `dotted.key = value` file with a fixed schema.
//!
//! Files are parsed as TOML, so `[acr]` tables and dotted keys are both
//! accepted; either way every leaf is addressed by its dotted path. Unknown
//! keys and ill-typed values are errors. [`RunConfig::entries`] materialises
//! every key, which is what run summaries embed for replay.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::acr::AcrConfig;
use crate::curriculum::{CurriculumConfig, ExpSign, PaceKind};
use crate::datagen::{DomainSpec, ShiftSpec};
use crate::error::{Error, Result};
use crate::models::{AdamWConfig, OracleParams, SourceTrainConfig};
use crate::pseudo::FusionConfig;
use crate::trainer::{AdaptationConfig, EmaSchedule, GammaMode, LabelSource, Variant, Weighting};

/// Every accepted key with a one-line description.
pub const SCHEMA: &[(&str, &str)] = &[
    (
        "seed",
        "root seed; data, oracle, source training and adaptation draw from named sub-streams",
    ),
    (
        "variant",
        "full | no-acr | no-curriculum | teacher-only | oracle-only",
    ),
    ("data.num_classes", "number of classes K"),
    ("data.feature_dim", "feature dimension d"),
    (
        "data.radius",
        "class means sit evenly on a circle of this radius",
    ),
    (
        "data.sigma",
        "per-dimension standard deviation of source clusters",
    ),
    ("data.samples_per_class", "samples per class in each domain"),
    (
        "shift.rotation",
        "target rotation in radians (first two dimensions)",
    ),
    (
        "shift.translation",
        "target translation, one entry per feature dimension",
    ),
    ("shift.noise_multiplier", "target std = data.sigma * this"),
    ("oracle.templates", "templates per class"),
    (
        "oracle.perturbation",
        "std of the Gaussian template perturbation",
    ),
    ("oracle.logit_scale", "multiplier on cosine similarities"),
    ("oracle.tau_c", "oracle softmax temperature"),
    (
        "source.epochs",
        "epochs of supervised training for the source (and upper-bound) model",
    ),
    ("source.batch_size", "batch size for supervised training"),
    ("source.lr", "learning rate for supervised training"),
    (
        "source.weight_decay",
        "weight decay for supervised training",
    ),
    ("adapt.epochs", "adaptation epochs E"),
    ("adapt.batch_size", "adaptation batch size N"),
    ("adapt.tau", "distillation temperature"),
    ("adapt.delta", "teacher EMA decay"),
    ("adapt.ema_per", "step | epoch"),
    (
        "adapt.kl_tau_squared",
        "scale the distillation term by tau^2",
    ),
    ("adapt.gamma_mode", "once | per_epoch"),
    ("adapt.lr", "AdamW learning rate"),
    ("adapt.weight_decay", "AdamW decoupled weight decay"),
    ("adapt.beta1", "AdamW first-moment coefficient"),
    ("adapt.beta2", "AdamW second-moment coefficient"),
    ("adapt.eps", "AdamW epsilon"),
    ("curriculum.alpha", "reliability sharpness"),
    (
        "curriculum.pace",
        "reliability-only | exponential | linear | sigmoid | stepwise",
    ),
    (
        "curriculum.beta",
        "pace rate (exponential, linear, sigmoid)",
    ),
    ("curriculum.sign", "growth | decay (exponential pace)"),
    ("curriculum.steps", "number of steps (stepwise pace)"),
    (
        "acr.enabled",
        "enable weight regularisation (the variant may turn it off)",
    ),
    ("acr.eta", "inversion probability rate"),
    (
        "acr.rho",
        "maximum fraction of a batch considered for inversion",
    ),
    ("acr.sigma", "stability threshold on the history KL"),
    ("acr.lambda", "inversion strength"),
    ("acr.h", "history buffer length"),
    (
        "acr.min_history",
        "history entries needed before the stability test applies",
    ),
    ("fusion.psi_s", "teacher confidence threshold"),
    ("fusion.psi_c", "oracle confidence threshold"),
    ("output.metrics", "per-epoch JSONL path, empty for none"),
    ("output.summary", "summary JSON path, empty for none"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSettings {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub radius: f64,
    pub sigma: f64,
    pub samples_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub delta: f64,
    pub ema_per: EmaSchedule,
    pub kl_tau_squared: bool,
    pub gamma_mode: GammaMode,
    pub optimizer: AdamWConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaceName {
    ReliabilityOnly,
    Exponential,
    Linear,
    Sigmoid,
    Stepwise,
}

impl PaceName {
    pub const ALL: [PaceName; 5] = [
        PaceName::ReliabilityOnly,
        PaceName::Exponential,
        PaceName::Linear,
        PaceName::Sigmoid,
        PaceName::Stepwise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PaceName::ReliabilityOnly => "reliability-only",
            PaceName::Exponential => "exponential",
            PaceName::Linear => "linear",
            PaceName::Sigmoid => "sigmoid",
            PaceName::Stepwise => "stepwise",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSettings {
    pub alpha: f64,
    pub pace: PaceName,
    pub beta: f64,
    pub sign: ExpSign,
    pub steps: u32,
}

impl CurriculumSettings {
    pub fn pace_kind(&self) -> PaceKind {
        match self.pace {
            PaceName::ReliabilityOnly => PaceKind::ReliabilityOnly,
            PaceName::Exponential => PaceKind::Exponential {
                beta: self.beta,
                sign: self.sign,
            },
            PaceName::Linear => PaceKind::Linear { beta: self.beta },
            PaceName::Sigmoid => PaceKind::Sigmoid { beta: self.beta },
            PaceName::Stepwise => PaceKind::Stepwise { steps: self.steps },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSettings {
    pub metrics: String,
    pub summary: String,
}

/// Fully resolved configuration for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,
    pub data: DataSettings,
    pub shift: ShiftSpec,
    pub oracle: OracleParams,
    pub source: SupervisedSettings,
    pub adapt: AdaptSettings,
    pub curriculum: CurriculumSettings,
    pub acr_enabled: bool,
    pub acr: AcrConfig,
    pub fusion: FusionConfig,
    pub output: OutputSettings,
}

impl Default for RunConfig {
    /// The default synthetic benchmark.
    fn default() -> Self {
        let adapt = AdaptationConfig::default();
        let curriculum = CurriculumConfig::default();
        let (beta, sign) = match curriculum.pace {
            PaceKind::Exponential { beta, sign } => (beta, sign),
            _ => (0.6, ExpSign::Growth),
        };
        let source = SourceTrainConfig::default();
        Self {
            seed: 0,
            variant: Variant::Full,
            data: DataSettings {
                num_classes: 4,
                feature_dim: 2,
                radius: 3.0,
                sigma: 1.0,
                samples_per_class: 250,
            },
            shift: ShiftSpec {
                rotation_angle: std::f64::consts::PI / 5.0,
                translation: vec![1.0, 0.5],
                noise_scale_multiplier: 1.5,
            },
            oracle: OracleParams::default(),
            source: SupervisedSettings {
                epochs: source.epochs,
                batch_size: source.batch_size,
                lr: source.optimizer.lr,
                weight_decay: source.optimizer.weight_decay,
            },
            adapt: AdaptSettings {
                epochs: adapt.epochs,
                batch_size: adapt.batch_size,
                tau: adapt.temperature,
                delta: adapt.ema_decay,
                ema_per: adapt.ema_per,
                kl_tau_squared: adapt.kl_tau_squared,
                gamma_mode: adapt.gamma_mode,
                optimizer: adapt.optimizer,
            },
            curriculum: CurriculumSettings {
                alpha: curriculum.alpha,
                pace: PaceName::Exponential,
                beta,
                sign,
                steps: 4,
            },
            acr_enabled: adapt.acr_enabled,
            acr: adapt.acr,
            fusion: adapt.fusion,
            output: OutputSettings::default(),
        }
    }
}

fn bad_type(key: &str, want: &str, got: &Value) -> Error {
    Error::config(format!("`{key}` expects {want}, got {got}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad_type(key, "a number", v)),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(bad_type(key, "a non-negative integer", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    usize::try_from(as_u64(key, v)?).map_err(|_| bad_type(key, "a smaller integer", v))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad_type(key, "true or false", v))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad_type(key, "a string", v))
}

fn as_f64_array(key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items.iter().map(|x| as_f64(key, x)).collect(),
        _ => Err(bad_type(key, "an array of numbers", v)),
    }
}

fn choice<T>(key: &str, v: &Value, options: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    let s = as_str(key, v)?;
    options
        .iter()
        .find(|(name, _)| *name == s)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::config(format!(
                "`{key}` must be one of {}, got `{s}`",
                names.join(", ")
            ))
        })
}

const EMA_PER: &[(&str, EmaSchedule)] =
    &[("step", EmaSchedule::Step), ("epoch", EmaSchedule::Epoch)];
const GAMMA_MODE: &[(&str, GammaMode)] = &[
    ("once", GammaMode::Once),
    ("per_epoch", GammaMode::PerEpoch),
];
const SIGN: &[(&str, ExpSign)] = &[("growth", ExpSign::Growth), ("decay", ExpSign::Decay)];

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], value: T) -> &'static str {
    options
        .iter()
        .find(|(_, t)| *t == value)
        .map(|(n, _)| *n)
        .unwrap_or("?")
}

/// Parses the right-hand side of a `--set key=value` override. Anything that
/// is not a TOML literal is taken as a bare string.
pub fn parse_value(text: &str) -> Value {
    let text = text.trim();
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| Value::String(text.to_string())),
        Err(_) => Value::String(text.to_string()),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

impl RunConfig {
    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "seed" => self.seed = as_u64(key, v)?,
            "variant" => {
                let s = as_str(key, v)?;
                self.variant = Variant::from_cli_name(s)
                    .ok_or_else(|| Error::config(format!("unknown variant `{s}`")))?;
            }
            "data.num_classes" => self.data.num_classes = as_usize(key, v)?,
            "data.feature_dim" => self.data.feature_dim = as_usize(key, v)?,
            "data.radius" => self.data.radius = as_f64(key, v)?,
            "data.sigma" => self.data.sigma = as_f64(key, v)?,
            "data.samples_per_class" => self.data.samples_per_class = as_usize(key, v)?,
            "shift.rotation" => self.shift.rotation_angle = as_f64(key, v)?,
            "shift.translation" => self.shift.translation = as_f64_array(key, v)?,
            "shift.noise_multiplier" => self.shift.noise_scale_multiplier = as_f64(key, v)?,
            "oracle.templates" => self.oracle.templates_per_class = as_usize(key, v)?,
            "oracle.perturbation" => self.oracle.perturbation_scale = as_f64(key, v)?,
            "oracle.logit_scale" => self.oracle.logit_scale = as_f64(key, v)?,
            "oracle.tau_c" => self.oracle.temperature = as_f64(key, v)?,
            "source.epochs" => self.source.epochs = as_usize(key, v)?,
            "source.batch_size" => self.source.batch_size = as_usize(key, v)?,
            "source.lr" => self.source.lr = as_f64(key, v)?,
            "source.weight_decay" => self.source.weight_decay = as_f64(key, v)?,
            "adapt.epochs" => self.adapt.epochs = as_usize(key, v)?,
            "adapt.batch_size" => self.adapt.batch_size = as_usize(key, v)?,
            "adapt.tau" => self.adapt.tau = as_f64(key, v)?,
            "adapt.delta" => self.adapt.delta = as_f64(key, v)?,
            "adapt.ema_per" => self.adapt.ema_per = choice(key, v, EMA_PER)?,
            "adapt.kl_tau_squared" => self.adapt.kl_tau_squared = as_bool(key, v)?,
            "adapt.gamma_mode" => self.adapt.gamma_mode = choice(key, v, GAMMA_MODE)?,
            "adapt.lr" => self.adapt.optimizer.lr = as_f64(key, v)?,
            "adapt.weight_decay" => self.adapt.optimizer.weight_decay = as_f64(key, v)?,
            "adapt.beta1" => self.adapt.optimizer.beta1 = as_f64(key, v)?,
            "adapt.beta2" => self.adapt.optimizer.beta2 = as_f64(key, v)?,
            "adapt.eps" => self.adapt.optimizer.eps = as_f64(key, v)?,
            "curriculum.alpha" => self.curriculum.alpha = as_f64(key, v)?,
            "curriculum.pace" => {
                let s = as_str(key, v)?;
                self.curriculum.pace = PaceName::parse(s)
                    .ok_or_else(|| Error::config(format!("unknown pace `{s}`")))?;
            }
            "curriculum.beta" => self.curriculum.beta = as_f64(key, v)?,
            "curriculum.sign" => self.curriculum.sign = choice(key, v, SIGN)?,
            "curriculum.steps" => {
                self.curriculum.steps = u32::try_from(as_u64(key, v)?)
                    .map_err(|_| bad_type(key, "a smaller integer", v))?
            }
            "acr.enabled" => self.acr_enabled = as_bool(key, v)?,
            "acr.eta" => self.acr.eta = as_f64(key, v)?,
            "acr.rho" => self.acr.rho = as_f64(key, v)?,
            "acr.sigma" => self.acr.sigma = as_f64(key, v)?,
            "acr.lambda" => self.acr.lambda = as_f64(key, v)?,
            "acr.h" => self.acr.history = as_usize(key, v)?,
            "acr.min_history" => self.acr.min_history = as_usize(key, v)?,
            "fusion.psi_s" => self.fusion.psi_teacher = as_f64(key, v)?,
            "fusion.psi_c" => self.fusion.psi_oracle = as_f64(key, v)?,
            "output.metrics" => self.output.metrics = as_str(key, v)?.to_string(),
            "output.summary" => self.output.summary = as_str(key, v)?.to_string(),
            _ => return Err(Error::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), &parse_value(value))
    }

    /// Defaults overlaid with the keys in `text`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        let mut leaves = Vec::new();
        flatten("", &table, &mut leaves);
        let mut cfg = Self::default();
        for (k, v) in &leaves {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Every schema key with its resolved value, in schema order.
    pub fn entries(&self) -> Vec<(&'static str, Value)> {
        let f = Value::Float;
        let u = |n: usize| Value::Integer(n as i64);
        let s = |x: &str| Value::String(x.to_string());
        SCHEMA
            .iter()
            .map(|(key, _)| {
                let v = match *key {
                    "seed" => Value::Integer(self.seed as i64),
                    "variant" => s(self.variant.cli_name()),
                    "data.num_classes" => u(self.data.num_classes),
                    "data.feature_dim" => u(self.data.feature_dim),
                    "data.radius" => f(self.data.radius),
                    "data.sigma" => f(self.data.sigma),
                    "data.samples_per_class" => u(self.data.samples_per_class),
                    "shift.rotation" => f(self.shift.rotation_angle),
                    "shift.translation" => {
                        Value::Array(self.shift.translation.iter().map(|x| f(*x)).collect())
                    }
                    "shift.noise_multiplier" => f(self.shift.noise_scale_multiplier),
                    "oracle.templates" => u(self.oracle.templates_per_class),
                    "oracle.perturbation" => f(self.oracle.perturbation_scale),
                    "oracle.logit_scale" => f(self.oracle.logit_scale),
                    "oracle.tau_c" => f(self.oracle.temperature),
                    "source.epochs" => u(self.source.epochs),
                    "source.batch_size" => u(self.source.batch_size),
                    "source.lr" => f(self.source.lr),
                    "source.weight_decay" => f(self.source.weight_decay),
                    "adapt.epochs" => u(self.adapt.epochs),
                    "adapt.batch_size" => u(self.adapt.batch_size),
                    "adapt.tau" => f(self.adapt.tau),
                    "adapt.delta" => f(self.adapt.delta),
                    "adapt.ema_per" => s(name_of(EMA_PER, self.adapt.ema_per)),
                    "adapt.kl_tau_squared" => Value::Boolean(self.adapt.kl_tau_squared),
                    "adapt.gamma_mode" => s(name_of(GAMMA_MODE, self.adapt.gamma_mode)),
                    "adapt.lr" => f(self.adapt.optimizer.lr),
                    "adapt.weight_decay" => f(self.adapt.optimizer.weight_decay),
                    "adapt.beta1" => f(self.adapt.optimizer.beta1),
                    "adapt.beta2" => f(self.adapt.optimizer.beta2),
                    "adapt.eps" => f(self.adapt.optimizer.eps),
                    "curriculum.alpha" => f(self.curriculum.alpha),
                    "curriculum.pace" => s(self.curriculum.pace.as_str()),
                    "curriculum.beta" => f(self.curriculum.beta),
                    "curriculum.sign" => s(name_of(SIGN, self.curriculum.sign)),
                    "curriculum.steps" => Value::Integer(i64::from(self.curriculum.steps)),
                    "acr.enabled" => Value::Boolean(self.acr_enabled),
                    "acr.eta" => f(self.acr.eta),
                    "acr.rho" => f(self.acr.rho),
                    "acr.sigma" => f(self.acr.sigma),
                    "acr.lambda" => f(self.acr.lambda),
                    "acr.h" => u(self.acr.history),
                    "acr.min_history" => u(self.acr.min_history),
                    "fusion.psi_s" => f(self.fusion.psi_teacher),
                    "fusion.psi_c" => f(self.fusion.psi_oracle),
                    "output.metrics" => s(&self.output.metrics),
                    "output.summary" => s(&self.output.summary),
                    other => unreachable!("schema key {other} has no getter"),
                };
                (*key, v)
            })
            .collect()
    }

    /// Resolved config as a flat JSON object.
    pub fn to_json_map(&self) -> BTreeMap<String, serde_json::Value> {
        self.entries()
            .into_iter()
            .map(|(k, v)| {
                let j = serde_json::to_value(&v).unwrap_or(serde_json::Value::Null);
                (k.to_string(), j)
            })
            .collect()
    }

    /// Resolved config as a dotted-key file that [`RunConfig::from_toml_str`]
    /// reads back to the same value.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec::ring(
            self.data.num_classes,
            self.data.feature_dim,
            self.data.radius,
            self.data.sigma,
            self.data.samples_per_class,
        )
    }

    /// Settings for supervised training; `seed` picks the shuffle stream.
    pub fn supervised(&self, seed: u64) -> SourceTrainConfig {
        SourceTrainConfig {
            epochs: self.source.epochs,
            batch_size: self.source.batch_size,
            optimizer: AdamWConfig {
                lr: self.source.lr,
                weight_decay: self.source.weight_decay,
                ..AdamWConfig::default()
            },
            seed,
        }
    }

    /// Adaptation settings before the variant is applied.
    pub fn adaptation(&self, seed: u64) -> AdaptationConfig {
        AdaptationConfig {
            epochs: self.adapt.epochs,
            batch_size: self.adapt.batch_size,
            temperature: self.adapt.tau,
            ema_decay: self.adapt.delta,
            ema_per: self.adapt.ema_per,
            kl_tau_squared: self.adapt.kl_tau_squared,
            labels: LabelSource::Fusion,
            weighting: Weighting::Curriculum,
            curriculum: CurriculumConfig {
                alpha: self.curriculum.alpha,
                pace: self.curriculum.pace_kind(),
            },
            acr_enabled: self.acr_enabled,
            acr: self.acr,
            fusion: self.fusion,
            optimizer: self.adapt.optimizer,
            gamma_mode: self.adapt.gamma_mode,
            seed,
        }
    }

    /// Checks every derived component config.
    pub fn validate(&self) -> Result<()> {
        self.domain_spec().validate()?;
        self.shift.validate(self.data.feature_dim)?;
        if self.oracle.templates_per_class == 0 {
            return Err(Error::config("oracle.templates must be at least 1"));
        }
        if !(self.oracle.perturbation_scale >= 0.0) {
            return Err(Error::config("oracle.perturbation must be non-negative"));
        }
        if !(self.oracle.logit_scale > 0.0) || !(self.oracle.temperature > 0.0) {
            return Err(Error::config(
                "oracle.logit_scale and oracle.tau_c must be positive",
            ));
        }
        if self.source.epochs == 0 || self.source.batch_size == 0 {
            return Err(Error::config(
                "source.epochs and source.batch_size must be positive",
            ));
        }
        self.supervised(0).optimizer.validate()?;
        self.adaptation(0).validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_and_entries_agree() {
        let cfg = RunConfig::default();
        let entries = cfg.entries();
        assert_eq!(entries.len(), SCHEMA.len());
        // every materialised value is accepted back by `set`
        let mut copy = RunConfig::default();
        for (k, v) in &entries {
            copy.set(k, v).unwrap();
        }
        assert_eq!(copy, cfg);
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        cfg.curriculum.pace = PaceName::Stepwise;
        cfg.adapt.gamma_mode = GammaMode::PerEpoch;
        cfg.shift.translation = vec![0.25, -3.0];
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn tables_and_dotted_keys_are_equivalent() {
        let a = RunConfig::from_toml_str("acr.h = 5\nadapt.tau = 1\n").unwrap();
        let b = RunConfig::from_toml_str("[acr]\nh = 5\n[adapt]\ntau = 1.0\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.acr.history, 5);
        assert_eq!(a.adapt.tau, 1.0);
    }

    #[test]
    fn unknown_and_ill_typed_keys() {
        for text in [
            "acr.bogus = 1",
            "bogus = 1",
            "acr.h = -1",
            "acr.h = 1.5",
            "adapt.tau = \"two\"",
            "curriculum.pace = \"cubic\"",
            "adapt.ema_per = \"batch\"",
            "variant = \"everything\"",
            "this is not toml",
        ] {
            assert!(
                matches!(RunConfig::from_toml_str(text), Err(Error::InvalidConfig(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("acr.rho=0").unwrap();
        cfg.apply_override("curriculum.pace=linear").unwrap();
        cfg.apply_override("shift.translation=[0.0, 2.0]").unwrap();
        cfg.apply_override("variant = no-acr").unwrap();
        assert_eq!(cfg.acr.rho, 0.0);
        assert_eq!(cfg.curriculum.pace, PaceName::Linear);
        assert_eq!(cfg.shift.translation, vec![0.0, 2.0]);
        assert_eq!(cfg.variant, Variant::FusionCurriculum);
        assert!(cfg.apply_override("acr.rho").is_err());
        assert!(cfg.apply_override("nope=1").is_err());
    }

    #[test]
    fn validation_catches_inconsistent_values() {
        assert!(RunConfig::default().validate().is_ok());
        let mut cfg = RunConfig::default();
        cfg.data.feature_dim = 3;
        // translation still has two entries
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.adapt.epochs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.acr.rho = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pace_kinds() {
        let mut c = RunConfig::default().curriculum;
        assert_eq!(
            c.pace_kind(),
            PaceKind::Exponential {
                beta: 0.6,
                sign: ExpSign::Growth
            }
        );
        c.pace = PaceName::Stepwise;
        assert_eq!(c.pace_kind(), PaceKind::Stepwise { steps: 4 });
        c.pace = PaceName::Sigmoid;
        assert_eq!(c.pace_kind(), PaceKind::Sigmoid { beta: 0.6 });
    }
}
