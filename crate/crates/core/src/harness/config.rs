use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::optim::{
    AdamConfig, FilteredAdam, GaussianClipTracker, GradientFilter, OptimError, Optimizer, Spam,
    SpamConfig,
};
use crate::problems::{AnomalySpec, ProblemSpec};
use crate::rng::{streams, RngStream};
use crate::spike_lab::RunningAbsMean;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spikes: Option<SpikeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomalies: Option<AnomalySpec>,
    #[serde(default = "one")]
    pub log_every: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Write the per-step wall time; off makes every CSV byte reproducible.
    #[serde(default = "yes")]
    pub timing: bool,
    /// Record the gradients the optimizer sees for offline spike analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSpec>,
}

fn default_steps() -> u64 {
    5000
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Global schedule: linear ramp over `warmup_steps`, then cosine decay to
/// `floor * lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub warmup_steps: u64,
    pub floor: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            warmup_steps: 100,
            floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSpec {
    pub probability: f64,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_factor() -> f64 {
    1000.0
}

/// Trace capture: every coordinate, or `per_segment` sampled coordinates
/// of each segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    #[serde(default)]
    pub per_segment: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlainSpec {
    #[serde(default)]
    pub adam: AdamConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueClipSpec {
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_value_clip")]
    pub threshold: f64,
}

fn default_value_clip() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormClipSpec {
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_max_norm")]
    pub max_norm: f64,
}

fn default_max_norm() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianClipSpec {
    #[serde(default)]
    pub adam: AdamConfig,
    /// EMA decay of the running mean and variance.
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// Observations before clipping starts.
    #[serde(default = "default_stat_warmup")]
    pub warmup: u64,
}

fn default_decay() -> f64 {
    0.99
}

fn default_stat_warmup() -> u64 {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullifySpec {
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_nullify_theta")]
    pub theta: f64,
}

fn default_nullify_theta() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Adam(PlainSpec),
    AdamValueClip(ValueClipSpec),
    AdamNormClip(NormClipSpec),
    AdamGaussianClip(GaussianClipSpec),
    AdamNullify(NullifySpec),
    Spam(SpamConfig),
}

impl OptimizerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OptimizerSpec::Adam(_) => "adam",
            OptimizerSpec::AdamValueClip(_) => "adam_value_clip",
            OptimizerSpec::AdamNormClip(_) => "adam_norm_clip",
            OptimizerSpec::AdamGaussianClip(_) => "adam_gaussian_clip",
            OptimizerSpec::AdamNullify(_) => "adam_nullify",
            OptimizerSpec::Spam(_) => "spam",
        }
    }

    pub fn adam(&self) -> &AdamConfig {
        match self {
            OptimizerSpec::Adam(s) => &s.adam,
            OptimizerSpec::AdamValueClip(s) => &s.adam,
            OptimizerSpec::AdamNormClip(s) => &s.adam,
            OptimizerSpec::AdamGaussianClip(s) => &s.adam,
            OptimizerSpec::AdamNullify(s) => &s.adam,
            OptimizerSpec::Spam(s) => &s.adam,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = match self {
            OptimizerSpec::Spam(s) => s.validate(),
            _ => self
                .adam()
                .validate()
                .into_iter()
                .map(|e| format!("adam.{e}"))
                .collect(),
        };
        match self {
            OptimizerSpec::AdamValueClip(s) if !(s.threshold > 0.0) => {
                errs.push(format!("threshold must be positive, got {}", s.threshold))
            }
            OptimizerSpec::AdamNormClip(s) if !(s.max_norm > 0.0) => {
                errs.push(format!("max_norm must be positive, got {}", s.max_norm))
            }
            OptimizerSpec::AdamGaussianClip(s) if !(0.0..1.0).contains(&s.decay) => {
                errs.push(format!("decay must lie in [0, 1), got {}", s.decay))
            }
            OptimizerSpec::AdamNullify(s) if !(s.theta > 0.0) => {
                errs.push(format!("theta must be positive, got {}", s.theta))
            }
            _ => {}
        }
        errs.into_iter().map(|e| format!("optimizer.{e}")).collect()
    }

    /// Fresh optimizer over `n` parameters; SPAM masks draw from `seed`.
    pub fn build(&self, n: usize, seed: u64) -> Result<Box<dyn Optimizer>, OptimError> {
        Ok(match *self {
            OptimizerSpec::Adam(s) => Box::new(FilteredAdam::new(n, s.adam, GradientFilter::None)),
            OptimizerSpec::AdamValueClip(s) => Box::new(FilteredAdam::new(
                n,
                s.adam,
                GradientFilter::ValueClip {
                    threshold: s.threshold,
                },
            )),
            OptimizerSpec::AdamNormClip(s) => Box::new(FilteredAdam::new(
                n,
                s.adam,
                GradientFilter::NormClip {
                    max_norm: s.max_norm,
                },
            )),
            OptimizerSpec::AdamGaussianClip(s) => Box::new(FilteredAdam::new(
                n,
                s.adam,
                GradientFilter::Gaussian(GaussianClipTracker::new(n, s.decay, s.warmup)),
            )),
            OptimizerSpec::AdamNullify(s) => Box::new(FilteredAdam::new(
                n,
                s.adam,
                GradientFilter::Nullify {
                    tracker: RunningAbsMean::new(n),
                    theta: s.theta,
                },
            )),
            OptimizerSpec::Spam(cfg) => {
                Box::new(Spam::new(n, cfg, RngStream::new(seed, streams::MASK))?)
            }
        })
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Parse(msg) => HarnessError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem with the config, one message per bad field.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!(
                "version must be {CONFIG_VERSION}, got {}",
                self.version
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            errs.push(format!(
                "name must be a non-empty file stem, got {:?}",
                self.name
            ));
        }
        errs.extend(self.problem.validate());
        errs.extend(self.optimizer.validate());
        if self.steps > 0 && self.schedule.warmup_steps >= self.steps {
            errs.push(format!(
                "schedule.warmup_steps ({}) must be smaller than steps ({})",
                self.schedule.warmup_steps, self.steps
            ));
        }
        if !(0.0..=1.0).contains(&self.schedule.floor) {
            errs.push(format!(
                "schedule.floor must lie in [0, 1], got {}",
                self.schedule.floor
            ));
        }
        if self.seeds.is_empty() {
            errs.push("seeds must not be empty".into());
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                errs.push(format!("seeds must be distinct, {s} repeats"));
            }
        }
        if let Some(s) = &self.spikes {
            if !(0.0..=1.0).contains(&s.probability) {
                errs.push(format!(
                    "spikes.probability must lie in [0, 1], got {}",
                    s.probability
                ));
            }
            if !(s.factor >= 1.0 && s.factor.is_finite()) {
                errs.push(format!("spikes.factor must be >= 1, got {}", s.factor));
            }
        }
        if let Some(a) = &self.anomalies {
            if !(0.0..=1.0).contains(&a.probability) {
                errs.push(format!(
                    "anomalies.probability must lie in [0, 1], got {}",
                    a.probability
                ));
            }
            if !(a.severity >= 0.0 && a.severity.is_finite()) {
                errs.push(format!(
                    "anomalies.severity must be >= 0, got {}",
                    a.severity
                ));
            }
        }
        if self.trace.is_some_and(|t| t.per_segment == Some(0)) {
            errs.push("trace.per_segment must be at least 1".into());
        }
        if self.log_every == 0 {
            errs.push("log_every must be at least 1".into());
        }
        errs
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::InvalidConfig(errs))
        }
    }

    pub fn metrics_path(&self, seed: u64) -> PathBuf {
        self.out_dir.join(format!("{}_seed{seed}.csv", self.name))
    }

    pub fn trace_path(&self, seed: u64) -> PathBuf {
        self.out_dir
            .join(format!("{}_seed{seed}_trace.csv", self.name))
    }

    pub fn layout_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}_layout.csv", self.name))
    }
}
