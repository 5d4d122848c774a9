use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::OptimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errs.push(format!("lr must be positive and finite, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                errs.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            errs.push(format!("eps must be positive, got {}", self.eps));
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    Clip,
    Nullify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    Random,
    MaxWeight,
    MaxGradient,
}

/// What happens to coordinates outside the sparse-momentum mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmaskedPolicy {
    /// `w -= lr * warmup_scale * g` with the raw gradient.
    RawSgd,
    Frozen,
}

/// Which step counter feeds the `1 - beta^t` bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasClock {
    Global,
    SinceReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpamConfig {
    pub adam: AdamConfig,
    pub reset_interval: u64,
    pub warmup_steps: u64,
    #[serde(serialize_with = "ser_threshold", deserialize_with = "de_threshold")]
    pub gss_threshold: f64,
    pub density: f64,
    pub spike_mode: SpikeMode,
    pub mask_strategy: MaskStrategy,
    pub unmasked_policy: UnmaskedPolicy,
    pub bias_correction_clock: BiasClock,
    pub weight_decay: f64,
}

impl Default for SpamConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            reset_interval: 500,
            warmup_steps: 150,
            gss_threshold: 5000.0,
            density: 1.0,
            spike_mode: SpikeMode::Clip,
            mask_strategy: MaskStrategy::Random,
            unmasked_policy: UnmaskedPolicy::RawSgd,
            bias_correction_clock: BiasClock::Global,
            weight_decay: 0.0,
        }
    }
}

impl SpamConfig {
    /// Settings under which SPAM reduces to plain Adam for `total_steps`.
    pub fn degenerate(adam: AdamConfig, total_steps: u64) -> Self {
        Self {
            adam,
            reset_interval: total_steps + 1,
            warmup_steps: 0,
            gss_threshold: f64::INFINITY,
            density: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs: Vec<String> = self
            .adam
            .validate()
            .into_iter()
            .map(|e| format!("adam.{e}"))
            .collect();
        if self.reset_interval == 0 {
            errs.push("reset_interval must be at least 1".into());
        } else if self.warmup_steps >= self.reset_interval {
            errs.push(format!(
                "warmup_steps ({}) must be smaller than reset_interval ({})",
                self.warmup_steps, self.reset_interval
            ));
        }
        if !(self.gss_threshold > 0.0) {
            errs.push(format!(
                "gss_threshold must be positive, got {}",
                self.gss_threshold
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            errs.push(format!("density must lie in (0, 1], got {}", self.density));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            errs.push(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        errs
    }

    pub(crate) fn check(&self) -> Result<(), OptimError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(OptimError::InvalidConfig(errs.join("; ")))
        }
    }
}

// JSON has no infinity literal; accept "inf" / "infinity" / null.
pub(crate) fn ser_threshold<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

pub(crate) fn de_threshold<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
        Null(()),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(x),
        Raw::Null(()) => Ok(f64::INFINITY),
        Raw::Text(t) => match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("bad threshold {t:?}"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let a = AdamConfig::default();
        assert_eq!((a.beta1, a.beta2, a.eps), (0.9, 0.999, 1e-6));
        let s = SpamConfig::default();
        assert_eq!(s.reset_interval, 500);
        assert_eq!(s.warmup_steps, 150);
        assert_eq!(s.gss_threshold, 5000.0);
        assert_eq!(s.density, 1.0);
        assert_eq!(s.spike_mode, SpikeMode::Clip);
        assert_eq!(s.mask_strategy, MaskStrategy::Random);
        assert_eq!(s.unmasked_policy, UnmaskedPolicy::RawSgd);
        assert_eq!(s.bias_correction_clock, BiasClock::Global);
        assert_eq!(s.weight_decay, 0.0);
        assert!(s.validate().is_empty());
    }

    #[test]
    fn warmup_must_be_shorter_than_interval() {
        let s = SpamConfig {
            reset_interval: 100,
            warmup_steps: 100,
            ..SpamConfig::default()
        };
        assert_eq!(s.validate().len(), 1);
    }

    #[test]
    fn every_bad_field_reported() {
        let s = SpamConfig {
            adam: AdamConfig {
                lr: -1.0,
                beta1: 1.0,
                beta2: 0.999,
                eps: 0.0,
            },
            density: 0.0,
            gss_threshold: -3.0,
            ..SpamConfig::default()
        };
        assert_eq!(s.validate().len(), 5);
    }

    #[test]
    fn threshold_json_roundtrip() {
        let s = SpamConfig::degenerate(AdamConfig::default(), 10);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"gss_threshold\":\"inf\""));
        let back: SpamConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let c: SpamConfig = serde_json::from_str(r#"{"gss_threshold": null}"#).unwrap();
        assert!(c.gss_threshold.is_infinite());
        let c: SpamConfig =
            serde_json::from_str(r#"{"gss_threshold": 50, "adam": {"lr": 0.01}}"#).unwrap();
        assert_eq!((c.gss_threshold, c.adam.lr), (50.0, 0.01));
    }
}
