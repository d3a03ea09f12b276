use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::coi::DetectorConfig;
use crate::pp::PpConfig;

fn default_horizon() -> f64 {
    0.1
}
fn default_fit_window() -> usize {
    12
}
fn default_onset_omega() -> f64 {
    1e-3
}
fn default_give_up() -> f64 {
    0.5
}
fn default_split_delay() -> u64 {
    1
}

/// Group identification and splitting actuation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitterConfig {
    /// Prediction horizon, s.
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    /// Samples used by the quadratic fit.
    #[serde(default = "default_fit_window")]
    pub fit_window: usize,
    /// |ω̃| (p.u.) marking the disturbance onset, where angle baselines freeze.
    #[serde(default = "default_onset_omega")]
    pub onset_omega: f64,
    /// Time after detection during which identification is retried, s.
    #[serde(default = "default_give_up")]
    pub give_up_s: f64,
    /// Frames between a successful identification and the opening of the cutset.
    #[serde(default = "default_split_delay")]
    pub split_delay_frames: u64,
}

impl Default for SplitterConfig {
    fn default() -> Self {
        SplitterConfig {
            horizon_s: default_horizon(),
            fit_window: default_fit_window(),
            onset_omega: default_onset_omega(),
            give_up_s: default_give_up(),
            split_delay_frames: default_split_delay(),
        }
    }
}

fn default_post_split() -> f64 {
    5.0
}
fn default_settle_fraction() -> f64 {
    0.1
}

/// Everything a run needs besides the network and the event script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub pp: PpConfig,
    #[serde(default)]
    pub splitter: SplitterConfig,
    /// Registry file, relative to the configuration file; the bundled 39-bus
    /// registry is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    /// Simulated time kept after a split, s.
    #[serde(default = "default_post_split")]
    pub post_split_s: f64,
    /// Islands count as settled when their energy over the last second of the
    /// post-split interval stays below this fraction of the detection value.
    #[serde(default = "default_settle_fraction")]
    pub settle_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detector: DetectorConfig::default(),
            pp: PpConfig::default(),
            splitter: SplitterConfig::default(),
            registry: None,
            post_split_s: default_post_split(),
            settle_fraction: default_settle_fraction(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file; a relative registry path is resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| e.context(path.display()))?;
        if let (Some(reg), Some(dir)) = (&cfg.registry, path.parent()) {
            if reg.is_relative() {
                cfg.registry = Some(dir.join(reg));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.detector.validate()?;
        self.pp.validate(&self.detector)?;
        let s = &self.splitter;
        if !(s.horizon_s > 0.0 && s.fit_window >= 3 && s.onset_omega > 0.0 && s.give_up_s >= 0.0) {
            return Err(HarnessError::Config(
                "splitter needs horizon_s > 0, fit_window >= 3, onset_omega > 0, give_up_s >= 0".into(),
            ));
        }
        if !(self.post_split_s > 0.0 && self.settle_fraction > 0.0) {
            return Err(HarnessError::Config("post_split_s and settle_fraction must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.splitter.fit_window, 12);
        assert_eq!(cfg.detector.delta_crt_deg, 220.0);
    }

    #[test]
    fn nested_overrides_and_rejections() {
        let cfg = PipelineConfig::from_json(r#"{"detector":{"alpha_w":1.05},"splitter":{"give_up_s":1}}"#).unwrap();
        assert_eq!(cfg.detector.alpha_w, 1.05);
        assert_eq!(cfg.splitter.give_up_s, 1.0);
        assert!(PipelineConfig::from_json(r#"{"detector":{"alpha_w":0.9}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"unknown":1}"#).is_err());
    }
}
