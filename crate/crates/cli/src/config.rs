//! Run configuration: one TOML file drives the whole pipeline. The file is
//! copied verbatim into the output directory for provenance.

use predcoh_core::data::LabelPolicy;
use predcoh_core::features::{BiFeatureKind, FeatureConfig, MatrixVariant, UniFeatureKind};
use predcoh_core::method1::Method1Spec;
use predcoh_core::method2::Method2Spec;
use predcoh_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where the recording comes from: a named scenario, an explicit generator
/// config, or an existing recording directory. Exactly one must be set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recording: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    #[serde(flatten)]
    pub core: FeatureConfig,
    /// Catalog toggles: which kinds enter the feature search.
    pub uni_kinds: Vec<UniFeatureKind>,
    pub bi_kinds: Vec<BiFeatureKind>,
    pub variants: Vec<MatrixVariant>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            core: FeatureConfig::default(),
            uni_kinds: UniFeatureKind::ALL.to_vec(),
            bi_kinds: BiFeatureKind::ALL.to_vec(),
            variants: MatrixVariant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Method2Config {
    #[serde(flatten)]
    pub spec: Method2Spec,
    /// Training uses every `stride`-th segment of each training clip
    /// (prediction always uses all 40).
    pub train_segment_stride: usize,
}

impl Default for Method2Config {
    fn default() -> Self {
        Method2Config { spec: Method2Spec::default(), train_segment_stride: 7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Permutation draws per method (pairings are m(m+1)/2).
    pub permutations: usize,
    /// Omission thresholds; must include 1.0.
    pub threshold_grid: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            permutations: 100,
            threshold_grid: predcoh_core::eval::default_threshold_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub input: InputConfig,
    /// Labeling rules; defaults to the scenario's policy when a scenario is
    /// selected, and to the long-recording policy otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelPolicy>,
    pub features: FeaturesConfig,
    pub method1: Method1Spec,
    pub method2: Method2Config,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            out_dir: PathBuf::from("predcoh-out"),
            input: InputConfig::default(),
            label: None,
            features: FeaturesConfig::default(),
            method1: Method1Spec::default(),
            method2: Method2Config::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sources = [
            self.input.scenario.is_some(),
            self.input.synth.is_some(),
            self.input.recording.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if sources != 1 {
            return Err(ConfigError::Invalid(
                "input needs exactly one of: scenario, synth, recording".into(),
            ));
        }
        if let Some(name) = &self.input.scenario {
            if predcoh_core::synth::scenario(name).is_none() {
                let known: Vec<String> = predcoh_core::synth::standard_scenarios()
                    .into_iter()
                    .map(|s| s.name)
                    .collect();
                return Err(ConfigError::Invalid(format!(
                    "unknown scenario {name:?} (known: {})",
                    known.join(", ")
                )));
            }
        }
        if self.features.uni_kinds.is_empty()
            || self.features.bi_kinds.is_empty()
            || self.features.variants.is_empty()
        {
            return Err(ConfigError::Invalid("feature catalog toggles must be non-empty".into()));
        }
        if !self.eval.threshold_grid.iter().any(|&t| t >= 1.0) {
            return Err(ConfigError::Invalid("threshold grid must include 1.0".into()));
        }
        if self.eval.permutations < 2 {
            return Err(ConfigError::Invalid("eval.permutations must be >= 2".into()));
        }
        if self.method2.train_segment_stride == 0 {
            return Err(ConfigError::Invalid("method2.train_segment_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// The labeling policy for this run.
    pub fn label_policy(&self) -> LabelPolicy {
        if let Some(p) = &self.label {
            return p.clone();
        }
        if let Some(name) = &self.input.scenario {
            if let Some(sc) = predcoh_core::synth::scenario(name) {
                return sc.label_policy;
            }
        }
        LabelPolicy::default()
    }

    /// The generator config, when the input is synthetic.
    pub fn synth_config(&self) -> Option<SynthConfig> {
        if let Some(s) = &self.input.synth {
            return Some(s.clone());
        }
        self.input
            .scenario
            .as_ref()
            .and_then(|n| predcoh_core::synth::scenario(n))
            .map(|s| s.synth)
    }

    /// Full feature-combination catalog from the toggles, canonical order.
    pub fn catalog(&self) -> Vec<(UniFeatureKind, BiFeatureKind, MatrixVariant)> {
        let mut out = Vec::new();
        for &u in UniFeatureKind::ALL.iter().filter(|u| self.features.uni_kinds.contains(u)) {
            for &b in BiFeatureKind::ALL.iter().filter(|b| self.features.bi_kinds.contains(b)) {
                for &v in MatrixVariant::ALL.iter().filter(|v| self.features.variants.contains(v)) {
                    out.push((u, b, v));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.input.scenario = Some("separable".into());
        let text = cfg.to_toml();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.catalog().len(), 48);
    }

    #[test]
    fn input_must_be_single_source() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_err());
        cfg.input.scenario = Some("separable".into());
        cfg.input.recording = Some("x".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.input.scenario = Some("nope".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scenario_brings_its_label_policy() {
        let mut cfg = PipelineConfig::default();
        cfg.input.scenario = Some("separable".into());
        let p = cfg.label_policy();
        assert_eq!(p.edge_discard_s, 1800.0);
    }
}
