//! One JSON document configuring a whole run: embedding, fit, thresholds,
//! and the surrogate scenario. Every section and every field is optional;
//! unknown keys are rejected with the offending path.

use serde::{Deserialize, Serialize};

use crate::detection::ThresholdPolicy;
use crate::embedding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::latent::FitConfig;
use crate::waveform::ArcFaultScenario;

/// Fully resolved run configuration, defaults filled in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub embedding: EmbeddingConfig,
    pub fit: FitConfig,
    pub policy: ThresholdPolicy,
    pub scenario: ArcFaultScenario,
    /// Whether the parsed document carried an explicit `scenario` section.
    /// Commands that interpret the waveform against scenario timings only
    /// do so when the user actually stated them.
    #[serde(skip)]
    pub scenario_provided: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    embedding: Option<EmbeddingConfig>,
    fit: Option<FitConfig>,
    policy: Option<ThresholdPolicy>,
    scenario: Option<ArcFaultScenario>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.embedding.validate()?;
        self.fit.validate()?;
        self.policy.validate()?;
        self.scenario.validate()?;
        Ok(())
    }
}

/// Parses and validates a run configuration. Syntax errors, unknown keys,
/// and invalid values all surface the JSON path they occurred at.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawRunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let location = if path == "." {
            "the top level".to_string()
        } else {
            path
        };
        Error::Config(format!("config error at {location}: {}", e.inner()))
    })?;
    let config = RunConfig {
        embedding: raw.embedding.unwrap_or_default(),
        fit: raw.fit.unwrap_or_default(),
        policy: raw.policy.unwrap_or_default(),
        scenario_provided: raw.scenario.is_some(),
        scenario: raw.scenario.unwrap_or_default(),
    };
    config.validate()?;
    Ok(config)
}

/// Reads and parses a run configuration file.
pub fn load_run_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_run_config(&text)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::CombineMode;

    #[test]
    fn empty_document_resolves_to_defaults() {
        let config = parse_run_config("{}").unwrap();
        assert_eq!(config.embedding, EmbeddingConfig::default());
        assert_eq!(config.fit, FitConfig::default());
        assert_eq!(config.policy, ThresholdPolicy::default());
        assert_eq!(config.scenario, ArcFaultScenario::default());
        assert!(!config.scenario_provided);
    }

    #[test]
    fn partial_sections_keep_the_other_defaults() {
        let config = parse_run_config(
            r#"{"fit": {"latent_dim": 3}, "policy": {"combine_mode": "error_or_growth"}}"#,
        )
        .unwrap();
        assert_eq!(config.fit.latent_dim, 3);
        assert_eq!(config.fit.lift_degree, FitConfig::default().lift_degree);
        assert_eq!(config.policy.combine_mode, CombineMode::ErrorOrGrowth);
        assert_eq!(config.policy.calibration_window, 30);
        assert!(!config.scenario_provided);
    }

    #[test]
    fn explicit_scenario_is_flagged_as_provided() {
        let config = parse_run_config(r#"{"scenario": {"fault_start": 0.25}}"#).unwrap();
        assert!(config.scenario_provided);
        assert_eq!(config.scenario.fault_start, 0.25);
        assert_eq!(
            config.scenario.amplitude,
            ArcFaultScenario::default().amplitude
        );
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = parse_run_config(r#"{"fit": {"latent_dims": 2}}"#).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("latent_dims"), "{message}");
        assert!(message.contains("fit"), "{message}");

        let err = parse_run_config(r#"{"policies": {}}"#).unwrap_err();
        assert!(err.to_string().contains("policies"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected_after_parsing() {
        let err = parse_run_config(r#"{"scenario": {"amplitude": -5.0}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let err = parse_run_config(r#"{"fit": {"lift_degree": 1}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(matches!(
            parse_run_config("{\"fit\": "),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn resolved_config_serializes_every_section() {
        let config = parse_run_config("{}").unwrap();
        let text = serde_json::to_string(&config).unwrap();
        for key in [
            "embedding",
            "fit",
            "policy",
            "scenario",
            "calibration_window",
        ] {
            assert!(text.contains(key), "echo misses {key}");
        }
        assert!(!text.contains("scenario_provided"));
        // The echo itself parses back.
        let reparsed = parse_run_config(&text).unwrap();
        assert_eq!(reparsed.fit, config.fit);
    }
}
