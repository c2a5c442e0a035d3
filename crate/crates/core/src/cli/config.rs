//! JSON run configs. Unknown keys are rejected and errors carry the path of
//! the offending field.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSlice;
use crate::error::{Error, Result};
use crate::grad_ratio::{RatioLoss, ScenarioKind, SweepParams};
use crate::proxy::ProxyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradRatioConfig {
    pub losses: Vec<RatioLoss>,
    pub k_values: Vec<usize>,
    pub scenarios: Vec<ScenarioKind>,
    pub sweep: SweepParams,
}

impl Default for GradRatioConfig {
    fn default() -> Self {
        Self {
            losses: RatioLoss::ALL.to_vec(),
            k_values: vec![10, 100, 1000, 10000],
            scenarios: ScenarioKind::ALL.to_vec(),
            sweep: SweepParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProxyConfig {
    pub members: EnsembleSlice,
    #[serde(default)]
    pub proxy: ProxyConfig,
}

/// Either an ensemble slice or Dirichlet concentrations, not both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    #[serde(default)]
    pub members: Option<EnsembleSlice>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub seed: u64,
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    // Reject trailing content after the document.
    serde_json::Deserializer::from_str(text)
        .into_iter::<serde_json::Value>()
        .nth(1)
        .map_or(Ok(value), |_| {
            Err(Error::Config {
                path: ".".into(),
                message: "trailing content".into(),
            })
        })
}

/// Reads `path`, or returns the defaults when no config is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => load_required(p),
    }
}

pub fn load_required<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassifyConfig;

    #[test]
    fn unknown_key_reports_path() {
        let err =
            parse_config::<ClassifyConfig>(r#"{"member": {"epochs": 3, "lr": 1}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "member.lr"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        let err =
            parse_config::<GradRatioConfig>(r#"{"sweep": {"epsilon": "small"}}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref path, .. } if path == "sweep.epsilon"),
            "{err}"
        );
    }

    #[test]
    fn empty_object_gives_defaults() {
        let c: GradRatioConfig = parse_config("{}").unwrap();
        assert_eq!(c, GradRatioConfig::default());
        assert!(parse_config::<GradRatioConfig>("{} {}").is_err());
    }
}
