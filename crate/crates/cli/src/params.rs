//! Parameter records for each command, their JSON layering
//! (defaults, then config file, then flags) and the `meta.json` format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sparse_debias::designs::CovarianceKind;
use sparse_debias::diagnostics::risk::SureConfig;
use sparse_debias::diagnostics::{
    CoverageConfig, DenoiserCheckConfig, KurtosisConfig, RiskCurveConfig, TwoStepConfig,
};

use crate::error::CliError;

pub const TOOL: &str = "sparse-debias";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateParams {
    pub covariance: CovarianceKind,
    pub p: usize,
    pub n: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self { covariance: CovarianceKind::Circulant { r: 0.8 }, p: 30, n: 60, s0: 3, amplitude: 0.15, sigma: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitParams {
    /// Dataset envelope or the directory holding it.
    pub data: PathBuf,
    /// Explicit `λ`; otherwise `κσ√(log p / n)`.
    pub lambda: Option<f64>,
    pub kappa: f64,
    /// Known noise level; the scaled-Lasso estimate is used when absent.
    pub sigma: Option<f64>,
    pub lambda_bar: Option<f64>,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { data: PathBuf::new(), lambda: None, kappa: 8.0, sigma: None, lambda_bar: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InferMode {
    KnownOmega,
    Nodewise,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferParams {
    pub data: PathBuf,
    pub mode: InferMode,
    /// CSV file with the population covariance `Σ`; falls back to the
    /// covariance model stored in the dataset envelope.
    pub sigma_file: Option<PathBuf>,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub kappa: f64,
    pub sigma: Option<f64>,
    pub lambda_bar: Option<f64>,
    /// `λ̃ = K√(log p / n)` for the node-wise Lasso.
    pub lambda_tilde_k: f64,
    pub split_seed: u64,
}

impl Default for InferParams {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            mode: InferMode::KnownOmega,
            sigma_file: None,
            alpha: 0.05,
            lambda: None,
            kappa: 8.0,
            sigma: None,
            lambda_bar: None,
            lambda_tilde_k: 2.0,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams<T> {
    pub seed: u64,
    pub plot: bool,
    /// Kurtosis only: run one sweep per sparsity level.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    pub config: T,
}

impl<T: Default> Default for ExperimentParams<T> {
    fn default() -> Self {
        Self { seed: 0, plot: true, epsilons: Vec::new(), config: T::default() }
    }
}

impl<T> ExperimentParams<T> {
    pub fn with_config(config: T) -> Self
    where
        T: Default,
    {
        Self { config, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum ExperimentRun {
    Kurtosis(ExperimentParams<KurtosisConfig>),
    Coverage(ExperimentParams<CoverageConfig>),
    RiskCurve(ExperimentParams<RiskCurveConfig>),
    TwoStep(ExperimentParams<TwoStepConfig>),
    DenoiserCheck(ExperimentParams<DenoiserCheckConfig>),
    Sure(ExperimentParams<SureConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Invocation {
    Simulate(SimulateParams),
    Fit(FitParams),
    Infer(InferParams),
    Experiment(ExperimentRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    /// Values computed during the run (chosen `λ`, `σ̂`, multipliers, …).
    #[serde(default)]
    pub derived: BTreeMap<String, Value>,
}

impl Meta {
    pub fn new(invocation: Invocation) -> Self {
        Self { tool: TOOL.into(), version: env!("CARGO_PKG_VERSION").into(), invocation, derived: BTreeMap::new() }
    }

    pub fn derive(&mut self, key: &str, value: impl Serialize) {
        self.derived.insert(key.into(), serde_json::to_value(value).expect("serializable"));
    }
}

/// Overlay `patch` onto `base`: objects merge key by key, anything else
/// replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && !is_tagged(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Tagged enums (`{"kind": …}`) are replaced wholesale when the variant
/// changes, so fields of the old variant do not leak into the new one.
fn is_tagged(old: &Value, new: &Value) -> bool {
    match (old.get("kind"), new.get("kind")) {
        (Some(a), Some(b)) => a != b,
        (Some(_), None) | (None, Some(_)) => false,
        (None, None) => false,
    }
}

pub fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::config(format!("config {} must hold a JSON object", path.display())));
    }
    Ok(value)
}

/// Defaults, overlaid by the config file, overlaid by flags.
pub fn layer<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<Value>, flags: Value) -> Result<T, CliError> {
    let mut value = serde_json::to_value(defaults).expect("defaults serialize");
    if let Some(f) = file {
        merge(&mut value, f);
    }
    merge(&mut value, flags);
    serde_json::from_value(value).map_err(|e| CliError::config(format!("invalid configuration: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_precedence() {
        let d = SimulateParams::default();
        let got: SimulateParams = layer(&d, Some(json!({"p": 50, "n": 80})), json!({"n": 90})).unwrap();
        assert_eq!((got.p, got.n, got.s0), (50, 90, 3));
    }

    #[test]
    fn unknown_keys_rejected() {
        let d = SimulateParams::default();
        assert!(layer(&d, Some(json!({"q": 1})), json!({})).is_err());
        let d = ExperimentParams::<TwoStepConfig>::default();
        assert!(layer(&d, None, json!({"config": {"alpha": 0.1}})).is_err());
    }

    #[test]
    fn variant_switch_replaces_payload() {
        let d = SimulateParams::default();
        let got: SimulateParams = layer(&d, None, json!({"covariance": {"kind": "identity"}})).unwrap();
        assert_eq!(got.covariance, CovarianceKind::Identity);
        let got: SimulateParams = layer(&d, None, json!({"covariance": {"r": 0.5}})).unwrap();
        assert_eq!(got.covariance, CovarianceKind::Circulant { r: 0.5 });
    }

    #[test]
    fn meta_round_trip() {
        let mut meta = Meta::new(Invocation::Experiment(ExperimentRun::TwoStep(ExperimentParams::default())));
        meta.derive("lambda", 0.5);
        let text = serde_json::to_string(&meta).unwrap();
        let back: Meta = serde_json::from_str(&text).unwrap();
        assert_eq!(back, meta);
    }
}
