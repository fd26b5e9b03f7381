//! JSON run configuration: plant and reference definitions, adaptive-law
//! gains, harness settings, plus dotted-path overrides.
//!
//! Matrices are row-major nested arrays. Basis functions are
//! `{name, params, lipschitz}` records drawn from the fixed catalog in
//! [`crate::plant::BasisFn`]; `lipschitz` may be omitted where the form has a
//! natural global constant. Unknown keys anywhere are rejected.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::plant::BasisFn;

/// Row-major nested-array matrix as it appears in JSON.
pub type MatrixRows = Vec<Vec<f64>>;

pub fn to_dmatrix(rows: &MatrixRows, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::config(format!("{what}: matrix must be non-empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(format!("{what}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentParams {
    pub index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SineParams {
    pub index: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TanhParams {
    pub index: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SineProductParams {
    pub i: usize,
    pub j: usize,
}

fn one() -> f64 {
    1.0
}

/// A `{name, params, lipschitz}` basis-function record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisEntryConfig {
    Component {
        params: ComponentParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Sine {
        params: SineParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Tanh {
        params: TanhParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    SatQuad {
        params: ComponentParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    /// The product form has no global Lipschitz constant; the configuration
    /// must state the bound it is used under.
    SineProduct {
        params: SineProductParams,
        lipschitz: f64,
    },
}

impl BasisEntryConfig {
    /// Resolves the record into a catalog function and its constant,
    /// preferring the explicit `lipschitz` over the form's natural one.
    pub fn resolve(&self) -> Result<(BasisFn, f64)> {
        let (f, explicit) = match self {
            BasisEntryConfig::Component { params, lipschitz } => {
                (BasisFn::Component { index: params.index }, *lipschitz)
            }
            BasisEntryConfig::Sine { params, lipschitz } => (
                BasisFn::Sine {
                    index: params.index,
                    amplitude: params.amplitude,
                    frequency: params.frequency,
                },
                *lipschitz,
            ),
            BasisEntryConfig::Tanh { params, lipschitz } => (
                BasisFn::Tanh {
                    index: params.index,
                    scale: params.scale,
                },
                *lipschitz,
            ),
            BasisEntryConfig::SatQuad { params, lipschitz } => {
                (BasisFn::SatQuad { index: params.index }, *lipschitz)
            }
            BasisEntryConfig::SineProduct { params, lipschitz } => (
                BasisFn::SineProduct {
                    i: params.i,
                    j: params.j,
                },
                Some(*lipschitz),
            ),
        };
        let lip = explicit.or_else(|| f.natural_lipschitz()).ok_or_else(|| {
            Error::config("basis function needs an explicit lipschitz constant")
        })?;
        Ok((f, lip))
    }
}

/// Continuous-time dynamics to discretize by zero-order hold.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ContinuousDynamics {
    pub a: MatrixRows,
    pub b: MatrixRows,
    /// Optional reference-input matrix, discretized alongside `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_r: Option<MatrixRows>,
    pub dt: f64,
}

/// Either direct discrete matrices or continuous ones plus a sampling period.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousDynamics>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub dynamics: DynamicsConfig,
    /// Optional distinct discrete reference-input matrix. When present the
    /// reference input enters the plant and the reference model through this
    /// matrix instead of riding on the control channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_r: Option<MatrixRows>,
    #[serde(default)]
    pub basis: Vec<BasisEntryConfig>,
    #[serde(default)]
    pub coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LqrRecipe {
    pub q: MatrixRows,
    pub r: MatrixRows,
}

/// Reference model: either an explicit `A_m` or an LQR recipe applied to the
/// nominal discrete dynamics (`A_m = A + B K`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_m: Option<MatrixRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrRecipe>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceInputConfig {
    /// The same vector at every step.
    Constant(Vec<f64>),
    /// An explicit per-step sequence, at least `horizon` entries long.
    Sequence(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GainModeConfig {
    #[default]
    Proposition,
    ExtendedRegion,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Gd {
        gamma: f64,
        mu: f64,
    },
    Hot {
        gamma: f64,
        beta: f64,
        mu: f64,
        #[serde(default)]
        gain_mode: GainModeConfig,
    },
}

impl LawConfig {
    pub fn mu(&self) -> f64 {
        match self {
            LawConfig::Gd { mu, .. } | LawConfig::Hot { mu, .. } => *mu,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Theta0Config {
    /// All-zero initial estimate.
    Zeros,
    /// Gain block set to the LQR nominal gain, coefficient blocks zero.
    /// Requires an LQR reference recipe.
    NominalGain,
    /// Explicit `m x (n+p)` matrix.
    Matrix(MatrixRows),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub fail_fast: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub trials: usize,
    #[serde(default = "default_perturb_low")]
    pub perturb_low: f64,
    #[serde(default = "default_perturb_high")]
    pub perturb_high: f64,
}

fn default_perturb_low() -> f64 {
    -0.5
}

fn default_perturb_high() -> f64 {
    2.0
}

/// Top-level run configuration shared by the simulate and montecarlo
/// commands.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub reference: ReferenceConfig,
    pub r_max: f64,
    pub reference_input: ReferenceInputConfig,
    pub law: LawConfig,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_p0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_m0: Option<Vec<f64>>,
    pub theta0: Theta0Config,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
}

/// Parses a configuration from JSON text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::config(format!("json parse: {e}")))?;
    config_from_value(value)
}

/// Final deserialization step; shared by the override path.
pub fn config_from_value(value: Value) -> Result<RunConfig> {
    serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))
}

/// Loads a configuration file.
pub fn load_config(path: &str) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_string(),
        source: e,
    })?;
    parse_config(&text)
}

/// Loads the file as a raw JSON value for override application.
pub fn load_config_value(path: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{path}: {e}")))
}

/// Applies one `dotted.path=value` override in place. Every path segment
/// must already exist in the document; overrides never create keys, so a
/// typo is an error rather than a silently ignored setting.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::config(format!("override '{assignment}' must look like key.path=value"))
    })?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config(format!("override path '{path}' has empty segments")));
    }
    let mut cursor = root;
    for (i, segment) in segments.iter().enumerate() {
        let obj = cursor.as_object_mut().ok_or_else(|| {
            Error::config(format!(
                "override path '{path}': '{}' is not an object",
                segments[..i].join(".")
            ))
        })?;
        cursor = obj.get_mut(*segment).ok_or_else(|| {
            Error::config(format!("override path '{path}': unknown key '{segment}'"))
        })?;
        if i + 1 == segments.len() {
            *cursor = serde_json::from_str(raw)
                .unwrap_or_else(|_| Value::String(raw.to_string()));
            return Ok(());
        }
    }
    unreachable!("override paths are non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config_json() -> String {
        r#"{
            "plant": {
                "dynamics": {"a": [[1.2]], "b": [[1.0]]},
                "basis": [],
                "coeffs": []
            },
            "reference": {"a_m": [[0.5]]},
            "r_max": 10.0,
            "reference_input": {"constant": [0.0]},
            "law": {"law": "gd", "gamma": 1.0, "mu": 1.0},
            "horizon": 100,
            "theta0": "zeros",
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = parse_config(&minimal_config_json()).unwrap();
        assert_eq!(cfg.horizon, 100);
        assert_eq!(cfg.seed, 7);
        assert!(matches!(cfg.theta0, Theta0Config::Zeros));
        assert!(matches!(cfg.law, LawConfig::Gd { .. }));
        assert!(!cfg.monitor.enabled);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = minimal_config_json().replace("\"seed\": 7", "\"seed\": 7, \"extra\": 1");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn basis_entry_resolution_and_defaults() {
        let entry: BasisEntryConfig = serde_json::from_str(
            r#"{"name": "sine", "params": {"index": 0, "amplitude": 2.0, "frequency": 3.0}}"#,
        )
        .unwrap();
        let (f, lip) = entry.resolve().unwrap();
        assert_eq!(
            f,
            BasisFn::Sine {
                index: 0,
                amplitude: 2.0,
                frequency: 3.0
            }
        );
        assert_eq!(lip, 6.0);

        let with_explicit: BasisEntryConfig = serde_json::from_str(
            r#"{"name": "tanh", "params": {"index": 1}, "lipschitz": 0.5}"#,
        )
        .unwrap();
        let (_, lip) = with_explicit.resolve().unwrap();
        assert_eq!(lip, 0.5);

        // Product form without an explicit constant cannot be parsed.
        let missing = serde_json::from_str::<BasisEntryConfig>(
            r#"{"name": "sine_product", "params": {"i": 0, "j": 1}}"#,
        );
        assert!(missing.is_err());
    }

    #[test]
    fn override_replaces_existing_keys_only() {
        let mut value: Value = serde_json::from_str(&minimal_config_json()).unwrap();
        apply_override(&mut value, "law.gamma=0.9").unwrap();
        assert_eq!(value["law"]["gamma"], serde_json::json!(0.9));

        apply_override(&mut value, "law.law=hot").unwrap();
        assert_eq!(value["law"]["law"], serde_json::json!("hot"));

        let err = apply_override(&mut value, "law.gmma=0.9").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");

        let err = apply_override(&mut value, "nonsense").unwrap_err();
        assert!(err.to_string().contains("key.path=value"), "{err}");
    }

    #[test]
    fn config_round_trips_through_serde() {
        let cfg = parse_config(&minimal_config_json()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
