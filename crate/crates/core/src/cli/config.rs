use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{CoefficientSpec, OperatorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Check,
    Double,
    Calderon,
    Invariants,
    Sweep,
    Ucp,
    Cobordism,
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Double => "double",
            Command::Calderon => "calderon",
            Command::Invariants => "invariants",
            Command::Sweep => "sweep",
            Command::Ucp => "ucp",
            Command::Cobordism => "cobordism",
            Command::OracleCompare => "oracle-compare",
        }
    }
}

/// Tolerances every verdict is tested against; overridable per key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub idem: f64,
    pub compl: f64,
    pub sym: f64,
    pub ker: f64,
    pub rank: f64,
    pub green: f64,
    pub angle: f64,
    pub correction: f64,
    pub isotropy: f64,
    pub transversality: f64,
    pub quad: f64,
    pub ode: f64,
    pub imag: f64,
    pub gap_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            idem: 1e-8,
            compl: 1e-8,
            sym: 1e-8,
            ker: 1e-6,
            rank: 1e-10,
            green: 1e-8,
            angle: 1e-6,
            correction: 1e-6,
            isotropy: 1e-8,
            transversality: 1e-3,
            quad: 1e-8,
            ode: 1e-12,
            imag: 1e-9,
            gap_ratio: 10.0,
        }
    }
}

impl Tolerances {
    /// Applies a `KEY=VALUE` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--tol expects KEY=VALUE, got `{assignment}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--tol {key}: `{value}` is not a number")))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("--tol {key}: must be positive and finite")));
        }
        let mut map = serde_json::to_value(&*self)?;
        let slot = map
            .get_mut(key.trim())
            .ok_or_else(|| Error::Config(format!("unknown tolerance key `{}`", key.trim())))?;
        *slot = serde_json::json!(value);
        *self = serde_json::from_value(map)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourOverrides {
    pub cut_radius: Option<f64>,
    pub leg_angle: Option<f64>,
    pub truncation_radius: Option<f64>,
    pub n_quad: Option<usize>,
}

/// `spec(s) = base + s · direction` in one coefficient slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub direction: CoefficientSpec,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub sobolev_s: f64,
    #[serde(default)]
    pub cut_radius: Option<f64>,
}

impl SweepConfig {
    pub fn member(&self, base: &OperatorSpec, s: f64) -> Result<OperatorSpec> {
        let mut spec = base.clone();
        let slot = match self.parameter.as_str() {
            "J" => &mut spec.j,
            "beta1" => &mut spec.beta1,
            "beta0" => spec.beta0.get_or_insert_with(|| CoefficientSpec::zero(base.rank())),
            "C" => spec.c.get_or_insert_with(|| CoefficientSpec::zero(base.rank())),
            other => {
                return Err(Error::Config(format!(
                    "sweep.parameter: unknown coefficient `{other}` (expected J, beta1, beta0 or C)"
                )))
            }
        };
        *slot = slot.add_scaled(&self.direction, s);
        Ok(spec)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcpConfig {
    pub x_samples: Vec<f64>,
}

/// Parsed configuration file. `operator` is either a path (relative to
/// the configuration file) or an inline operator specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    pub operator: serde_json::Value,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub contour: ContourOverrides,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub ucp: Option<UcpConfig>,
    #[serde(default)]
    pub mode_limit: Option<i64>,
}

impl RunConfig {
    pub fn for_operator(operator: serde_json::Value) -> Self {
        Self {
            command: None,
            operator,
            tolerances: Tolerances::default(),
            contour: ContourOverrides::default(),
            sweep: None,
            ucp: None,
            mode_limit: None,
        }
    }
}

/// Configuration together with the operator it references.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: RunConfig,
    pub spec: OperatorSpec,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

pub fn load_operator_spec(value: &serde_json::Value, base: &Path) -> Result<OperatorSpec> {
    let spec: OperatorSpec = match value {
        serde_json::Value::String(p) => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("operator file {}: {e}", path.display())))?;
            parse_json(&text, &format!("operator file {}", path.display()))?
        }
        other => serde_json::from_value(other.clone())
            .map_err(|e| Error::Config(format!("operator: {e}")))?,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    let what = format!("config {}", path.display());
    let value: serde_json::Value = parse_json(&text, &what)?;
    // A bare operator specification runs with default settings.
    let is_bare_spec = value.get("geometry").is_some() && value.get("operator").is_none();
    let config: RunConfig = if is_bare_spec {
        RunConfig::for_operator(value)
    } else {
        parse_json(&text, &what)?
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let spec = load_operator_spec(&config.operator, base)?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        config,
        spec,
    })
}
