//! JSON experiment description.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    build_kernel, Activity, ColonyProfile, Geometry, InitialLaw, KernelSpec, Model, ProfileSpec,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A dual particle in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub site: usize,
    pub state: Activity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSection {
    pub particles: Vec<ParticleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub kernel: KernelSection,
    pub profile: ProfileSection,
    pub lambda: f64,
    pub initial: InitialLaw,
    pub horizon: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<DualSection>,
}

fn tagged(kind: &str, params: &Map<String, Value>) -> Value {
    let mut obj = params.clone();
    obj.insert("type".into(), Value::String(kind.to_string()));
    Value::Object(obj)
}

impl KernelSection {
    pub fn spec(&self) -> Result<KernelSpec> {
        serde_json::from_value(tagged(&self.kind, &self.params))
            .map_err(|e| Error::Kernel(format!("kernel '{}': {e}", self.kind)))
    }
}

impl ProfileSection {
    pub fn spec(&self) -> Result<ProfileSpec> {
        let mut params = self.params.clone();
        if let Some(seed) = self.seed {
            params.entry("seed").or_insert(Value::from(seed));
        }
        serde_json::from_value(tagged(&self.kind, &params))
            .map_err(|e| Error::Profile(format!("profile '{}': {e}", self.kind)))
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks scalar fields; structural checks happen in [`Self::build_model`].
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::Parameter(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Parameter("replicates must be at least 1".into()));
        }
        if let Some(t) = self
            .snapshots
            .iter()
            .find(|t| !(t.is_finite() && **t >= 0.0 && **t <= self.horizon))
        {
            return Err(Error::Parameter(format!(
                "snapshot time {t} outside [0, {}]",
                self.horizon
            )));
        }
        if let InitialLaw::Binomial { theta } = self.initial {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::Parameter(format!(
                    "theta must lie in [0,1], got {theta}"
                )));
            }
        }
        Ok(())
    }

    /// Sorted snapshot schedule; defaults to the horizon alone.
    pub fn schedule(&self) -> Vec<f64> {
        if self.snapshots.is_empty() {
            return vec![self.horizon];
        }
        let mut s = self.snapshots.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    pub fn build_model(&self) -> Result<Model> {
        let geometry = Geometry::new(self.geometry.d, self.geometry.side)?;
        let kernel = build_kernel(
            &self.kernel.spec()?,
            &geometry,
            self.kernel.truncation_radius,
        )?;
        let profile = ColonyProfile::from_spec(&self.profile.spec()?, &geometry)?;
        self.initial.validate(&profile)?;
        if let Some(dual) = &self.dual {
            if let Some(p) = dual.particles.iter().find(|p| p.site >= geometry.sites()) {
                return Err(Error::DualState(format!(
                    "particle site {} out of range",
                    p.site
                )));
            }
        }
        Model::new(kernel, profile, self.lambda)
    }
}

/// Sets a dotted-path field of a JSON document, creating objects as needed.
///
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override '{assignment}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Parse(format!("bad override path '{path}'")));
    }
    let mut cursor = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| Error::Parse(format!("override path '{path}' crosses a non-object")))?;
        cursor = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = cursor
        .as_object_mut()
        .ok_or_else(|| Error::Parse(format!("override path '{path}' crosses a non-object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
