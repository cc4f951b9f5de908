use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchetypeModel, Branch, CultureVector, DlirlError, Result, ACTION_BOUND};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branches {
    pub x: Branch,
    pub y: Branch,
}

/// On-disk layout of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub seed: u64,
    #[serde(default = "default_bound")]
    pub action_bound: f64,
    pub branches: Branches,
    pub culture: CultureVector,
}

fn default_bound() -> f64 {
    ACTION_BOUND
}

fn check_branch(name: &str, b: &Branch) -> Result<()> {
    let expected = b.layout().len();
    if b.params.len() != expected {
        return Err(DlirlError::CorruptFile(format!(
            "branch {name} has {} coefficients, layout needs {expected}",
            b.params.len()
        )));
    }
    if b.input_scale.contains(&0.0) {
        return Err(DlirlError::CorruptFile(format!("branch {name} has a zero input scale")));
    }
    Ok(())
}

pub fn model_to_json(model: &ArchetypeModel, culture: &CultureVector) -> String {
    let file = ModelFile {
        version: model.version,
        seed: model.seed,
        action_bound: model.action_bound,
        branches: Branches {
            x: model.x.clone(),
            y: model.y.clone(),
        },
        culture: *culture,
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<(ArchetypeModel, CultureVector)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DlirlError::CorruptFile(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| DlirlError::CorruptFile("missing version".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(DlirlError::VersionMismatch {
            found: version as u32,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| DlirlError::CorruptFile(e.to_string()))?;
    check_branch("x", &file.branches.x)?;
    check_branch("y", &file.branches.y)?;
    if !file.culture.is_finite() {
        return Err(DlirlError::CorruptFile("culture vector is not finite".into()));
    }
    let model = ArchetypeModel {
        version: file.version,
        seed: file.seed,
        action_bound: file.action_bound,
        x: file.branches.x,
        y: file.branches.y,
    };
    Ok((model, file.culture))
}

pub fn save_model(path: &Path, model: &ArchetypeModel, culture: &CultureVector) -> Result<()> {
    std::fs::write(path, model_to_json(model, culture))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ArchetypeModel, CultureVector)> {
    model_from_json(&std::fs::read_to_string(path)?)
}
