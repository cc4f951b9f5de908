use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// SHA-256 of one top-level section of a JSON document, taken over its
/// compact serialization with sorted keys so formatting does not matter.
pub fn section_digest(json: &str, section: &str) -> Result<String> {
    let root: Value = serde_json::from_str(json).map_err(|e| CliError::Data(format!("model file: {e}")))?;
    let part = root
        .get(section)
        .ok_or_else(|| CliError::Data(format!("model file has no `{section}` section")))?;
    let canonical = serde_json::to_string(part).expect("json value serializes");
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}
