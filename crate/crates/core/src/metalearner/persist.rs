use std::fs;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::MetaLearner;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

fn checksum(body: &Map<String, Value>) -> Result<String> {
    let canonical = serde_json::to_string(body)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Serialized form: the learner's fields plus `version` and a SHA-256
/// `checksum` of the remaining fields (keys sorted, compact encoding).
pub fn to_json(learner: &MetaLearner) -> Result<String> {
    let Value::Object(mut body) = serde_json::to_value(learner)? else {
        unreachable!("learner serializes to an object");
    };
    let sum = checksum(&body)?;
    body.insert("version".into(), Value::from(FORMAT_VERSION));
    body.insert("checksum".into(), Value::from(sum));
    Ok(serde_json::to_string(&body)?)
}

pub fn from_json(text: &str) -> Result<MetaLearner> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let Value::Object(mut body) = value else {
        return Err(Error::CorruptFile("top level is not an object".into()));
    };
    let version = body
        .remove("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptFile("missing version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let stored = match body.remove("checksum") {
        Some(Value::String(s)) => s,
        _ => return Err(Error::CorruptFile("missing checksum".into())),
    };
    if checksum(&body)? != stored {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    serde_json::from_value(Value::Object(body)).map_err(|e| Error::CorruptFile(e.to_string()))
}

pub fn save(learner: &MetaLearner, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(learner)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MetaLearner> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    from_json(&fs::read_to_string(path)?)
}
