use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::model::{AnyModel, ModelKind, TrainConfig};

pub const FORMAT_VERSION: u64 = 1;

/// Self-describing JSON document. Parameters are stored raw (before the
/// positivity maps) with their shapes, so constraints re-apply on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format_version: u64,
    pub kind: ModelKind,
    pub seed: u64,
    pub config: TrainConfig,
    pub model: AnyModel,
}

impl ModelArchive {
    pub fn new(model: AnyModel, config: TrainConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: model.kind(),
            seed: config.seed,
            config,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serialises")
    }

    /// Parses and checks version, fields and model consistency. `path` is only
    /// used in diagnostics.
    pub fn from_json(text: &str, path: &Path) -> Result<Self, StoreError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| StoreError::malformed(path, e))?;
        let obj = value
            .as_object()
            .ok_or_else(|| StoreError::malformed(path, "top level is not an object"))?;
        let version = obj
            .get("format_version")
            .ok_or_else(|| StoreError::MissingField {
                path: path.to_path_buf(),
                field: "format_version".into(),
            })?;
        let version = version.as_u64().ok_or_else(|| {
            StoreError::malformed(path, "format_version is not an unsigned integer")
        })?;
        if version != FORMAT_VERSION {
            return Err(StoreError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let archive: ModelArchive = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            match msg.strip_prefix("missing field `") {
                Some(rest) => StoreError::MissingField {
                    path: path.to_path_buf(),
                    field: rest.split('`').next().unwrap_or(rest).to_string(),
                },
                None => StoreError::malformed(path, msg),
            }
        })?;
        archive
            .model
            .validate()
            .map_err(|e| StoreError::malformed(path, e))?;
        if archive.kind != archive.model.kind() {
            return Err(StoreError::malformed(
                path,
                format!(
                    "kind tag {} does not match stored {}",
                    archive.kind.name(),
                    archive.model.kind().name()
                ),
            ));
        }
        Ok(archive)
    }
}

pub fn save_model(archive: &ModelArchive, path: &Path) -> Result<(), StoreError> {
    fs::write(path, archive.to_json()).map_err(|e| StoreError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelArchive, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    ModelArchive::from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InvexArch, InvexModel};

    fn small() -> ModelArchive {
        let arch = InvexArch {
            flow_hidden: vec![8],
            icnn_widths: vec![8, 8],
            ..InvexArch::new(2)
        };
        ModelArchive::new(
            AnyModel::Invex(InvexModel::new(arch, 3)),
            TrainConfig::default(),
        )
    }

    #[test]
    fn json_round_trip_is_exact() {
        let a = small();
        let b = ModelArchive::from_json(&a.to_json(), Path::new("mem")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn distinct_diagnostics() {
        let p = Path::new("mem");
        let json = small().to_json();
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(
            ModelArchive::from_json(&bumped, p),
            Err(StoreError::VersionMismatch { found: 2, .. })
        ));
        assert!(matches!(
            ModelArchive::from_json(&json[..json.len() / 2], p),
            Err(StoreError::Malformed { .. })
        ));
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v.as_object_mut().unwrap().remove("config");
        assert!(matches!(
            ModelArchive::from_json(&v.to_string(), p),
            Err(StoreError::MissingField { ref field, .. }) if field == "config"
        ));
        v.as_object_mut().unwrap().remove("format_version");
        assert!(matches!(
            ModelArchive::from_json(&v.to_string(), p),
            Err(StoreError::MissingField { ref field, .. }) if field == "format_version"
        ));
    }
}
