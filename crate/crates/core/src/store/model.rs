//! Detector model files: JSON with a format tag and version. Layer weights
//! are row-major arrays; floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, json_err, write_json, StoreError};
use crate::detect::DetectorModel;

pub const MODEL_FORMAT: &str = "scaforge-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    model: DetectorModel,
}

pub fn write_model(path: &Path, model: &DetectorModel) -> Result<(), StoreError> {
    model.validate()?;
    write_json(
        path,
        &ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: model.clone(),
        },
    )
}

pub fn read_model(path: &Path) -> Result<DetectorModel, StoreError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    // check the tag before the body so a newer layout reports its version
    #[derive(Deserialize)]
    struct Tag {
        format: String,
        version: u32,
    }
    let tag: Tag = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    if tag.format != MODEL_FORMAT {
        return Err(StoreError::Format {
            path: path.to_path_buf(),
            expected: MODEL_FORMAT.into(),
            found: tag.format,
        });
    }
    if tag.version != MODEL_VERSION {
        return Err(StoreError::VersionMismatch {
            found: tag.version,
            supported: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    file.model.validate()?;
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let mut m = DetectorModel::init(&[40, 8, 4], RngStream::new(3, 0)).unwrap();
        m.input_offset = 0.1 + 0.2;
        m.input_scale = 1.0 / 3.0;
        write_model(&p, &m).unwrap();
        assert_eq!(read_model(&p).unwrap(), m);
    }

    #[test]
    fn rejects_newer_version_and_foreign_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = DetectorModel::zeros(&[32, 4]).unwrap();
        write_model(&p, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, text.replace("\"version\": 1", "\"version\": 2")).unwrap();
        assert!(matches!(read_model(&p), Err(StoreError::VersionMismatch { found: 2, .. })));
        std::fs::write(&p, text.replace("scaforge-mlp", "other")).unwrap();
        assert!(matches!(read_model(&p), Err(StoreError::Format { .. })));
        std::fs::write(&p, text.replace("\"inputs\": 32", "\"inputs\": 31")).unwrap();
        assert!(matches!(read_model(&p), Err(StoreError::Detect(_))));
    }
}
