//! Versioned JSON files with atomic writes.
//!
//! Every artifact the pipeline reads or writes (detection sets, ground
//! truth, models, poses, reports, manifests) is a JSON document wrapped in
//! `{ "schema_version": 1, ... }`. Writes go to a temporary file in the
//! destination directory followed by a rename.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    payload: T,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path, source: serde_json::Error) -> Error {
    Error::Json {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes `value` under the current schema version and renames it into
/// place.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let doc = Versioned {
        schema_version: SCHEMA_VERSION,
        payload: value,
    };
    let bytes = serde_json::to_vec_pretty(&doc).map_err(|e| json_err(path, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".into())
    ));
    std::fs::write(&tmp, &bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a versioned JSON document, rejecting schema mismatches.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let doc: Versioned<T> = serde_json::from_slice(&bytes).map_err(|e| json_err(path, e))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: schema_version {} unsupported (expected {})",
            path.display(),
            doc.schema_version,
            SCHEMA_VERSION
        )));
    }
    Ok(doc.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Detection, DetectionSet, ImageSize, PartClass};
    use proptest::prelude::*;

    fn sample_set(seed: u64) -> DetectionSet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..4);
        let n = rng.gen_range(0..6);
        DetectionSet {
            classes: (0..k)
                .map(|id| PartClass {
                    id,
                    name: format!("c{id}"),
                })
                .collect(),
            detections: (0..n)
                .map(|id| {
                    let x = rng.gen_range(0.0..100.0);
                    let y = rng.gen_range(0.0..100.0);
                    let h = rng.gen_range(1.0..30.0);
                    Detection::new(
                        id,
                        x,
                        y,
                        h,
                        BoundingBox::centered(x, y, h),
                        (0..k).map(|_| rng.gen_range(0.01..0.99)).collect(),
                    )
                })
                .collect(),
            image_size: ImageSize {
                width: 640.0,
                height: 480.0,
            },
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"schema_version": 999, "persons": []}"#).unwrap();
        let got: Result<crate::model::PoseResult> = read_json(&path);
        assert!(got.is_err());
    }

    proptest! {
        /// DetectionSet -> JSON -> DetectionSet is the identity.
        #[test]
        fn detection_set_roundtrip(seed in 0u64..64) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("set.json");
            let set = sample_set(seed);
            write_json(&path, &set).unwrap();
            let back: DetectionSet = read_json(&path).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
