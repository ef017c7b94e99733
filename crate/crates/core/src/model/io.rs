//! Model persistence: the named-tensor container plus a JSON config
//! sidecar, bound together by a config digest in the header.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{read_named_tensors, write_named_tensors};

/// SHA-256 over the canonical JSON form of the config.
pub fn config_digest(config: &ModelConfig) -> [u8; 32] {
    let json = serde_json::to_vec(config).expect("config serializes");
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(&json));
    out
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes `<path>` (tensor container) and `<path>.json` (config).
pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let digest = config_digest(&model.config);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_named_tensors(BufWriter::new(file), &digest, model.params.entries())?;
    let json = serde_json::to_string_pretty(&model.config)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(sidecar_path(path), json).map_err(|e| Error::io(sidecar_path(path), e))?;
    Ok(())
}

/// Loads `<path>` and validates the stored digest against the sidecar
/// config; errors on any mismatch or malformed record.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let config_json = std::fs::read_to_string(sidecar_path(path))
        .map_err(|e| Error::io(sidecar_path(path), e))?;
    let config: ModelConfig =
        serde_json::from_str(&config_json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    config.validate()?;

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, tensors) = read_named_tensors(std::io::BufReader::new(file))?;
    let expected = config_digest(&config);
    if header.config_digest != expected {
        return Err(Error::Checkpoint(
            "config digest mismatch: checkpoint was written for a different model config".into(),
        ));
    }
    Model::from_entries(config, tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn digest_depends_on_config() {
        let a = config_digest(&ModelConfig::toy(true));
        let b = config_digest(&ModelConfig::toy(false));
        let c = config_digest(&ModelConfig { n_res_per_group: 3, ..ModelConfig::toy(true) });
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, config_digest(&ModelConfig::toy(true)));
    }

    #[test]
    fn save_load_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.qgcn");
        let model: Model<f32> = Model::init(ModelConfig::toy(false), 77).unwrap();
        save_checkpoint(&model, &path).unwrap();

        // header magic at offset 0
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"QGCN");

        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        for ((na, ta), (nb, tb)) in model.params.entries().iter().zip(loaded.params.entries()) {
            assert_eq!(na, nb);
            assert!(ta.bit_eq(tb), "{} changed across round trip", na);
        }
    }

    #[test]
    fn tampered_config_is_digest_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.qgcn");
        let model: Model<f32> = Model::init(ModelConfig::toy(false), 77).unwrap();
        save_checkpoint(&model, &path).unwrap();

        // bump n_res_per_group in the sidecar only
        let sidecar = sidecar_path(&path);
        let tampered = std::fs::read_to_string(&sidecar)
            .unwrap()
            .replace("\"n_res_per_group\": 2", "\"n_res_per_group\": 3");
        std::fs::write(&sidecar, tampered).unwrap();

        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("digest mismatch"), "{}", err);
    }

    #[test]
    fn corrupt_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.qgcn");
        let model: Model<f32> = Model::init(ModelConfig::toy(false), 1).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 7);
        std::fs::write(&path, bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
