//! Self-describing model checkpoints.
//!
//! A checkpoint is a JSON file holding the model structure, every named
//! parameter tensor, training provenance, and a SHA-256 checksum over all
//! of it. Loading verifies the checksum and every tensor's name and shape
//! against the rebuilt model, and round-trips parameter values bit for bit
//! (floats are written in shortest round-trip form and parsed exactly;
//! the latter needs serde_json's `float_roundtrip` feature).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nhmm_core::diffmath::Tensor;
use nhmm_core::model::{ModelConfig, NhmmModel};
use nhmm_core::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// One parameter tensor with its canonical name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Seed the training run started from.
    pub seed: u64,
    /// Epochs each stage actually ran.
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Parameters in the model's canonical order.
    pub params: Vec<NamedTensor>,
    /// SHA-256 over every other field; verified on load.
    pub checksum: String,
}

impl Checkpoint {
    pub fn from_model(
        model: &NhmmModel,
        seed: u64,
        stage1_epochs: usize,
        stage2_epochs: usize,
    ) -> Self {
        let params = model
            .params()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        let mut checkpoint = Checkpoint {
            format_version: FORMAT_VERSION,
            config: model.config().clone(),
            seed,
            stage1_epochs,
            stage2_epochs,
            params,
            checksum: String::new(),
        };
        checkpoint.checksum = checkpoint.compute_checksum();
        checkpoint
    }

    /// Digest over the content fields in a fixed byte encoding, so the
    /// checksum does not depend on JSON formatting.
    fn compute_checksum(&self) -> String {
        let mut digest = Sha256::new();
        digest.update(self.format_version.to_le_bytes());
        let config = serde_json::to_string(&self.config).expect("model config serializes");
        digest.update(config.as_bytes());
        digest.update(self.seed.to_le_bytes());
        digest.update((self.stage1_epochs as u64).to_le_bytes());
        digest.update((self.stage2_epochs as u64).to_le_bytes());
        for p in &self.params {
            digest.update(p.name.as_bytes());
            digest.update([0u8]);
            for &dim in &p.shape {
                digest.update((dim as u64).to_le_bytes());
            }
            for &v in &p.data {
                digest.update(v.to_le_bytes());
            }
        }
        digest.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read checkpoint `{}`: {e}", path.display())))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("checkpoint `{}`: {e}", path.display())))?;
        if checkpoint.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format version {} is not supported (this build reads {FORMAT_VERSION})",
                checkpoint.format_version
            )));
        }
        if checkpoint.checksum != checkpoint.compute_checksum() {
            return Err(Error::Data(
                "checkpoint checksum mismatch: the file is corrupted or was edited".into(),
            ));
        }
        Ok(checkpoint)
    }

    /// Rebuilds the model and installs the stored parameters.
    pub fn to_model(&self) -> Result<NhmmModel> {
        let mut model = NhmmModel::init(self.config.clone(), self.seed)?;
        let mut stored = self.params.iter();
        for (name, slot) in model.params_mut() {
            let p = stored.next().ok_or_else(|| {
                Error::Data(format!("checkpoint is missing parameter `{name}`"))
            })?;
            if p.name != name {
                return Err(Error::Data(format!(
                    "checkpoint parameter order mismatch: expected `{name}`, found `{}`",
                    p.name
                )));
            }
            if p.shape != slot.shape() {
                return Err(Error::Data(format!(
                    "checkpoint parameter `{name}` has shape {:?}, the model expects {:?}",
                    p.shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(p.shape.clone(), p.data.clone())?;
        }
        if let Some(extra) = stored.next() {
            return Err(Error::Data(format!(
                "checkpoint has unexpected extra parameter `{}`",
                extra.name
            )));
        }
        Ok(model)
    }
}

/// Checkpoint structure matches the given model shape. Convenience for
/// commands that need the model and its provenance together.
pub fn load_model(path: &Path) -> Result<(Checkpoint, NhmmModel)> {
    let checkpoint = Checkpoint::load(path)?;
    let model = checkpoint.to_model()?;
    Ok((checkpoint, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trained_like_model() -> NhmmModel {
        let config = ModelConfig { hidden: vec![4], ..ModelConfig::new(2, 3, 5) };
        NhmmModel::init(config, 42).unwrap()
    }

    #[test]
    fn save_and_load_round_trip_bit_for_bit() {
        let model = trained_like_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let saved = Checkpoint::from_model(&model, 42, 17, 5);
        saved.save(&path).unwrap();

        let (loaded, restored) = load_model(&path).unwrap();
        assert_eq!(loaded.seed, 42);
        assert_eq!(loaded.stage1_epochs, 17);
        assert_eq!(loaded.stage2_epochs, 5);
        assert_eq!(loaded.checksum, saved.checksum);
        for ((name_a, a), (name_b, b)) in model.params().iter().zip(restored.params().iter()) {
            assert_eq!(name_a, name_b);
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "parameter `{name_a}` changed across the round trip");
        }
    }

    #[test]
    fn edited_files_fail_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_model(&trained_like_model(), 1, 1, 1).save(&path).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        // Flip one parameter value without updating the checksum.
        let edited = text.replacen("\"seed\":1", "\"seed\":2", 1);
        assert_ne!(text, edited);
        fs::write(&path, edited).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("checksum mismatch"), "{err}");
    }

    #[test]
    fn future_format_versions_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut checkpoint = Checkpoint::from_model(&trained_like_model(), 1, 1, 1);
        checkpoint.format_version = FORMAT_VERSION + 1;
        checkpoint.checksum = checkpoint.compute_checksum();
        checkpoint.save(&path).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("format version"), "{err}");
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn mismatched_parameter_shapes_are_rejected() {
        let mut checkpoint = Checkpoint::from_model(&trained_like_model(), 1, 1, 1);
        checkpoint.params[0].shape = vec![1, 1];
        checkpoint.params[0].data = vec![0.0];
        let err = checkpoint.to_model().unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
    }
}
