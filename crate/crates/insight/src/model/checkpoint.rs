//! On-disk format for trained models. One container serves both
//! model families: a magic string and format version, a JSON header
//! carrying config, layout, normalization statistics, run metadata
//! and a tensor manifest, then every tensor as raw little-endian f64.
//! Weights survive a save/load round trip bit for bit.

use crate::data::NormStats;
use crate::model::fc::{FcEnsemble, FcEnsembleConfig};
use crate::model::surrogate::{Surrogate, SurrogateCheckpoint};
use crate::model::{InsightConfig, ModelError, SequenceLayout};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 12] = b"INSIGHT-CKPT";
const VERSION: u32 = 1;

/// Provenance of a training run, stored alongside the weights.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct RunMetadata {
    pub topology: String,
    pub technology: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    /// Hash of the experiment configuration that produced the run;
    /// empty when the run was driven directly from code.
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub tool_version: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Start of this tensor in the blob, counted in f64 slots.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    layout: SequenceLayout,
    stats: NormStats,
    metadata: RunMetadata,
    manifest: Vec<TensorEntry>,
}

/// Either model family, as read back from disk.
#[derive(Debug)]
pub enum CheckpointKind {
    Surrogate(Box<SurrogateCheckpoint>),
    Ensemble(Box<FcEnsemble>),
}

fn write_container(
    path: &Path,
    kind: &str,
    config: serde_json::Value,
    layout: &SequenceLayout,
    stats: &NormStats,
    metadata: &RunMetadata,
    tensors: Vec<(String, &[f64], Vec<usize>)>,
) -> Result<(), ModelError> {
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, data, shape) in &tensors {
        manifest.push(TensorEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
        });
        offset += data.len() as u64;
    }
    let header = Header {
        kind: kind.to_string(),
        config,
        layout: layout.clone(),
        stats: stats.clone(),
        metadata: metadata.clone(),
        manifest,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| ModelError::Format(format!("header encode: {e}")))?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(json.len() as u64).to_le_bytes())?;
    file.write_all(&json)?;
    for (_, data, _) in &tensors {
        for v in *data {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

fn read_container(path: &Path) -> Result<(Header, Vec<f64>), ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 12 {
        return Err(ModelError::Format("file too short for header".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(ModelError::Format("bad magic string".into()));
    }
    let mut at = MAGIC.len();
    let version = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Format(format!(
            "format version {version}, expected {VERSION}"
        )));
    }
    at += 4;
    let json_len = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    at += 8;
    if bytes.len() < at + json_len {
        return Err(ModelError::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[at..at + json_len])
        .map_err(|e| ModelError::Format(format!("header decode: {e}")))?;
    at += json_len;
    let blob_bytes = &bytes[at..];
    if blob_bytes.len() % 8 != 0 {
        return Err(ModelError::Format("weight blob is not whole f64s".into()));
    }
    let blob: Vec<f64> = blob_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let expected: u64 = header
        .manifest
        .iter()
        .map(|e| e.shape.iter().product::<usize>() as u64)
        .sum();
    if blob.len() as u64 != expected {
        return Err(ModelError::Format(format!(
            "blob holds {} values, manifest expects {expected}",
            blob.len()
        )));
    }
    Ok((header, blob))
}

/// Copies manifest entries into named parameter slots, insisting on
/// an exact one-to-one match of names and shapes.
fn fill_slots(
    slots: Vec<(String, &mut crate::numerics::Parameter)>,
    manifest: &[TensorEntry],
    blob: &[f64],
) -> Result<(), ModelError> {
    if slots.len() != manifest.len() {
        return Err(ModelError::Format(format!(
            "{} tensors in file, model has {} parameter blocks",
            manifest.len(),
            slots.len()
        )));
    }
    for (name, param) in slots {
        let entry = manifest
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| ModelError::Format(format!("missing tensor {name}")))?;
        if entry.shape != param.value.shape() {
            return Err(ModelError::Format(format!(
                "tensor {name} has shape {:?}, model expects {:?}",
                entry.shape,
                param.value.shape()
            )));
        }
        let start = entry.offset as usize;
        let end = start + param.value.len();
        if end > blob.len() {
            return Err(ModelError::Format(format!(
                "tensor {name} runs past the end of the blob"
            )));
        }
        param.value.data_mut().copy_from_slice(&blob[start..end]);
        param.zero_grad();
    }
    Ok(())
}

impl SurrogateCheckpoint {
    pub fn save(&mut self, path: &Path) -> Result<(), ModelError> {
        let config = serde_json::to_value(&self.model.config)
            .map_err(|e| ModelError::Format(format!("config encode: {e}")))?;
        let layout = self.model.layout.clone();
        let tensors: Vec<(String, &[f64], Vec<usize>)> = self
            .model
            .param_slots()
            .into_iter()
            .map(|(name, p)| {
                let p: &crate::numerics::Parameter = p;
                (name, p.value.data(), p.value.shape().to_vec())
            })
            .collect();
        write_container(
            path,
            "surrogate",
            config,
            &layout,
            &self.stats,
            &self.metadata,
            tensors,
        )
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (header, blob) = read_container(path)?;
        if header.kind != "surrogate" {
            return Err(ModelError::Format(format!(
                "checkpoint holds a {}, not a surrogate",
                header.kind
            )));
        }
        let config: InsightConfig = serde_json::from_value(header.config)
            .map_err(|e| ModelError::Format(format!("config decode: {e}")))?;
        let mut model = Surrogate::new(config, header.layout, 0)?;
        fill_slots(model.param_slots(), &header.manifest, &blob)?;
        Ok(Self {
            model,
            stats: header.stats,
            metadata: header.metadata,
        })
    }
}

impl FcEnsemble {
    pub fn save(&mut self, path: &Path) -> Result<(), ModelError> {
        let config = serde_json::to_value(&self.config)
            .map_err(|e| ModelError::Format(format!("config encode: {e}")))?;
        let layout = self.layout.clone();
        let stats = self.stats.clone();
        let metadata = self.metadata.clone();
        let tensors: Vec<(String, &[f64], Vec<usize>)> = self
            .param_slots()
            .into_iter()
            .map(|(name, p)| {
                let p: &crate::numerics::Parameter = p;
                (name, p.value.data(), p.value.shape().to_vec())
            })
            .collect();
        write_container(
            path,
            "fc_ensemble",
            config,
            &layout,
            &stats,
            &metadata,
            tensors,
        )
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let (header, blob) = read_container(path)?;
        if header.kind != "fc_ensemble" {
            return Err(ModelError::Format(format!(
                "checkpoint holds a {}, not an fc_ensemble",
                header.kind
            )));
        }
        let config: FcEnsembleConfig = serde_json::from_value(header.config)
            .map_err(|e| ModelError::Format(format!("config decode: {e}")))?;
        let members = FcEnsemble::init_members(&config, &header.layout, 0);
        let mut ensemble = Self {
            config,
            layout: header.layout,
            stats: header.stats,
            metadata: header.metadata,
            members,
        };
        fill_slots(ensemble.param_slots(), &header.manifest, &blob)?;
        Ok(ensemble)
    }
}

/// Opens a checkpoint of either kind, dispatching on the header.
pub fn load_any(path: &Path) -> Result<CheckpointKind, ModelError> {
    let (header, _) = read_container(path)?;
    match header.kind.as_str() {
        "surrogate" => Ok(CheckpointKind::Surrogate(Box::new(
            SurrogateCheckpoint::load(path)?,
        ))),
        "fc_ensemble" => Ok(CheckpointKind::Ensemble(Box::new(FcEnsemble::load(path)?))),
        other => Err(ModelError::Format(format!("unknown checkpoint kind {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{technology, topology};
    use crate::data::{build_dataset, split};
    use crate::numerics::Route;

    fn small_surrogate() -> SurrogateCheckpoint {
        let topo = topology("tia2").unwrap();
        let tech = technology("synth130").unwrap();
        let data = build_dataset(&topo, &tech, 48, 101).unwrap();
        let (train, _) = split(&data, 48, 0, 101).unwrap();
        let stats = NormStats::fit(&train).unwrap();
        let config = InsightConfig {
            d_model: 16,
            heads: 2,
            layers: 2,
            ff_hidden: 32,
            uncertainty_heads: 3,
            ..InsightConfig::default()
        };
        let layout = SequenceLayout::from_topology(&topo);
        let model = Surrogate::new(config, layout, 301).unwrap();
        SurrogateCheckpoint {
            model,
            stats,
            metadata: RunMetadata {
                topology: "tia2".into(),
                technology: "synth130".into(),
                seed: 301,
                epochs: 0,
                final_train_loss: 0.5,
                final_val_loss: 0.6,
                ..RunMetadata::default()
            },
        }
    }

    #[test]
    fn surrogate_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let mut ckpt = small_surrogate();
        ckpt.save(&path).unwrap();
        let mut loaded = SurrogateCheckpoint::load(&path).unwrap();
        assert_eq!(loaded.metadata, ckpt.metadata);
        assert_eq!(loaded.stats.metric_log, ckpt.stats.metric_log);
        let a = ckpt.model.param_slots();
        let b = loaded.model.param_slots();
        for ((an, ap), (bn, bp)) in a.into_iter().zip(b) {
            assert_eq!(an, bn);
            for (x, y) in ap.value.data().iter().zip(bp.value.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "weight drift in {an}");
            }
        }
        let topo = topology("tia2").unwrap();
        let design = topo.midpoint().values;
        let before = ckpt.rollout(&design, &[]).unwrap();
        let after = loaded.rollout(&design, &[]).unwrap();
        for (x, y) in before.means.iter().zip(&after.means) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn ensemble_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.ckpt");
        let topo = topology("level_shifter").unwrap();
        let tech = technology("synth180").unwrap();
        let data = build_dataset(&topo, &tech, 48, 77).unwrap();
        let (train, _) = split(&data, 48, 0, 77).unwrap();
        let config = FcEnsembleConfig {
            members: 2,
            hidden_layers: 2,
            hidden_dim: 12,
        };
        let layout = SequenceLayout::from_topology(&topo);
        let members = FcEnsemble::init_members(&config, &layout, 55);
        let mut ensemble = FcEnsemble {
            config,
            layout,
            stats: NormStats::fit(&train).unwrap(),
            metadata: RunMetadata::default(),
            members,
        };
        ensemble.save(&path).unwrap();
        let loaded = FcEnsemble::load(&path).unwrap();
        let design = topo.midpoint().values;
        let (a_mean, a_std) = ensemble.predict(&design).unwrap();
        let (b_mean, b_std) = loaded.predict(&design).unwrap();
        for (x, y) in a_mean.iter().zip(&b_mean) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a_std.iter().zip(&b_std) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn load_any_dispatches_on_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        small_surrogate().save(&path).unwrap();
        match load_any(&path).unwrap() {
            CheckpointKind::Surrogate(c) => {
                assert_eq!(c.metadata.topology, "tia2");
            }
            CheckpointKind::Ensemble(_) => panic!("surrogate read back as ensemble"),
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        small_surrogate().save(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let empty = dir.path().join("empty.ckpt");
        std::fs::write(&empty, b"").unwrap();
        assert!(SurrogateCheckpoint::load(&empty).is_err());

        let bad_magic = dir.path().join("magic.ckpt");
        let mut bytes = good.clone();
        bytes[0] = b'X';
        std::fs::write(&bad_magic, &bytes).unwrap();
        assert!(matches!(
            SurrogateCheckpoint::load(&bad_magic).unwrap_err(),
            ModelError::Format(_)
        ));

        let bad_version = dir.path().join("version.ckpt");
        let mut bytes = good.clone();
        bytes[12] = 9;
        std::fs::write(&bad_version, &bytes).unwrap();
        assert!(SurrogateCheckpoint::load(&bad_version).is_err());

        let truncated = dir.path().join("trunc.ckpt");
        std::fs::write(&truncated, &good[..good.len() - 100]).unwrap();
        assert!(SurrogateCheckpoint::load(&truncated).is_err());
    }

    #[test]
    fn wrong_kind_is_refused_by_typed_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        small_surrogate().save(&path).unwrap();
        assert!(FcEnsemble::load(&path).is_err());
    }

    #[test]
    fn fast_route_forward_matches_after_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let mut ckpt = small_surrogate();
        ckpt.save(&path).unwrap();
        let loaded = SurrogateCheckpoint::load(&path).unwrap();
        let topo = topology("tia2").unwrap();
        let designs = vec![topo.midpoint().values; 3];
        let a = ckpt.rollout_batch(&designs, &[], Route::Fast).unwrap();
        let b = loaded.rollout_batch(&designs, &[], Route::Fast).unwrap();
        for (ra, rb) in a.reports.iter().zip(&b.reports) {
            for (x, y) in ra.means.iter().zip(&rb.means) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
