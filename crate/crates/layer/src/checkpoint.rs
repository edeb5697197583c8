//! Model checkpoints.
//!
//! Layout: `LCKP`, u32 version, u32 header length `h`, `h` bytes of UTF-8
//! JSON ([`CheckpointHeader`]), then little-endian f32 values: channel
//! scales, classifier parameters, weight-generator parameters.

use std::path::Path;

use layer_core::aggregate::Scenario;
use layer_core::carn::{AirWeightGenerator, CarnModel, TrainConfig};
use layer_core::cohort::ModalitySet;
use layer_core::scorer::{MlpArch, TrainableScorer};
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const ARCHITECTURE: &str = "pooled-mlp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub architecture: String,
    pub arch: MlpArch,
    pub modality: ModalitySet,
    pub air_grid: Option<usize>,
    pub scale_count: usize,
    pub classifier_params: usize,
    pub air_params: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub training: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: CarnModel,
}

impl Checkpoint {
    pub fn new(model: CarnModel, modality: ModalitySet, scenario: Scenario, training: TrainConfig) -> Self {
        let header = CheckpointHeader {
            architecture: ARCHITECTURE.to_string(),
            arch: model.arch(),
            modality,
            air_grid: model.air().map(|a| a.grid()),
            scale_count: model.classifier().scales().len(),
            classifier_params: model.classifier().params().len(),
            air_params: model.air().map_or(0, |a| a.params().len()),
            seed: training.seed,
            scenario,
            training,
        };
        Checkpoint { header, model }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let m = &self.model;
        let air: &[f32] = m.air().map_or(&[], |a| a.params());
        for x in m.classifier().scales().iter().chain(m.classifier().params()).chain(air) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .ok_or_else(|| Error::format(path, bytes.len(), "truncated header"))
        };
        if bytes.get(..4) != Some(&CHECKPOINT_MAGIC[..]) {
            return Err(Error::format(path, 0, "bad magic, expected LCKP"));
        }
        let version = word(4)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(path, 4, format!("unsupported version {version}")));
        }
        let hlen = word(8)? as usize;
        let hbytes = bytes.get(12..12 + hlen).ok_or_else(|| Error::format(path, bytes.len(), "truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(hbytes).map_err(|e| Error::format(path, 12, format!("header: {e}")))?;
        if header.architecture != ARCHITECTURE {
            return Err(Error::format(path, 12, format!("unknown architecture '{}'", header.architecture)));
        }
        let start = 12 + hlen;
        let counts = [header.scale_count, header.classifier_params, header.air_params];
        let expected = 4 * counts.iter().sum::<usize>();
        let got = bytes.len() - start;
        if got != expected {
            let at = if got < expected { bytes.len() } else { start + expected };
            return Err(Error::format(path, at, format!("parameter blob holds {got} bytes, header declares {expected}")));
        }
        let mut values = bytes[start..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut take = |n: usize| -> Vec<f32> { values.by_ref().take(n).collect() };
        let scales = take(counts[0]);
        let params = take(counts[1]);
        let air = take(counts[2]);
        let classifier = TrainableScorer::from_parts(header.arch, scales, params)?;
        let air = match header.air_grid {
            Some(g) => Some(AirWeightGenerator::from_params(header.arch.dims, header.arch.channels, g, air)?),
            None if air.is_empty() => None,
            None => return Err(Error::format(path, start, "weight-generator parameters without a grid size")),
        };
        let model = CarnModel::from_parts(classifier, air)?;
        Ok(Checkpoint { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use layer_core::volume::Dims;

    fn model(air: bool) -> CarnModel {
        let arch = MlpArch { pool: 2, hidden: 3, ..MlpArch::new(Dims::new(4, 4, 2), 2) };
        let mut m = CarnModel::new(arch, air.then_some(2), 5).unwrap();
        m.classifier_mut().set_scales(vec![0.5, 1.25]).unwrap();
        if let Some(a) = m.air_mut() {
            a.with_params_mut(|p| p.iter_mut().enumerate().for_each(|(i, x)| *x = i as f32 * 0.1 - 0.3));
        }
        m
    }

    #[test]
    fn round_trip_is_exact() {
        for air in [false, true] {
            let c = Checkpoint::new(model(air), ModalitySet::Both, Scenario::SideMp, TrainConfig::default());
            let bytes = c.encode();
            let back = Checkpoint::decode(&bytes, Path::new("m")).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.encode(), bytes);
        }
    }

    #[test]
    fn damaged_checkpoints_are_rejected() {
        let c = Checkpoint::new(model(true), ModalitySet::Both, Scenario::SideMp, TrainConfig::default());
        let bytes = c.encode();
        let p = Path::new("m");
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 2], p), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[1] = 0;
        assert!(matches!(Checkpoint::decode(&bad, p), Err(Error::Format { offset: 0, .. })));
        let mut long = bytes;
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(Checkpoint::decode(&long, p), Err(Error::Format { .. })));
    }
}
