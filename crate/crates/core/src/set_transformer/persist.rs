use std::path::Path;

use dvlnav_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::network::StWeights;
use super::{Normalization, StHyperParams};
use crate::{NavError, Result};

const FORMAT: &str = "dvlnav-st-weights";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsDocument {
    format: String,
    version: u32,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    hyper: StHyperParams,
    normalization: Normalization,
    tensors: Vec<NamedTensor>,
}

impl StWeights {
    /// Versioned JSON; floats are written in shortest round-trip form, so a
    /// reload is value-exact.
    pub fn to_json(&self) -> String {
        self.document(None)
    }

    /// Like [`to_json`](Self::to_json) with the hash of the configuration
    /// that produced the weights embedded in the document.
    pub fn to_json_tagged(&self, config_hash: &str) -> String {
        self.document(Some(config_hash))
    }

    fn document(&self, config_hash: Option<&str>) -> String {
        let doc = WeightsDocument {
            format: FORMAT.into(),
            version: VERSION,
            seed: self.seed,
            config_hash: config_hash.map(str::to_string),
            hyper: self.hyper.clone(),
            normalization: self.norm.clone(),
            tensors: self
                .tensors()
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WeightsDocument =
            serde_json::from_str(text).map_err(|e| NavError::Weights(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(NavError::Weights(format!("unknown format {:?}", doc.format)));
        }
        if doc.version != VERSION {
            return Err(NavError::Weights(format!("unsupported version {}", doc.version)));
        }
        let params = doc
            .tensors
            .into_iter()
            .map(|nt| {
                let t = Tensor::new(&nt.shape, nt.data)
                    .map_err(|e| NavError::Weights(format!("{}: {e}", nt.name)))?;
                Ok((nt.name, t))
            })
            .collect::<Result<Vec<_>>>()?;
        StWeights::from_parts(doc.hyper, doc.seed, doc.normalization, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| NavError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NavError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_exact() {
        let mut w = StWeights::init(&StHyperParams::toy(), 42).unwrap();
        w.norm.imu_mean[2] = -9.806650000000001;
        w.norm.delta_std[0] = 1.0 / 3.0;
        let back = StWeights::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        let tagged = w.to_json_tagged("abc123");
        assert!(tagged.contains("\"config_hash\": \"abc123\""));
        assert_eq!(StWeights::from_json(&tagged).unwrap(), w);
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = StWeights::init(&StHyperParams::toy(), 1).unwrap();
        w.save(&path).unwrap();
        assert_eq!(StWeights::load(&path).unwrap(), w);
        assert!(matches!(StWeights::load(&dir.path().join("missing.json")), Err(NavError::Io { .. })));
        let tampered = w.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(StWeights::from_json(&tampered).is_err());
        assert!(StWeights::from_json("{}").is_err());
    }
}
