//! Single-file model archive: safetensors payload plus string metadata
//! (format version, model kind, JSON config, class vocabulary).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::tensor::{Dtype as StDtype, SafeTensors, TensorView};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub version: u32,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
    pub tensors: BTreeMap<String, Tensor>,
}

/// The metadata map is hashed, so its key order changes between processes.
/// Rewrites the JSON header with sorted keys so equal models give equal bytes.
fn canonical_header(bytes: Vec<u8>) -> Result<Vec<u8>> {
    let bad = || Error::Checkpoint("truncated safetensors header".into());
    let len = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().expect("8 bytes")) as usize;
    let header = bytes.get(8..8 + len).ok_or_else(bad)?;
    let value: serde_json::Value = serde_json::from_slice(header)?;
    let mut text = serde_json::to_vec(&value)?;
    // Data offsets are relative to the header end, so only alignment matters.
    while text.len() % 8 != 0 {
        text.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + text.len() + bytes.len() - 8 - len);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&bytes[8 + len..]);
    Ok(out)
}

impl Checkpoint {
    pub fn new<C: Serialize>(kind: &str, config: &C, vocab: Vec<String>, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            version: CHECKPOINT_VERSION,
            config: serde_json::to_value(config)?,
            vocab,
            tensors,
        })
    }

    pub fn config<C: DeserializeOwned>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut raw: Vec<(String, StDtype, Vec<usize>, Vec<u8>)> = Vec::new();
        for (name, t) in &self.tensors {
            let (dtype, bytes) = match t.dtype() {
                DType::F64 => (
                    StDtype::F64,
                    t.flatten_all()?.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
                ),
                _ => (
                    StDtype::F32,
                    t.to_dtype(DType::F32)?
                        .flatten_all()?
                        .to_vec1::<f32>()?
                        .iter()
                        .flat_map(|v| v.to_le_bytes())
                        .collect(),
                ),
            };
            raw.push((name.clone(), dtype, t.dims().to_vec(), bytes));
        }
        let views: Vec<(String, TensorView<'_>)> = raw
            .iter()
            .map(|(n, d, s, b)| {
                TensorView::new(*d, s.clone(), b)
                    .map(|v| (n.clone(), v))
                    .map_err(|e| Error::Checkpoint(e.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut meta = HashMap::new();
        meta.insert("format_version".to_string(), self.version.to_string());
        meta.insert("kind".to_string(), self.kind.clone());
        meta.insert("config".to_string(), serde_json::to_string(&self.config)?);
        meta.insert("vocab".to_string(), serde_json::to_string(&self.vocab)?);
        let bytes = safetensors::serialize(views, Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))?;
        canonical_header(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let meta = header
            .metadata()
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("missing metadata".into()))?;
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing metadata field {k}")))
        };
        let version: u32 = get("format_version")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad format_version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let kind = get("kind")?.clone();
        let config = serde_json::from_str(get("config")?)?;
        let vocab = serde_json::from_str(get("vocab")?)?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            let shape = view.shape().to_vec();
            let data = view.data();
            let t = match view.dtype() {
                StDtype::F64 => {
                    let v: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    Tensor::from_vec(v, shape, &Device::Cpu)?
                }
                StDtype::F32 => {
                    let v: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                    Tensor::from_vec(v, shape, &Device::Cpu)?
                }
                other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
            };
            tensors.insert(name, t);
        }
        Ok(Self {
            kind,
            version,
            config,
            vocab,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_everything() {
        let mut tensors = BTreeMap::new();
        tensors.insert("a.weight".to_string(), Tensor::new(&[[1.5f32, -2.0], [0.25, 3.0]], &Device::Cpu).unwrap());
        tensors.insert("b".to_string(), Tensor::new(&[0.1f64, 0.2, 0.3], &Device::Cpu).unwrap());
        let ck = Checkpoint::new("demo", &serde_json::json!({"width": 4}), vec!["x".into(), "y".into()], tensors).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.kind, "demo");
        assert_eq!(back.version, CHECKPOINT_VERSION);
        assert_eq!(back.vocab, vec!["x", "y"]);
        assert_eq!(back.config["width"], 4);
        assert_eq!(
            back.tensors["a.weight"].to_vec2::<f32>().unwrap(),
            vec![vec![1.5, -2.0], vec![0.25, 3.0]]
        );
        assert_eq!(back.tensors["b"].to_vec1::<f64>().unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let ck = Checkpoint::new("a", &(), vec![], BTreeMap::new()).unwrap();
        assert!(ck.expect_kind("b").is_err());
    }

    #[test]
    fn bytes_are_stable_across_serialisations() {
        let mut tensors = BTreeMap::new();
        tensors.insert("w".to_string(), Tensor::new(&[1.0f32, 2.0, 3.0], &Device::Cpu).unwrap());
        let ck = Checkpoint::new("demo", &serde_json::json!({"k": 1}), vec!["v".into()], tensors).unwrap();
        let first = ck.to_bytes().unwrap();
        for _ in 0..8 {
            assert_eq!(ck.to_bytes().unwrap(), first);
        }
        assert_eq!(Checkpoint::from_bytes(&first).unwrap().tensors["w"].to_vec1::<f32>().unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
