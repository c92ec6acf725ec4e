//! KWSM checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "KWSM"  version:u16
//! config_len:u32  config (UTF-8 TOML, config_len bytes)
//! step:u64  tensor_count:u32
//! per tensor: name_len:u16 name ndim:u8 dims:u32×ndim
//! per tensor, in index order: f32 values
//! ```

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::network::Model;
use super::ModelError;
use crate::io_util::write_atomic;
use crate::nn::Tensor;

pub const MAGIC: [u8; 4] = *b"KWSM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Model configuration, parameter values and the training step they were
/// taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub tensors: Vec<NamedTensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ModelError::Format(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn from_model(model: &Model, step: u64) -> Self {
        Self {
            config: model.config().clone(),
            step,
            tensors: model
                .params()
                .iter()
                .map(|(_, name, t)| NamedTensor {
                    name: name.to_string(),
                    value: t.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model described by the embedded configuration.
    pub fn to_model(&self) -> Result<Model, ModelError> {
        let mut model = Model::new(&self.config)?;
        let expected: Vec<(&str, &[usize])> = model.params().iter().map(|(_, n, t)| (n, t.shape())).collect();
        let found: Vec<(&str, &[usize])> = self.tensors.iter().map(|t| (t.name.as_str(), t.value.shape())).collect();
        if expected != found {
            return Err(ModelError::ConfigMismatch(
                "checkpoint tensors do not match the layout its configuration implies".into(),
            ));
        }
        let mut params = model.params().clone();
        let ids: Vec<_> = params.ids().collect();
        for (id, t) in ids.into_iter().zip(&self.tensors) {
            *params.value_mut(id) = t.value.clone();
        }
        model.set_params(params)?;
        Ok(model)
    }

    /// Like [`Checkpoint::to_model`] but first requires the embedded
    /// configuration to equal `config`.
    pub fn to_model_with(&self, config: &ModelConfig) -> Result<Model, ModelError> {
        if &self.config != config {
            return Err(ModelError::ConfigMismatch(format!(
                "checkpoint was trained with a different configuration:\n{}",
                self.config.to_toml()
            )));
        }
        self.to_model()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.config.to_toml();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.value.ndim() as u8);
            for &d in t.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for &v in t.value.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelError::Format("not a KWSM checkpoint (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(ModelError::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| ModelError::Format("configuration block is not UTF-8".into()))?;
        let config: ModelConfig =
            toml::from_str(text).map_err(|e| ModelError::Format(format!("configuration block: {e}")))?;
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut index = Vec::new();
        for _ in 0..count {
            let n = r.u16()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            index.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in index {
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| ModelError::Format("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            tensors.push(NamedTensor {
                name,
                value: Tensor::new(&shape, data)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { config, step, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        write_atomic(path, &self.to_bytes()).map_err(|e| ModelError::Io(path.to_path_buf(), e))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|e| ModelError::Io(path.to_path_buf(), e))?;
        Self::from_bytes(&bytes)
    }
}
