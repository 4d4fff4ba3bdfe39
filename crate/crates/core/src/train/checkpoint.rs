//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "INKBCKPT"
//! version  u32 LE
//! header   u32 LE length + UTF-8 key=value lines (step, moments, model config)
//! count    u32 LE number of tensors
//! tensor   u32 LE name length, name, u32 LE rank, rank × u64 LE dims,
//!          product(dims) × f32 LE
//! ```
//!
//! Optimizer moments, when present, are stored as extra tensors named
//! `adam.m.<param>` and `adam.v.<param>` after the parameters.

use std::path::Path;

use super::AdamMoments;
use crate::error::{Error, Result};
use crate::kv;
use crate::model::{ModelConfig, ParamStore};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"INKBCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ParamStore<f32>,
    pub moments: Option<AdamMoments<f32>>,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = format!(
            "step={}\nmoments={}\n{}",
            self.step,
            u8::from(self.moments.is_some()),
            self.params.config.to_kv()
        );
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());

        let mut tensors: Vec<(String, &Tensor<f32>)> = self.params.tensors();
        if let Some(mom) = &self.moments {
            tensors.extend(mom.m.tensors().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
            tensors.extend(mom.v.tensors().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header =
            std::str::from_utf8(r.take(header_len)?).map_err(|_| Error::format("checkpoint", "header is not UTF-8"))?;
        let mut step = None;
        let mut has_moments = None;
        let mut model_lines = String::new();
        for (key, value) in kv::parse(header)? {
            match key.as_str() {
                "step" => step = Some(kv::value::<u64>(&key, &value)?),
                "moments" => has_moments = Some(kv::value::<u8>(&key, &value)? == 1),
                _ => model_lines.push_str(&format!("{key}={value}\n")),
            }
        }
        let (Some(step), Some(has_moments)) = (step, has_moments) else {
            return Err(Error::format("checkpoint", "header lacks step or moments"));
        };
        let config = ModelConfig::from_kv(&model_lines)?;

        let mut params = ParamStore::<f32>::zeros(&config);
        let mut moments = has_moments.then(|| AdamMoments::zeros_like(&params));
        let count = r.u32()? as usize;
        let mut slots: Vec<(String, &mut Tensor<f32>)> = params.tensors_mut();
        if let Some(mom) = moments.as_mut() {
            slots.extend(mom.m.tensors_mut().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
            slots.extend(mom.v.tensors_mut().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
        }
        if count != slots.len() {
            return Err(Error::format(
                "checkpoint",
                format!("expected {} tensors, found {count}", slots.len()),
            ));
        }
        for (want_name, slot) in slots {
            let name_len = r.u32()? as usize;
            let name = r.take(name_len)?;
            if name != want_name.as_bytes() {
                return Err(Error::format(
                    "checkpoint",
                    format!("expected tensor {want_name}, found {}", String::from_utf8_lossy(name)),
                ));
            }
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            if shape != slot.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!("{want_name}: shape {shape:?} does not match config {:?}", slot.shape()),
                ));
            }
            let payload = r.take(slot.len() * 4)?;
            for (x, c) in slot.data_mut().iter_mut().zip(payload.chunks_exact(4)) {
                *x = f32::from_le_bytes(c.try_into().unwrap());
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint { step, params, moments })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn file_name(step: u64) -> String {
        format!("step-{step:08}.ckpt")
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
