//! Binary checkpoint format (little-endian).
//!
//! ```text
//! "CTCH" | u32 version | u64 CRC-64/XZ of payload
//! payload: u32 metadata length | metadata JSON
//!          per tensor: u32 rank | u32 dims... | f32 values
//! ```
//!
//! Tensors follow [`ModelParams::tensors`] order. Values are stored in single
//! precision; loading widens them back to `f64`.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use super::{ModelDims, ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::text::{TokenMode, Vocabulary};

pub const MAGIC: &[u8; 4] = b"CTCH";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub input_mode: TokenMode,
    pub k: usize,
    pub truncate: Option<usize>,
    pub input_vocab: Vec<String>,
    pub output_vocab: Vec<String>,
    pub epoch: usize,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn input_vocab(&self) -> Result<Vocabulary> {
        Vocabulary::from_tokens(self.meta.input_vocab.iter().skip(4).cloned())
    }

    pub fn output_vocab(&self) -> Result<Vocabulary> {
        Vocabulary::from_tokens(self.meta.output_vocab.iter().skip(4).cloned())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.meta.dims != self.params.dims {
            return Err(Error::Format("metadata dims disagree with parameters".into()));
        }
        let meta = serde_json::to_vec(&self.meta)?;
        let mut payload = Vec::with_capacity(meta.len() + 4 * self.params.parameter_count() + 64);
        payload.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        payload.extend_from_slice(&meta);
        for tensor in self.params.tensors() {
            payload.extend_from_slice(&2u32.to_le_bytes());
            payload.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
            payload.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
            for &v in tensor.data() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&CRC64.checksum(&payload).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let expected = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let payload = &bytes[HEADER_LEN..];
        let found = CRC64.checksum(payload);
        if found != expected {
            return Err(Error::Checksum { expected, found });
        }

        let mut reader = Reader { buf: payload, pos: 0 };
        let meta_len = reader.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(reader.take(meta_len)?)
            .map_err(|e| Error::Format(format!("metadata: {e}")))?;
        let mut params = ModelParams::zeros(meta.dims)
            .map_err(|e| Error::Format(format!("metadata dims: {e}")))?;
        let names = params.tensor_names();
        for (name, tensor) in names.iter().zip(params.tensors_mut()) {
            let rank = reader.u32()?;
            if rank != 2 {
                return Err(Error::Format(format!("{name}: rank {rank}, expected 2")));
            }
            let rows = reader.u32()? as usize;
            let cols = reader.u32()? as usize;
            if (rows, cols) != tensor.shape() {
                return Err(Error::Format(format!(
                    "{name}: stored {rows}x{cols}, expected {}x{}",
                    tensor.rows(),
                    tensor.cols()
                )));
            }
            let raw = reader.take(rows * cols * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            *tensor = Matrix::from_vec(rows, cols, values)?;
        }
        if reader.pos != payload.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                payload.len() - reader.pos
            )));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

/// Rounds every parameter to the stored single precision.
pub fn quantize(params: &ModelParams) -> ModelParams {
    let mut out = params.clone();
    for t in out.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated payload".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
