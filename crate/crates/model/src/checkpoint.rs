//! Self-describing parameter container.
//!
//! Layout: the 8-byte magic `VAPCKPT1`, a little-endian u32 header length,
//! a JSON header (config, metadata, tensor table), then the tensor data as
//! little-endian floats at the offsets given in the table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::NdFloat;
use serde::{Deserialize, Serialize};

use crate::layers::cast;
use crate::{ModelConfig, ModelError, VapModel};

const MAGIC: &[u8; 8] = b"VAPCKPT1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epoch: usize,
    pub validation_loss: f64,
    pub train_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub model: VapModel<F>,
    pub metadata: TrainingMetadata,
}

fn dtype_of<F>() -> (&'static str, usize) {
    match std::mem::size_of::<F>() {
        4 => ("f32", 4),
        _ => ("f64", 8),
    }
}

impl<F: NdFloat> Checkpoint<F> {
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let (dtype, width) = dtype_of::<F>();
        let mut offset = 0;
        let mut entries = Vec::new();
        for (name, t) in self.model.tensors() {
            entries.push(TensorEntry { name, shape: t.shape().to_vec(), dtype: dtype.into(), offset });
            offset += t.len() * width;
        }
        let header = Header { config: self.model.config.clone(), metadata: self.metadata.clone(), tensors: entries };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in self.model.tensors() {
            for v in t.iter() {
                let x = v.to_f64().expect("float");
                if width == 4 {
                    w.write_all(&(x as f32).to_le_bytes())?;
                } else {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;

        let mut model = VapModel::<F>::new(header.config.clone(), 0)?;
        let expected = model.tensors().len();
        if header.tensors.len() != expected {
            return Err(bad(format!("{} tensors stored, config needs {expected}", header.tensors.len())));
        }
        for ((name, mut t), entry) in model.tensors_mut().into_iter().zip(&header.tensors) {
            if entry.name != name || entry.shape != t.shape() {
                return Err(bad(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
            let width = match entry.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => return Err(bad(format!("unknown dtype {other}"))),
            };
            let end = entry.offset + t.len() * width;
            let bytes = data.get(entry.offset..end).ok_or_else(|| bad(format!("tensor {name} truncated")))?;
            for (v, chunk) in t.iter_mut().zip(bytes.chunks_exact(width)) {
                let x = if width == 4 {
                    f32::from_le_bytes(chunk.try_into().unwrap()) as f64
                } else {
                    f64::from_le_bytes(chunk.try_into().unwrap())
                };
                *v = cast(x);
            }
        }
        Ok(Checkpoint { model, metadata: header.metadata })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }
}
