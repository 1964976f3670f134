//! Binary model file: magic, version, scalar width, hash_dim, threshold,
//! class weights (reject, accept), bias, then `hash_dim` weights. Integers
//! and floats are little-endian; floats use the model's own width.

use std::io;
use std::path::Path;

use super::linear::{check_hash_dim, ClassWeights, LinearCriticModel};
use super::CriticError;
use crate::jsonl::write_atomic;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 8] = b"DRRLCRIT";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model<F: Scalar>(model: &LinearCriticModel<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + (model.weights.len() + 4) * F::BYTES);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(F::BYTES as u8);
    out.extend_from_slice(&(model.hash_dim as u64).to_le_bytes());
    model.threshold.write_le(&mut out);
    model.class_weights.reject.write_le(&mut out);
    model.class_weights.accept.write_le(&mut out);
    model.bias.write_le(&mut out);
    for w in &model.weights {
        w.write_le(&mut out);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CriticError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CriticError::Io {
                path: String::new(),
                source: io::Error::new(io::ErrorKind::UnexpectedEof, "model file truncated"),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn scalar<F: Scalar>(&mut self) -> Result<F, CriticError> {
        Ok(F::read_le(self.take(F::BYTES)?))
    }
}

pub fn decode_model<F: Scalar>(bytes: &[u8]) -> Result<LinearCriticModel<F>, CriticError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c
        .take(MODEL_MAGIC.len())
        .map_err(|_| CriticError::VersionMismatch("missing magic".into()))?;
    if magic != MODEL_MAGIC {
        return Err(CriticError::VersionMismatch("bad magic".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(CriticError::VersionMismatch(format!(
            "file version {version}, expected {MODEL_VERSION}"
        )));
    }
    let width = c.take(1)?[0] as usize;
    if width != F::BYTES {
        return Err(CriticError::VersionMismatch(format!(
            "file stores {width}-byte scalars, model type uses {}",
            F::BYTES
        )));
    }
    let hash_dim = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let hash_dim = usize::try_from(hash_dim)
        .map_err(|_| CriticError::VersionMismatch(format!("hash_dim {hash_dim} too large")))?;
    check_hash_dim(hash_dim)?;
    let threshold = c.scalar::<F>()?;
    let reject = c.scalar::<F>()?;
    let accept = c.scalar::<F>()?;
    let bias = c.scalar::<F>()?;
    let body = c.take(
        hash_dim
            .checked_mul(F::BYTES)
            .ok_or(CriticError::InvalidHashDim(hash_dim))?,
    )?;
    if c.pos != bytes.len() {
        return Err(CriticError::VersionMismatch(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    let weights = body.chunks_exact(F::BYTES).map(F::read_le).collect();
    Ok(LinearCriticModel {
        weights,
        bias,
        hash_dim,
        threshold,
        class_weights: ClassWeights::new(reject, accept)?,
    })
}

pub fn save_model<F: Scalar>(
    model: &LinearCriticModel<F>,
    path: impl AsRef<Path>,
) -> Result<(), CriticError> {
    let path = path.as_ref();
    write_atomic(path, &encode_model(model)).map_err(|source| CriticError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model<F: Scalar>(path: impl AsRef<Path>) -> Result<LinearCriticModel<F>, CriticError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CriticError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_model(&bytes).map_err(|e| match e {
        CriticError::Io { source, .. } => CriticError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}
