use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::kernel::Matrix;
use crate::{Error, Result};

/// Element type of a payload's `data` field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Uint8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Uint8 => 1,
        }
    }
}

/// One transmitted block of representation rows.
///
/// `level` is the highest level whose rows are included. Field order is the
/// wire order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkPayload {
    pub session_id: String,
    pub level: usize,
    pub dtype: Dtype,
    pub shape: [usize; 2],
    pub checksum: String,
    pub data: String,
}

impl ChunkPayload {
    /// Packs `rows` as little-endian f32.
    pub fn from_matrix(session_id: &str, level: usize, rows: &Matrix, checksum: &str) -> Result<Self> {
        if rows.rows() == 0 || rows.cols() == 0 {
            return Err(Error::Serialization("chunk is empty".into()));
        }
        if !rows.is_finite() {
            return Err(Error::Serialization("chunk contains non-finite values".into()));
        }
        let mut raw = Vec::with_capacity(rows.data().len() * 4);
        for &v in rows.data() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::Serialization(format!("value {v} overflows float32")));
            }
            raw.extend_from_slice(&f.to_le_bytes());
        }
        Ok(ChunkPayload {
            session_id: session_id.to_owned(),
            level,
            dtype: Dtype::Float32,
            shape: [rows.rows(), rows.cols()],
            checksum: checksum.to_owned(),
            data: STANDARD.encode(raw),
        })
    }

    /// Raw byte body such as an `H × (W·C)` image.
    pub fn from_bytes_u8(session_id: &str, level: usize, shape: [usize; 2], body: &[u8], checksum: &str) -> Result<Self> {
        if body.is_empty() || body.len() != shape[0] * shape[1] {
            return Err(Error::Serialization(format!(
                "body of {} bytes does not match shape {shape:?}",
                body.len()
            )));
        }
        Ok(ChunkPayload {
            session_id: session_id.to_owned(),
            level,
            dtype: Dtype::Uint8,
            shape,
            checksum: checksum.to_owned(),
            data: STANDARD.encode(body),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payload serialization is infallible")
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let p: ChunkPayload = serde_json::from_slice(bytes)
            .map_err(|e| Error::Serialization(format!("bad payload: {e}")))?;
        let raw = p.raw()?;
        if raw.len() != p.shape[0] * p.shape[1] * p.dtype.size() {
            return Err(Error::Serialization(format!(
                "data holds {} bytes, shape {:?} of {:?} needs {}",
                raw.len(),
                p.shape,
                p.dtype,
                p.shape[0] * p.shape[1] * p.dtype.size()
            )));
        }
        Ok(p)
    }

    /// Decoded `data` bytes.
    pub fn raw(&self) -> Result<Vec<u8>> {
        STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Serialization(format!("bad base64: {e}")))
    }

    /// Number of raw data bytes (before base64).
    pub fn raw_len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.dtype.size()
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.dtype != Dtype::Float32 {
            return Err(Error::Serialization("payload is not float32".into()));
        }
        let raw = self.raw()?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        if data.len() != self.shape[0] * self.shape[1] {
            return Err(Error::Serialization("data length does not match shape".into()));
        }
        Matrix::from_vec(self.shape[0], self.shape[1], data)
    }
}

/// Serialized payload bytes for `rows`.
pub fn serialize_payload(session_id: &str, level: usize, rows: &Matrix, checksum: &str) -> Result<Vec<u8>> {
    Ok(ChunkPayload::from_matrix(session_id, level, rows, checksum)?.to_bytes())
}

/// What a matrix looks like after the wire: each entry rounded to f32 once.
pub fn wire_round(m: &Matrix) -> Matrix {
    m.map(|v| f64::from(v as f32))
}
