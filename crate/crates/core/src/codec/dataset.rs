use std::fs;
use std::path::Path;

use crate::kernel::{ByteReader, Matrix};
use crate::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"PSD1";

/// One `N_z × d_z` latent token matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample(Matrix);

impl LatentSample {
    pub fn new(tokens: Matrix) -> Result<Self> {
        if !tokens.is_finite() {
            return Err(Error::argument("latent sample contains non-finite values"));
        }
        Ok(LatentSample(tokens))
    }

    pub fn tokens(&self) -> &Matrix {
        &self.0
    }

    pub fn into_tokens(self) -> Matrix {
        self.0
    }
}

/// Fixed-shape collection of latent samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_tokens: usize,
    width: usize,
    samples: Vec<LatentSample>,
}

impl Dataset {
    pub fn new(n_tokens: usize, width: usize, samples: Vec<LatentSample>) -> Result<Self> {
        if let Some(bad) = samples.iter().position(|s| s.tokens().shape() != (n_tokens, width)) {
            return Err(Error::argument(format!(
                "sample {bad} has shape {:?}, expected ({n_tokens}, {width})",
                samples[bad].tokens().shape()
            )));
        }
        Ok(Dataset {
            n_tokens,
            width,
            samples,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LatentSample] {
        &self.samples
    }

    /// Index of the first held-out sample: the last 12.5% (rounded up) are held out.
    pub fn holdout_start(&self) -> usize {
        self.len() - self.len().div_ceil(8)
    }

    pub fn train_split(&self) -> &[LatentSample] {
        &self.samples[..self.holdout_start()]
    }

    pub fn holdout_split(&self) -> &[LatentSample] {
        &self.samples[self.holdout_start()..]
    }

    /// `PSD1`, then `n_samples`, `N_z`, `d_z` as little-endian u32, then the
    /// samples as little-endian f32 in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len() * self.n_tokens * self.width * 4);
        out.extend_from_slice(DATASET_MAGIC);
        for v in [self.len(), self.n_tokens, self.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for s in &self.samples {
            for &v in s.tokens().data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteReader::new(bytes);
        if cur.take(4)? != DATASET_MAGIC {
            return Err(Error::format("bad dataset magic"));
        }
        let n = cur.u32()? as usize;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let expected = n
            .checked_mul(rows)
            .and_then(|v| v.checked_mul(cols))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::format("dataset dimensions overflow"))?;
        let body = cur.take(expected)?;
        if !cur.is_empty() {
            return Err(Error::format("trailing bytes after dataset"));
        }
        let mut samples = Vec::with_capacity(n);
        for s in body.chunks_exact((rows * cols * 4).max(1)).take(n) {
            let data: Vec<f64> = s
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect();
            samples.push(LatentSample::new(Matrix::from_vec(rows, cols, data)?)?);
        }
        Dataset::new(rows, cols, samples)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
