use std::collections::BTreeMap;

use rand::Rng;

use super::Matrix;
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"PSC1";

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameters with gradient accumulators and Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    index: BTreeMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        let (r, c) = value.shape();
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.grads.push(Matrix::zeros(r, c));
        self.first_moment.push(Matrix::zeros(r, c));
        self.second_moment.push(Matrix::zeros(r, c));
        Ok(id)
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn add_fan_in_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.add_uniform(name, rows, cols, bound, rng)
    }

    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
        self.add(name, m)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Adam with bias correction; clears gradients afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some(id) = self.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training {
                seed: 0,
                step: self.step,
                message: format!("non-finite gradient in {:?}", self.names[id]),
            });
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for i in 0..self.values.len() {
            let g = self.grads[i].data();
            let m = self.first_moment[i].data_mut();
            for (mj, gj) in m.iter_mut().zip(g) {
                *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            }
            let v = self.second_moment[i].data_mut();
            for (vj, gj) in v.iter_mut().zip(g) {
                *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            }
            let m = self.first_moment[i].data();
            let v = self.second_moment[i].data();
            let p = self.values[i].data_mut();
            for j in 0..p.len() {
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grads();
        Ok(())
    }

    /// Serializes parameter values in lexicographic name order.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.num_scalars() * 8 + self.len() * 32);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for (name, id) in &self.index {
            let m = &self.values[id.0];
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a checkpoint into `(name, matrix)` pairs in file order.
    pub fn parse_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
        let mut cur = ByteReader::new(bytes);
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format("bad parameter checkpoint magic"));
        }
        let mut out = Vec::new();
        while !cur.is_empty() {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::format("parameter name is not UTF-8"))?
                .to_owned();
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let v = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::format(format!("non-finite value in {name:?}")));
                }
                data.push(v);
            }
            out.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(out)
    }

    /// Overwrites values from a checkpoint; names and shapes must match exactly.
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<()> {
        let entries = Self::parse_checkpoint(bytes)?;
        if entries.len() != self.len() {
            return Err(Error::format(format!(
                "checkpoint has {} parameters, model has {}",
                entries.len(),
                self.len()
            )));
        }
        for (name, m) in entries {
            let id = self
                .id(&name)
                .ok_or_else(|| Error::format(format!("unknown parameter {name:?}")))?;
            if self.values[id.0].shape() != m.shape() {
                return Err(Error::format(format!("shape mismatch for {name:?}")));
            }
            self.values[id.0] = m;
        }
        Ok(())
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
