//! Codec checkpoint files.
//!
//! Layout: `PSCC`, a kind byte (0 = linear, 1 = MetaAE), a u32 length and a
//! UTF-8 `key=value` header (shapes, levels, boundaries, hyperparameters),
//! then a `PSC1` parameter block running to the end of the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Codec, DecodeResult, LatentSample, LinearOrthoCodec, MetaAE, MetaAEConfig};
use crate::kernel::{ByteReader, Matrix, ParamStore};
use crate::repr::OrderedRepr;
use crate::{Error, Result};

const CODEC_MAGIC: &[u8; 4] = b"PSCC";
const KIND_LINEAR: u8 = 0;
const KIND_META: u8 = 1;

fn boundaries_str(b: &[usize]) -> String {
    b.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn assemble(kind: u8, header: &str, params: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + header.len() + params.len());
    out.extend_from_slice(CODEC_MAGIC);
    out.push(kind);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(params);
    out
}

pub(crate) fn linear_to_bytes(codec: &LinearOrthoCodec) -> Vec<u8> {
    let header = format!(
        "n_tokens={}\nwidth={}\nk_levels={}\nboundaries={}\n",
        codec.n_tokens(),
        codec.latent_width(),
        codec.levels(),
        boundaries_str(codec.boundaries())
    );
    let mut store = ParamStore::new();
    let d = codec.latent_width();
    let k = codec.levels();
    // Names are unique and shapes fixed, so these adds cannot fail.
    store.add("linear.mean", Matrix::from_vec(1, d, codec.mean().to_vec()).unwrap()).unwrap();
    store.add("linear.basis", codec.basis().clone()).unwrap();
    store
        .add("linear.eigenvalues", Matrix::from_vec(1, d, codec.eigenvalues().to_vec()).unwrap())
        .unwrap();
    store
        .add("linear.level_error", Matrix::from_vec(1, k, codec.level_mean_error().to_vec()).unwrap())
        .unwrap();
    assemble(KIND_LINEAR, &header, &store.to_checkpoint_bytes())
}

pub(crate) fn meta_to_bytes(model: &MetaAE) -> Vec<u8> {
    let header = format!(
        "{}boundaries={}\n",
        model.config().to_header(),
        boundaries_str(model.boundaries())
    );
    assemble(KIND_META, &header, &model.params().to_checkpoint_bytes())
}

fn parse_header(text: &str) -> Result<BTreeMap<String, String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Error::format(format!("bad header line {l:?}")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(h: &BTreeMap<String, String>, key: &str) -> Result<T> {
    h.get(key)
        .ok_or_else(|| Error::format(format!("missing header key {key}")))?
        .parse()
        .map_err(|_| Error::format(format!("bad value for header key {key}")))
}

fn parse_boundaries(h: &BTreeMap<String, String>) -> Result<Vec<usize>> {
    h.get("boundaries")
        .ok_or_else(|| Error::format("missing header key boundaries"))?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::format("bad boundaries")))
        .collect()
}

/// Either codec behind one checkpoint format.
#[derive(Clone, Debug)]
pub enum AnyCodec {
    Linear(LinearOrthoCodec),
    Meta(MetaAE),
}

impl AnyCodec {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteReader::new(bytes);
        if cur.take(4)? != CODEC_MAGIC {
            return Err(Error::format("bad codec checkpoint magic"));
        }
        let kind = cur.take(1)?[0];
        let len = cur.u32()? as usize;
        let header = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::format("checkpoint header is not UTF-8"))?;
        let h = parse_header(header)?;
        let params = cur.rest();
        match kind {
            KIND_LINEAR => {
                let n: usize = field(&h, "n_tokens")?;
                let d: usize = field(&h, "width")?;
                let boundaries = parse_boundaries(&h)?;
                let entries: BTreeMap<String, Matrix> =
                    ParamStore::parse_checkpoint(params)?.into_iter().collect();
                let get = |name: &str| {
                    entries
                        .get(name)
                        .cloned()
                        .ok_or_else(|| Error::format(format!("missing parameter {name}")))
                };
                Ok(AnyCodec::Linear(LinearOrthoCodec::from_parts(
                    n,
                    d,
                    boundaries,
                    get("linear.mean")?.into_data(),
                    get("linear.basis")?,
                    get("linear.eigenvalues")?.into_data(),
                    get("linear.level_error")?.into_data(),
                )?))
            }
            KIND_META => {
                let cfg = MetaAEConfig {
                    n_tokens: field(&h, "n_tokens")?,
                    d_model: field(&h, "d_model")?,
                    n_layers_enc: field(&h, "n_layers_enc")?,
                    n_layers_dec: field(&h, "n_layers_dec")?,
                    n_heads: field(&h, "n_heads")?,
                    k_levels: field(&h, "k_levels")?,
                    lambda_err: field(&h, "lambda_err")?,
                    lr: field(&h, "lr")?,
                    batch_size: field(&h, "batch_size")?,
                    epochs: field(&h, "epochs")?,
                    seed: field(&h, "seed")?,
                };
                let model = MetaAE::from_store(cfg, params)?;
                if parse_boundaries(&h)? != model.boundaries() {
                    return Err(Error::format("boundaries in header do not match config"));
                }
                Ok(AnyCodec::Meta(model))
            }
            other => Err(Error::format(format!("unknown codec kind {other}"))),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.checkpoint_bytes())?;
        Ok(())
    }

    fn inner(&self) -> &dyn Codec {
        match self {
            AnyCodec::Linear(c) => c,
            AnyCodec::Meta(c) => c,
        }
    }
}

impl From<LinearOrthoCodec> for AnyCodec {
    fn from(c: LinearOrthoCodec) -> Self {
        AnyCodec::Linear(c)
    }
}

impl From<MetaAE> for AnyCodec {
    fn from(c: MetaAE) -> Self {
        AnyCodec::Meta(c)
    }
}

impl Codec for AnyCodec {
    fn n_tokens(&self) -> usize {
        self.inner().n_tokens()
    }

    fn latent_width(&self) -> usize {
        self.inner().latent_width()
    }

    fn repr_width(&self) -> usize {
        self.inner().repr_width()
    }

    fn boundaries(&self) -> &[usize] {
        match self {
            AnyCodec::Linear(c) => c.boundaries(),
            AnyCodec::Meta(c) => c.boundaries(),
        }
    }

    fn encode(&self, z: &LatentSample) -> Result<OrderedRepr> {
        self.inner().encode(z)
    }

    fn decode(&self, masked: &Matrix, level: usize) -> Result<DecodeResult> {
        self.inner().decode(masked, level)
    }

    fn checkpoint_bytes(&self) -> Vec<u8> {
        self.inner().checkpoint_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{fit_linear_oracle, Dataset};

    fn small_meta() -> MetaAE {
        MetaAE::new(MetaAEConfig {
            n_tokens: 4,
            d_model: 8,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            k_levels: 2,
            lambda_err: 1.0,
            lr: 1e-3,
            batch_size: 2,
            epochs: 1,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn meta_checkpoint_round_trip() {
        let m = small_meta();
        let bytes = m.checkpoint_bytes();
        let back = AnyCodec::from_bytes(&bytes).unwrap();
        assert_eq!(back.checkpoint_bytes(), bytes);
        assert_eq!(back.checksum(), m.checksum());
        assert_eq!(back.boundaries(), &[2, 4]);
    }

    #[test]
    fn linear_checkpoint_round_trip() {
        let samples = (0..8)
            .map(|i| LatentSample::new(Matrix::from_fn(2, 3, |r, c| ((i * 6 + r * 3 + c) as f64).sin())).unwrap())
            .collect();
        let ds = Dataset::new(2, 3, samples).unwrap();
        let c = fit_linear_oracle(&ds, &[1, 2], 0).unwrap();
        let bytes = c.checkpoint_bytes();
        match AnyCodec::from_bytes(&bytes).unwrap() {
            AnyCodec::Linear(back) => assert_eq!(back, c),
            AnyCodec::Meta(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn corrupt_checkpoint_rejected() {
        let bytes = small_meta().checkpoint_bytes();
        assert!(AnyCodec::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(AnyCodec::from_bytes(&bad).is_err());
    }
}
