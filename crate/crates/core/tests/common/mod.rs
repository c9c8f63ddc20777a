#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use progsem::bench::{gen_synthetic, SyntheticSpec};
use progsem::codec::{fit_linear_oracle, Codec, DecodeResult, Dataset, LatentSample, LinearOrthoCodec};
use progsem::kernel::Matrix;
use progsem::repr::{make_boundaries, OrderedRepr};
use progsem::Result;

pub fn small_dataset(seed: u64) -> Dataset {
    gen_synthetic(&SyntheticSpec {
        n_samples: 64,
        n_tokens: 8,
        width: 16,
        rank: 8,
        noise_std: 0.02,
        seed,
    })
    .unwrap()
}

pub fn linear_codec(ds: &Dataset, k: usize) -> LinearOrthoCodec {
    fit_linear_oracle(ds, &make_boundaries(ds.n_tokens(), k).unwrap(), 0).unwrap()
}

/// Wraps a codec and counts `encode` calls.
pub struct Counting {
    pub inner: Arc<dyn Codec>,
    pub encodes: AtomicUsize,
}

impl Counting {
    pub fn new(inner: impl Codec + 'static) -> Arc<Self> {
        Self::share(Arc::new(inner))
    }

    pub fn share(inner: Arc<dyn Codec>) -> Arc<Self> {
        Arc::new(Counting {
            inner,
            encodes: AtomicUsize::new(0),
        })
    }

    pub fn count(&self) -> usize {
        self.encodes.load(Ordering::SeqCst)
    }
}

impl Codec for Counting {
    fn n_tokens(&self) -> usize {
        self.inner.n_tokens()
    }
    fn latent_width(&self) -> usize {
        self.inner.latent_width()
    }
    fn repr_width(&self) -> usize {
        self.inner.repr_width()
    }
    fn boundaries(&self) -> &[usize] {
        self.inner.boundaries()
    }
    fn encode(&self, z: &LatentSample) -> Result<OrderedRepr> {
        self.encodes.fetch_add(1, Ordering::SeqCst);
        self.inner.encode(z)
    }
    fn decode(&self, masked: &Matrix, level: usize) -> Result<DecodeResult> {
        self.inner.decode(masked, level)
    }
    fn checkpoint_bytes(&self) -> Vec<u8> {
        self.inner.checkpoint_bytes()
    }
}
