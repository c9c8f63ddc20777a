use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::codec::{Dataset, LatentSample};
use crate::kernel::Matrix;
use crate::{Error, Result};

/// Low-rank synthetic latents.
///
/// Each token is `a · V + noise`, where `V` is a fixed `rank × d_z` factor
/// shared by the whole dataset and `a` is a fresh standard normal vector per
/// token. Factor rows are weighted by `1/sqrt(j + 1)` and normalized so the
/// noise-free part has unit variance per entry on average.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_tokens: usize,
    pub width: usize,
    pub rank: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Dataset used for the reference training run.
    pub fn reference() -> Self {
        SyntheticSpec {
            n_samples: 2048,
            n_tokens: 16,
            width: 32,
            rank: 16,
            noise_std: 0.05,
            seed: 2024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.rank > self.width {
            return Err(Error::config(format!(
                "rank {} must be in 1..={}",
                self.rank, self.width
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be non-negative"));
        }
        if self.n_tokens == 0 || self.width == 0 {
            return Err(Error::config("token count and width must be positive"));
        }
        Ok(())
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (0..spec.rank).map(|j| 1.0 / (j as f64 + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let factor = Matrix::from_fn(spec.rank, spec.width, |j, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        g * (weights[j] / total).sqrt()
    });
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::config(e.to_string()))?;
    let samples = (0..spec.n_samples)
        .map(|_| {
            let coeffs = Matrix::from_fn(spec.n_tokens, spec.rank, |_, _| StandardNormal.sample(&mut rng));
            let mut z = coeffs.matmul(&factor);
            if spec.noise_std > 0.0 {
                for v in z.data_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
            // Stored as f32 on disk; round now so in-memory and file agree.
            LatentSample::new(z.map(|v| f64::from(v as f32)))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(spec.n_tokens, spec.width, samples)
}
