use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{true_error, Codec, Dataset, DecodeResult, LatentSample};
use crate::kernel::Matrix;
use crate::repr::OrderedRepr;
use crate::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Column `j` is the `j`-th eigenvector.
    pub vectors: Matrix,
    pub values: Vec<f64>,
}

/// Power iteration with deflation for a symmetric positive semi-definite
/// matrix.
///
/// Each direction iterates until the eigen-residual `‖Av − λv‖` falls below
/// `1e-10 · trace(A)` (at most 10 000 iterations). Iterates are kept
/// orthogonal to the directions already found, so the basis stays orthonormal
/// even across a degenerate or null spectrum.
pub fn power_eigen(matrix: &Matrix, seed: u64) -> Result<SymmetricEigen> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(Error::argument("power iteration needs a square matrix"));
    }
    let trace: f64 = (0..n).map(|i| matrix.get(i, i)).sum();
    let scale = trace.abs().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deflated = matrix.clone();
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);

    for direction in 0..n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut v, &found);
        if normalize(&mut v) == 0.0 {
            return Err(Error::Numeric {
                direction,
                message: "degenerate start vector".into(),
            });
        }
        let mut converged = false;
        let mut w = vec![0.0; n];
        for _ in 0..POWER_MAX_ITERS {
            mat_vec(&deflated, &v, &mut w);
            orthogonalize(&mut w, &found);
            let lambda = dot(&v, &w);
            let residual = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual <= POWER_TOL * scale {
                converged = true;
                break;
            }
            let norm = normalize(&mut w);
            if norm == 0.0 {
                converged = true;
                break;
            }
            std::mem::swap(&mut v, &mut w);
        }
        if !converged {
            return Err(Error::Numeric {
                direction,
                message: format!("power iteration did not converge in {POWER_MAX_ITERS} iterations"),
            });
        }
        let mut av = vec![0.0; n];
        mat_vec(&deflated, &v, &mut av);
        let deflate_by = dot(&v, &av);
        for r in 0..n {
            for c in 0..n {
                let cur = deflated.get(r, c);
                deflated.set(r, c, cur - deflate_by * v[r] * v[c]);
            }
        }
        mat_vec(matrix, &v, &mut av);
        pairs.push((dot(&v, &av), v.clone()));
        found.push(v);
    }

    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| pairs[c].1[r]);
    Ok(SymmetricEigen { vectors, values })
}

fn mat_vec(m: &Matrix, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(m.row(r), v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
    }
}

/// Principal-direction codec.
///
/// Coefficients of the mean-centered tokens on the variance-ordered basis are
/// laid out direction-major (all tokens' coefficient on direction 0, then on
/// direction 1, ...) and written row-major into the `N × d` representation.
/// A prefix of chunks therefore carries the top directions first.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOrthoCodec {
    n_tokens: usize,
    width: usize,
    boundaries: Vec<usize>,
    mean: Vec<f64>,
    basis: Matrix,
    eigenvalues: Vec<f64>,
    level_mean_error: Vec<f64>,
}

impl LinearOrthoCodec {
    pub(crate) fn from_parts(
        n_tokens: usize,
        width: usize,
        boundaries: Vec<usize>,
        mean: Vec<f64>,
        basis: Matrix,
        eigenvalues: Vec<f64>,
        level_mean_error: Vec<f64>,
    ) -> Result<Self> {
        if mean.len() != width
            || basis.shape() != (width, width)
            || eigenvalues.len() != width
            || level_mean_error.len() != boundaries.len()
            || boundaries.last() != Some(&n_tokens)
        {
            return Err(Error::format("inconsistent linear codec parts"));
        }
        Ok(LinearOrthoCodec {
            n_tokens,
            width,
            boundaries,
            mean,
            basis,
            eigenvalues,
            level_mean_error,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Training-set mean reconstruction error per level, used as the
    /// protocol-time error estimate.
    pub fn level_mean_error(&self) -> &[f64] {
        &self.level_mean_error
    }

    /// Coefficient matrix (`N × d`, column `j` = direction `j`).
    pub fn coefficients(&self, z: &Matrix) -> Matrix {
        let centered = Matrix::from_fn(self.n_tokens, self.width, |r, c| z.get(r, c) - self.mean[c]);
        centered.matmul(&self.basis)
    }

    fn pack(&self, coeffs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.n_tokens, self.width);
        let data = out.data_mut();
        for j in 0..self.width {
            for t in 0..self.n_tokens {
                data[j * self.n_tokens + t] = coeffs.get(t, j);
            }
        }
        out
    }

    fn unpack(&self, packed: &Matrix) -> Matrix {
        let data = packed.data();
        Matrix::from_fn(self.n_tokens, self.width, |t, j| data[j * self.n_tokens + t])
    }

    fn reconstruct(&self, masked: &Matrix) -> Matrix {
        let coeffs = self.unpack(masked);
        let mut z = coeffs.matmul_nt(&self.basis);
        for r in 0..self.n_tokens {
            for (v, m) in z.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        z
    }

    fn check_input(&self, masked: &Matrix, level: usize) -> Result<()> {
        if level == 0 || level > self.boundaries.len() {
            return Err(Error::argument(format!(
                "level {level} outside 1..={}",
                self.boundaries.len()
            )));
        }
        if masked.shape() != (self.n_tokens, self.width) {
            return Err(Error::argument(format!(
                "representation shape {:?} does not match ({}, {})",
                masked.shape(),
                self.n_tokens,
                self.width
            )));
        }
        Ok(())
    }

    /// Decode with the sample-exact error (evaluation only; needs `z`).
    pub fn decode_exact(&self, masked: &Matrix, level: usize, z: &Matrix) -> Result<DecodeResult> {
        self.check_input(masked, level)?;
        let z_hat = self.reconstruct(masked);
        let e = true_error(&z_hat, z);
        Ok(DecodeResult::new(z_hat, e))
    }

    /// `(1/d) · Σ` eigenvalues of the directions dropped at `level`, when the
    /// level boundary falls on a whole number of directions.
    pub fn eigen_tail_error(&self, level: usize) -> Option<f64> {
        let kept = self.boundaries[level - 1] * self.width;
        if kept % self.n_tokens != 0 {
            return None;
        }
        let kept_dirs = kept / self.n_tokens;
        Some(self.eigenvalues[kept_dirs..].iter().sum::<f64>() / self.width as f64)
    }
}

impl Codec for LinearOrthoCodec {
    fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    fn latent_width(&self) -> usize {
        self.width
    }

    fn repr_width(&self) -> usize {
        self.width
    }

    fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    fn encode(&self, z: &LatentSample) -> Result<OrderedRepr> {
        if z.tokens().shape() != (self.n_tokens, self.width) {
            return Err(Error::argument(format!(
                "latent shape {:?} does not match ({}, {})",
                z.tokens().shape(),
                self.n_tokens,
                self.width
            )));
        }
        let packed = self.pack(&self.coefficients(z.tokens()));
        OrderedRepr::new(packed, self.boundaries.clone())
    }

    fn decode(&self, masked: &Matrix, level: usize) -> Result<DecodeResult> {
        self.check_input(masked, level)?;
        Ok(DecodeResult::new(
            self.reconstruct(masked),
            self.level_mean_error[level - 1],
        ))
    }

    fn checkpoint_bytes(&self) -> Vec<u8> {
        super::checkpoint::linear_to_bytes(self)
    }
}

/// Fits the principal-direction codec to a dataset.
///
/// The covariance pools every token of every sample around the pooled mean.
pub fn fit_linear_oracle(dataset: &Dataset, boundaries: &[usize], seed: u64) -> Result<LinearOrthoCodec> {
    let (n, d) = (dataset.n_tokens(), dataset.width());
    if dataset.len() < d {
        return Err(Error::argument(format!(
            "need at least {d} samples to fit, got {}",
            dataset.len()
        )));
    }
    if boundaries.last() != Some(&n) {
        return Err(Error::config("boundaries must end at the token count"));
    }
    let count = (dataset.len() * n) as f64;
    let mut mean = vec![0.0; d];
    for s in dataset.samples() {
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(s.tokens().row(r)) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for s in dataset.samples() {
        for r in 0..n {
            for ((c, v), m) in centered.iter_mut().zip(s.tokens().row(r)).zip(&mean) {
                *c = v - m;
            }
            for i in 0..d {
                let ci = centered[i];
                let row = cov.row_mut(i);
                for j in 0..d {
                    row[j] += ci * centered[j];
                }
            }
        }
    }
    cov.scale_assign(1.0 / count);

    let eig = power_eigen(&cov, seed)?;
    let mut codec = LinearOrthoCodec {
        n_tokens: n,
        width: d,
        boundaries: boundaries.to_vec(),
        mean,
        basis: eig.vectors,
        eigenvalues: eig.values,
        level_mean_error: vec![0.0; boundaries.len()],
    };

    // Mean squared coefficient per packed position gives the exact training
    // mean error of every level.
    let mut energy = vec![0.0; n * d];
    for s in dataset.samples() {
        let packed = codec.pack(&codec.coefficients(s.tokens()));
        for (e, v) in energy.iter_mut().zip(packed.data()) {
            *e += v * v;
        }
    }
    let per_entry = 1.0 / (dataset.len() * n * d) as f64;
    codec.level_mean_error = boundaries
        .iter()
        .map(|&b| energy[b * d..].iter().sum::<f64>() * per_entry)
        .collect();
    Ok(codec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::make_boundaries;
    use rand_distr::Normal;

    fn random_dataset(samples: usize, n: usize, d: usize, seed: u64, spectrum: &[f64]) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let out = (0..samples)
            .map(|_| {
                LatentSample::new(Matrix::from_fn(n, d, |_, c| {
                    normal.sample(&mut rng) * spectrum.get(c).copied().unwrap_or(0.0) + 0.5
                }))
                .unwrap()
            })
            .collect();
        Dataset::new(n, d, out).unwrap()
    }

    #[test]
    fn basis_is_orthonormal_and_ordered() {
        let ds = random_dataset(64, 4, 6, 1, &[3.0, 0.2, 1.0, 2.0, 0.5, 0.1]);
        let codec = fit_linear_oracle(&ds, &make_boundaries(4, 2).unwrap(), 9).unwrap();
        let gram = codec.basis().matmul_tn(codec.basis());
        assert!(gram.max_abs_diff(&Matrix::identity(6)) < 1e-8);
        assert!(codec.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_two_data_has_null_tail() {
        let ds = random_dataset(40, 3, 5, 2, &[1.0, 0.7]);
        let codec = fit_linear_oracle(&ds, &[3], 0).unwrap();
        assert!(codec.eigenvalues()[2..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn isotropic_data_still_orthonormal() {
        let ds = random_dataset(200, 4, 5, 3, &[1.0; 5]);
        let codec = fit_linear_oracle(&ds, &[2, 4], 4).unwrap();
        let gram = codec.basis().matmul_tn(codec.basis());
        assert!(gram.max_abs_diff(&Matrix::identity(5)) < 1e-8);
    }

    #[test]
    fn full_level_reconstruction_is_exact() {
        let ds = random_dataset(32, 4, 6, 5, &[1.0, 1.0, 0.5, 0.3, 0.2, 0.1]);
        let codec = fit_linear_oracle(&ds, &make_boundaries(4, 4).unwrap(), 0).unwrap();
        let z = &ds.samples()[3];
        let r = codec.encode(z).unwrap();
        let res = codec.decode_exact(&r.prefix_mask(4).unwrap(), 4, z.tokens()).unwrap();
        assert!(res.z_hat.max_abs_diff(z.tokens()) < 1e-12);
        assert!(res.e_hat < 1e-24);
        assert!((res.q - 1.0).abs() < 1e-12);
        assert_eq!(codec.level_mean_error()[3], 0.0);
    }

    #[test]
    fn zero_latent_with_zero_mean_encodes_to_zero() {
        let codec = LinearOrthoCodec::from_parts(
            2,
            3,
            vec![1, 2],
            vec![0.0; 3],
            Matrix::identity(3),
            vec![1.0; 3],
            vec![0.5, 0.0],
        )
        .unwrap();
        let r = codec.encode(&LatentSample::new(Matrix::zeros(2, 3)).unwrap()).unwrap();
        assert!(r.tokens().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_samples_rejected() {
        let ds = random_dataset(3, 2, 5, 0, &[1.0; 5]);
        assert!(fit_linear_oracle(&ds, &[2], 0).is_err());
    }

    #[test]
    fn level_out_of_range_rejected() {
        let ds = random_dataset(16, 4, 4, 0, &[1.0; 4]);
        let codec = fit_linear_oracle(&ds, &[2, 4], 0).unwrap();
        assert!(codec.decode(&Matrix::zeros(4, 4), 3).is_err());
        assert!(codec.decode(&Matrix::zeros(4, 4), 0).is_err());
        assert!(codec.decode(&Matrix::zeros(3, 4), 1).is_err());
    }
}
