//! Trainable transformer codec with error token and quality head.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Codec, DecodeResult, LatentSample};
use crate::kernel::{forward_block, AdamConfig, BlockParams, Matrix, ParamId, ParamStore, Tape, Var};
use crate::repr::{make_boundaries, OrderedRepr};
use crate::{Error, Result};

const EMBED_INIT: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct MetaAEConfig {
    pub n_tokens: usize,
    /// Model width; equals the latent token width.
    pub d_model: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub k_levels: usize,
    pub lambda_err: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl MetaAEConfig {
    /// Desk-scale reference configuration: 16 tokens of width 32, four levels.
    pub fn reference() -> Self {
        MetaAEConfig {
            n_tokens: 16,
            d_model: 32,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 4,
            k_levels: 4,
            lambda_err: 1.0,
            lr: 1e-3,
            batch_size: 64,
            epochs: 300,
            seed: 7,
        }
    }

    /// The configuration used against real vision-encoder latents.
    pub fn full_scale() -> Self {
        MetaAEConfig {
            n_tokens: 64,
            d_model: 576,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 8,
            k_levels: 4,
            lambda_err: 1.0,
            lr: 1e-4,
            batch_size: 128,
            epochs: 50,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "head count {} must divide model width {}",
                self.n_heads, self.d_model
            )));
        }
        if self.k_levels == 0 || self.k_levels > self.n_tokens {
            return Err(Error::config(format!(
                "cannot split {} tokens into {} levels",
                self.n_tokens, self.k_levels
            )));
        }
        if !(self.lambda_err >= 0.0) {
            return Err(Error::config("lambda_err must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }

    pub(crate) fn to_header(&self) -> String {
        format!(
            "n_tokens={}\nd_model={}\nn_layers_enc={}\nn_layers_dec={}\nn_heads={}\nk_levels={}\nlambda_err={}\nlr={}\nbatch_size={}\nepochs={}\nseed={}\n",
            self.n_tokens,
            self.d_model,
            self.n_layers_enc,
            self.n_layers_dec,
            self.n_heads,
            self.k_levels,
            self.lambda_err,
            self.lr,
            self.batch_size,
            self.epochs,
            self.seed
        )
    }
}

#[derive(Clone, Debug)]
struct Layout {
    enc_pos: ParamId,
    enc_blocks: Vec<BlockParams>,
    dec_pos: ParamId,
    err_token: ParamId,
    dec_blocks: Vec<BlockParams>,
    ln_f_gamma: ParamId,
    ln_f_beta: ParamId,
    recon_w: ParamId,
    recon_b: ParamId,
    err_w: ParamId,
    err_b: ParamId,
}

impl Layout {
    fn init(cfg: &MetaAEConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        let (n, d) = (cfg.n_tokens, cfg.d_model);
        let enc_pos = store.add_uniform("enc.pos", n, d, EMBED_INIT, rng)?;
        let enc_blocks = (0..cfg.n_layers_enc)
            .map(|i| BlockParams::init(store, &format!("enc.block{i}"), d, cfg.n_heads, rng))
            .collect::<Result<_>>()?;
        let dec_pos = store.add_uniform("dec.pos", n + 1, d, EMBED_INIT, rng)?;
        let err_token = store.add_uniform("dec.err_token", 1, d, EMBED_INIT, rng)?;
        let dec_blocks = (0..cfg.n_layers_dec)
            .map(|i| BlockParams::init(store, &format!("dec.block{i}"), d, cfg.n_heads, rng))
            .collect::<Result<_>>()?;
        Ok(Layout {
            enc_pos,
            enc_blocks,
            dec_pos,
            err_token,
            dec_blocks,
            ln_f_gamma: store.add("dec.ln_f.gamma", Matrix::filled(1, d, 1.0))?,
            ln_f_beta: store.add("dec.ln_f.beta", Matrix::zeros(1, d))?,
            recon_w: store.add_fan_in_uniform("dec.recon.w", d, d, d, rng)?,
            recon_b: store.add("dec.recon.b", Matrix::zeros(1, d))?,
            err_w: store.add_fan_in_uniform("dec.err.w", d, 1, d, rng)?,
            err_b: store.add("dec.err.b", Matrix::zeros(1, 1))?,
        })
    }
}

/// Per-sample forward nodes of the training objective.
#[derive(Clone, Copy, Debug)]
pub struct SampleNodes {
    pub repr: Var,
    pub z_hat: Var,
    pub e_hat: Var,
    pub rec: Var,
    pub err: Var,
    pub total: Var,
}

/// Batch objective recorded on a tape.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub total: Var,
    pub samples: Vec<SampleNodes>,
    pub l_rec: f64,
    pub l_err: f64,
    pub l_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub l_rec: f64,
    pub l_err: f64,
    pub l_total: f64,
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    /// Overrides `config.epochs` when set.
    pub epochs: Option<usize>,
    /// Log every this many steps (0 = never).
    pub log_every: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: None,
            log_every: 0,
        }
    }
}

/// Prefix-masked transformer autoencoder.
#[derive(Clone, Debug)]
pub struct MetaAE {
    config: MetaAEConfig,
    boundaries: Vec<usize>,
    store: ParamStore,
    layout: Layout,
    adam: AdamConfig,
}

impl MetaAE {
    pub fn new(config: MetaAEConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let layout = Layout::init(&config, &mut store, &mut rng)?;
        let boundaries = make_boundaries(config.n_tokens, config.k_levels)?;
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        Ok(MetaAE {
            config,
            boundaries,
            store,
            layout,
            adam,
        })
    }

    pub(crate) fn from_store(config: MetaAEConfig, params: &[u8]) -> Result<Self> {
        let mut model = MetaAE::new(config)?;
        model.store.load_checkpoint(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &MetaAEConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_latent(&self, z: &Matrix) -> Result<()> {
        if z.shape() != (self.config.n_tokens, self.config.d_model) {
            return Err(Error::argument(format!(
                "latent shape {:?} does not match ({}, {})",
                z.shape(),
                self.config.n_tokens,
                self.config.d_model
            )));
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.config.k_levels {
            return Err(Error::argument(format!(
                "level {level} outside 1..={}",
                self.config.k_levels
            )));
        }
        Ok(())
    }

    /// Records the encoder: positional embedding then the encoder blocks.
    pub fn encode_on(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let pos = tape.param(store, self.layout.enc_pos);
        let mut x = tape.add(z, pos);
        for b in &self.layout.enc_blocks {
            x = forward_block(tape, store, x, b)?;
        }
        Ok(x)
    }

    /// Records the decoder on a full-length masked input. Returns
    /// `(z_hat, e_hat)`; `e_hat` is `1×1`.
    pub fn decode_on(&self, tape: &mut Tape, store: &ParamStore, masked: Var) -> Result<(Var, Var)> {
        let n = self.config.n_tokens;
        let err_tok = tape.param(store, self.layout.err_token);
        let seq = tape.concat_rows(&[err_tok, masked]);
        let pos = tape.param(store, self.layout.dec_pos);
        let mut x = tape.add(seq, pos);
        for b in &self.layout.dec_blocks {
            x = forward_block(tape, store, x, b)?;
        }
        let g = tape.param(store, self.layout.ln_f_gamma);
        let beta = tape.param(store, self.layout.ln_f_beta);
        let h = tape.layer_norm(x, g, beta);

        let tokens = tape.slice_rows(h, 1, n + 1);
        let rw = tape.param(store, self.layout.recon_w);
        let rb = tape.param(store, self.layout.recon_b);
        let z_hat = tape.matmul(tokens, rw);
        let z_hat = tape.add_row(z_hat, rb);

        let err_state = tape.slice_rows(h, 0, 1);
        let ew = tape.param(store, self.layout.err_w);
        let eb = tape.param(store, self.layout.err_b);
        let e = tape.matmul(err_state, ew);
        let e = tape.add_row(e, eb);
        let e_hat = tape.softplus(e);
        Ok((z_hat, e_hat))
    }

    /// Records the objective for `(z, level)` pairs, each term weighted `1/B`.
    ///
    /// The error target is the detached reconstruction error. With
    /// `frozen_targets`, those values are used instead; a finite-difference
    /// check of the stop-gradient path holds the targets fixed this way.
    pub fn loss_on(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &[(&Matrix, usize)],
        frozen_targets: Option<&[f64]>,
    ) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::argument("empty batch"));
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut samples = Vec::with_capacity(batch.len());
        let (mut l_rec, mut l_err) = (0.0, 0.0);
        let mut total: Option<Var> = None;
        for (i, &(z, level)) in batch.iter().enumerate() {
            self.check_latent(z)?;
            self.check_level(level)?;
            let zv = tape.constant(z.clone());
            let repr = self.encode_on(tape, store, zv)?;
            let masked = tape.keep_rows(repr, self.boundaries[level - 1]);
            let (z_hat, e_hat) = self.decode_on(tape, store, masked)?;
            let diff = tape.sub(z_hat, zv);
            let rec = tape.mean_square(diff);
            let target = match frozen_targets {
                Some(t) => tape.constant(Matrix::filled(1, 1, t[i])),
                None => tape.detach(rec),
            };
            let err_diff = tape.sub(e_hat, target);
            let err = tape.mean_square(err_diff);
            let weighted_err = tape.scale(err, self.config.lambda_err);
            let sample_total = tape.add(rec, weighted_err);
            let scaled = tape.scale(sample_total, inv_b);
            total = Some(match total {
                Some(t) => tape.add(t, scaled),
                None => scaled,
            });
            l_rec += tape.scalar(rec) * inv_b;
            l_err += tape.scalar(err) * inv_b;
            samples.push(SampleNodes {
                repr,
                z_hat,
                e_hat,
                rec,
                err,
                total: sample_total,
            });
        }
        let total = total.unwrap();
        Ok(BatchLoss {
            total,
            samples,
            l_rec,
            l_err,
            l_total: tape.scalar(total),
        })
    }

    /// One optimizer step; levels are drawn uniformly per sample.
    pub fn train_step(&mut self, batch: &[&LatentSample], rng: &mut impl Rng) -> Result<LossReport> {
        let k = self.config.k_levels;
        let levels: Vec<usize> = batch.iter().map(|_| rng.random_range(1..=k)).collect();
        let pairs: Vec<(&Matrix, usize)> = batch.iter().map(|s| s.tokens()).zip(levels.iter().copied()).collect();
        let step = self.store.step();
        let seed = self.config.seed;
        let training_err = |e: Error| match e {
            Error::Training { message, .. } => Error::Training { seed, step, message },
            other => other,
        };

        // One tape per sample keeps peak memory flat; gradients accumulate
        // in sample order so the result is deterministic.
        let inv_b = 1.0 / pairs.len() as f64;
        let (mut l_rec, mut l_err, mut l_total) = (0.0, 0.0, 0.0);
        let mut store = std::mem::take(&mut self.store);
        let result = (|| {
            for pair in &pairs {
                let mut tape = Tape::new();
                let loss = self.loss_on(&mut tape, &store, std::slice::from_ref(pair), None)?;
                let scaled = tape.scale(loss.total, inv_b);
                tape.backward_into(scaled, &mut store).map_err(training_err)?;
                l_rec += loss.l_rec * inv_b;
                l_err += loss.l_err * inv_b;
                l_total += loss.l_total * inv_b;
            }
            if !l_total.is_finite() {
                return Err(Error::Training {
                    seed,
                    step,
                    message: format!("non-finite loss {l_total}"),
                });
            }
            store.adam_step(&self.adam).map_err(training_err)
        })();
        if result.is_err() {
            store.zero_grads();
        }
        self.store = store;
        result?;
        Ok(LossReport {
            step: self.store.step(),
            l_rec,
            l_err,
            l_total,
            levels,
        })
    }

    /// Shuffled mini-batch training over `train` for the configured epochs.
    /// Returns the per-epoch mean total loss.
    pub fn fit(&mut self, train: &[LatentSample], opts: &TrainOptions) -> Result<Vec<f64>> {
        if train.is_empty() {
            return Err(Error::argument("empty training set"));
        }
        let epochs = opts.epochs.unwrap_or(self.config.epochs);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_0f_7a1e);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut acc = 0.0;
            let mut batches = 0usize;
            for idx in order.chunks(self.config.batch_size) {
                let batch: Vec<&LatentSample> = idx.iter().map(|&i| &train[i]).collect();
                let report = self.train_step(&batch, &mut rng)?;
                acc += report.l_total;
                batches += 1;
                if opts.log_every > 0 && report.step % opts.log_every == 0 {
                    log::info!(
                        "epoch {epoch} step {} L_rec={:.5} L_err={:.5} L_total={:.5}",
                        report.step,
                        report.l_rec,
                        report.l_err,
                        report.l_total
                    );
                }
            }
            history.push(acc / batches as f64);
        }
        Ok(history)
    }

    /// Level-`ℓ` reconstruction loss from a given representation.
    pub fn level_loss(&self, repr: &OrderedRepr, z: &Matrix, level: usize) -> Result<f64> {
        let masked = repr.prefix_mask(level)?;
        let res = self.decode(&masked, level)?;
        Ok(super::true_error(&res.z_hat, z))
    }

    /// Gradient of the level-`ℓ` reconstruction loss with respect to the
    /// (unmasked) representation rows.
    pub fn repr_gradient(&self, repr: &OrderedRepr, z: &Matrix, level: usize) -> Result<Matrix> {
        self.check_level(level)?;
        let mut tape = Tape::new();
        let r = tape.constant(repr.tokens().clone());
        let masked = tape.keep_rows(r, self.boundaries[level - 1]);
        let (z_hat, _) = self.decode_on(&mut tape, &self.store, masked)?;
        let zv = tape.constant(z.clone());
        let diff = tape.sub(z_hat, zv);
        let loss = tape.mean_square(diff);
        let grads = tape.backward(loss)?;
        Ok(grads
            .get(r)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(repr.tokens().rows(), repr.tokens().cols())))
    }
}

impl Codec for MetaAE {
    fn n_tokens(&self) -> usize {
        self.config.n_tokens
    }

    fn latent_width(&self) -> usize {
        self.config.d_model
    }

    fn repr_width(&self) -> usize {
        self.config.d_model
    }

    fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    fn encode(&self, z: &LatentSample) -> Result<OrderedRepr> {
        self.check_latent(z.tokens())?;
        let mut tape = Tape::new();
        let zv = tape.constant(z.tokens().clone());
        let r = self.encode_on(&mut tape, &self.store, zv)?;
        OrderedRepr::new(tape.value(r).clone(), self.boundaries.clone())
    }

    fn decode(&self, masked: &Matrix, level: usize) -> Result<DecodeResult> {
        self.check_level(level)?;
        self.check_latent(masked)?;
        let mut tape = Tape::new();
        let m = tape.constant(masked.clone());
        let (z_hat, e_hat) = self.decode_on(&mut tape, &self.store, m)?;
        Ok(DecodeResult::new(tape.value(z_hat).clone(), tape.scalar(e_hat)))
    }

    fn checkpoint_bytes(&self) -> Vec<u8> {
        super::checkpoint::meta_to_bytes(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gradcheck::{check_gradients, GradCheckOptions};

    fn toy_config() -> MetaAEConfig {
        MetaAEConfig {
            n_tokens: 4,
            d_model: 8,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            k_levels: 2,
            lambda_err: 1.0,
            lr: 1e-2,
            batch_size: 2,
            epochs: 1,
            seed: 11,
        }
    }

    fn latent(seed: usize, n: usize, d: usize) -> Matrix {
        Matrix::from_fn(n, d, |r, c| ((seed * 31 + r * d + c) as f64 * 0.61).sin())
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = toy_config();
        c.n_heads = 3;
        assert!(MetaAE::new(c).is_err());
        let mut c = toy_config();
        c.k_levels = 5;
        assert!(MetaAE::new(c).is_err());
        let mut c = toy_config();
        c.lambda_err = -1.0;
        assert!(MetaAE::new(c).is_err());
    }

    #[test]
    fn decode_outputs_are_consistent() {
        let m = MetaAE::new(toy_config()).unwrap();
        let z = LatentSample::new(latent(0, 4, 8)).unwrap();
        let r = m.encode(&z).unwrap();
        assert_eq!(r, m.encode(&z).unwrap());
        let full = m.decode(r.tokens(), 2).unwrap();
        assert_eq!(full, m.decode(&r.prefix_mask(2).unwrap(), 2).unwrap());
        assert!(full.e_hat >= 0.0);
        assert!((full.q - (-full.e_hat).exp()).abs() < 1e-15);
        assert!(m.decode(r.tokens(), 3).is_err());
    }

    #[test]
    fn toy_gradients_match_finite_differences_with_frozen_target() {
        let m = MetaAE::new(toy_config()).unwrap();
        let z1 = latent(1, 4, 8);
        let z2 = latent(2, 4, 8);
        let batch = [(&z1, 1usize), (&z2, 2usize)];
        let mut tape = Tape::new();
        let loss = m.loss_on(&mut tape, m.params(), &batch, None).unwrap();
        let targets: Vec<f64> = loss.samples.iter().map(|s| tape.scalar(s.rec)).collect();
        let report = check_gradients(
            m.params(),
            |tape, store| Ok(m.loss_on(tape, store, &batch, Some(&targets))?.total),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let mut cfg = toy_config();
        cfg.batch_size = 4;
        let data: Vec<LatentSample> = (0..16).map(|i| LatentSample::new(latent(i, 4, 8)).unwrap()).collect();
        let mut a = MetaAE::new(cfg.clone()).unwrap();
        let hist = a
            .fit(&data, &TrainOptions { epochs: Some(20), log_every: 0 })
            .unwrap();
        assert!(hist.last().unwrap() < &hist[0], "{hist:?}");
        let mut b = MetaAE::new(cfg).unwrap();
        b.fit(&data, &TrainOptions { epochs: Some(20), log_every: 0 }).unwrap();
        assert_eq!(a.params().to_checkpoint_bytes(), b.params().to_checkpoint_bytes());
        assert_eq!(a.params().step(), 80);
    }
}
