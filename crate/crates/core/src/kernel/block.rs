use rand::Rng;

use super::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Parameters of one pre-norm transformer block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub d_model: usize,
    pub n_heads: usize,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl BlockParams {
    /// Registers a block under `prefix` with fan-in uniform weights, zero
    /// biases and unit norm scales. The MLP hidden width is `4 * d_model`.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::config(format!(
                "head count {n_heads} must divide model width {d_model}"
            )));
        }
        let d = d_model;
        let hidden = 4 * d;
        let mut w = |store: &mut ParamStore, name: &str, r: usize, c: usize| {
            store.add_fan_in_uniform(format!("{prefix}.{name}"), r, c, r, rng)
        };
        let wq = w(store, "attn.wq", d, d)?;
        let wk = w(store, "attn.wk", d, d)?;
        let wv = w(store, "attn.wv", d, d)?;
        let wo = w(store, "attn.wo", d, d)?;
        let w1 = w(store, "mlp.w1", d, hidden)?;
        let w2 = w(store, "mlp.w2", hidden, d)?;
        let z = |store: &mut ParamStore, name: &str, c: usize, v: f64| {
            store.add(format!("{prefix}.{name}"), Matrix::filled(1, c, v))
        };
        Ok(BlockParams {
            d_model,
            n_heads,
            ln1_gamma: z(store, "ln1.gamma", d, 1.0)?,
            ln1_beta: z(store, "ln1.beta", d, 0.0)?,
            wq,
            bq: z(store, "attn.bq", d, 0.0)?,
            wk,
            bk: z(store, "attn.bk", d, 0.0)?,
            wv,
            bv: z(store, "attn.bv", d, 0.0)?,
            wo,
            bo: z(store, "attn.bo", d, 0.0)?,
            ln2_gamma: z(store, "ln2.gamma", d, 1.0)?,
            ln2_beta: z(store, "ln2.beta", d, 0.0)?,
            w1,
            b1: z(store, "mlp.b1", hidden, 0.0)?,
            w2,
            b2: z(store, "mlp.b2", d, 0.0)?,
        })
    }

    /// Rebinds the ids of a block registered under `prefix` in `store`.
    pub fn lookup(store: &ParamStore, prefix: &str, d_model: usize, n_heads: usize) -> Result<Self> {
        let id = |name: &str| {
            store
                .id(&format!("{prefix}.{name}"))
                .ok_or_else(|| Error::config(format!("missing parameter {prefix}.{name}")))
        };
        Ok(BlockParams {
            d_model,
            n_heads,
            ln1_gamma: id("ln1.gamma")?,
            ln1_beta: id("ln1.beta")?,
            wq: id("attn.wq")?,
            bq: id("attn.bq")?,
            wk: id("attn.wk")?,
            bk: id("attn.bk")?,
            wv: id("attn.wv")?,
            bv: id("attn.bv")?,
            wo: id("attn.wo")?,
            bo: id("attn.bo")?,
            ln2_gamma: id("ln2.gamma")?,
            ln2_beta: id("ln2.beta")?,
            w1: id("mlp.w1")?,
            b1: id("mlp.b1")?,
            w2: id("mlp.w2")?,
            b2: id("mlp.b2")?,
        })
    }
}

/// Pre-norm multi-head self-attention with residual, then a pre-norm
/// GELU MLP with residual. Input and output are `N × d_model`.
pub fn forward_block(tape: &mut Tape, store: &ParamStore, input: Var, p: &BlockParams) -> Result<Var> {
    let (_, d) = tape.value(input).shape();
    if d != p.d_model {
        return Err(Error::config(format!(
            "block expects width {}, got {d}",
            p.d_model
        )));
    }
    if p.n_heads == 0 || d % p.n_heads != 0 {
        return Err(Error::config(format!(
            "head count {} must divide model width {d}",
            p.n_heads
        )));
    }
    let head_dim = d / p.n_heads;
    let mut param = |id| tape.param(store, id);
    let (g1, b1n) = (param(p.ln1_gamma), param(p.ln1_beta));
    let (wq, bq, wk, bk) = (param(p.wq), param(p.bq), param(p.wk), param(p.bk));
    let (wv, bv, wo, bo) = (param(p.wv), param(p.bv), param(p.wo), param(p.bo));
    let (g2, b2n) = (param(p.ln2_gamma), param(p.ln2_beta));
    let (w1, b1, w2, b2) = (param(p.w1), param(p.b1), param(p.w2), param(p.b2));

    let h = tape.layer_norm(input, g1, b1n);
    let q = tape.matmul(h, wq);
    let q = tape.add_row(q, bq);
    let k = tape.matmul(h, wk);
    let k = tape.add_row(k, bk);
    let v = tape.matmul(h, wv);
    let v = tape.add_row(v, bv);

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut heads = Vec::with_capacity(p.n_heads);
    for head in 0..p.n_heads {
        let start = head * head_dim;
        let qh = tape.slice_cols(q, start, head_dim);
        let kh = tape.slice_cols(k, start, head_dim);
        let vh = tape.slice_cols(v, start, head_dim);
        let scores = tape.matmul_nt(qh, kh);
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax_rows(scores);
        heads.push(tape.matmul(attn, vh));
    }
    let merged = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)
    };
    let attn_out = tape.matmul(merged, wo);
    let attn_out = tape.add_row(attn_out, bo);
    let x1 = tape.add(input, attn_out);

    let h2 = tape.layer_norm(x1, g2, b2n);
    let hidden = tape.matmul(h2, w1);
    let hidden = tape.add_row(hidden, b1);
    let hidden = tape.gelu(hidden);
    let mlp = tape.matmul(hidden, w2);
    let mlp = tape.add_row(mlp, b2);
    Ok(tape.add(x1, mlp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gradcheck::{check_gradients, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(d: usize, heads: usize, seed: u64) -> (ParamStore, BlockParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = BlockParams::init(&mut store, "blk", d, heads, &mut rng).unwrap();
        (store, p)
    }

    #[test]
    fn zero_weights_are_residual_identity() {
        let (mut store, p) = block(8, 2, 1);
        for id in [p.wq, p.wk, p.wv, p.wo, p.w1, p.w2] {
            store.value_mut(id).fill(0.0);
        }
        let x = Matrix::from_fn(1, 8, |_, c| c as f64 * 0.3 - 1.0);
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let out = forward_block(&mut tape, &store, input, &p).unwrap();
        assert_eq!(tape.value(out), &x);
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let (store, p) = block(8, 2, 1);
        let mut tape = Tape::new();
        let input = tape.constant(Matrix::zeros(3, 6));
        assert!(matches!(
            forward_block(&mut tape, &store, input, &p),
            Err(Error::Config(_))
        ));
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(BlockParams::init(&mut store, "b", 8, 3, &mut rng).is_err());
    }

    #[test]
    fn three_token_block_gradients_match_finite_differences() {
        let (store, p) = block(8, 2, 7);
        let x = Matrix::from_fn(3, 8, |r, c| ((r * 8 + c) as f64 * 0.77).sin());
        let target = Matrix::from_fn(3, 8, |r, c| ((r + 2 * c) as f64 * 0.31).cos());
        let report = check_gradients(
            &store,
            |tape, store| {
                let input = tape.constant(x.clone());
                let out = forward_block(tape, store, input, &p)?;
                let t = tape.constant(target.clone());
                let diff = tape.sub(out, t);
                Ok(tape.mean_square(diff))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
        assert_eq!(report.per_param.len(), store.len());
    }
}
