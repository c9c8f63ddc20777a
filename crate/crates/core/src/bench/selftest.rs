use std::fmt;

use super::props::{check_ledger, oracle_suite, prefix_response, response_is_prefix_causal};
use super::{gen_synthetic, SyntheticSpec};
use crate::codec::{Codec, MetaAE, MetaAEConfig, TrainOptions};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SelftestLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<8} {}", self.name, self.detail)
    }
}

fn toy_config(seed: u64) -> MetaAEConfig {
    MetaAEConfig {
        n_tokens: 8,
        d_model: 16,
        n_layers_enc: 1,
        n_layers_dec: 1,
        n_heads: 2,
        k_levels: 4,
        lambda_err: 1.0,
        lr: 1e-3,
        batch_size: 16,
        epochs: 2,
        seed,
    }
}

/// Quick property run: cost ledger, linear oracle, and prefix causality on a
/// briefly trained small model.
pub fn selftest(seed: u64) -> Result<Vec<SelftestLine>> {
    let mut lines = Vec::new();

    let ok = check_ledger(16, 1000);
    lines.push(SelftestLine {
        name: "ledger",
        passed: ok == 16,
        detail: format!("{ok}/16 values of K match Kb and K(K+1)/2 b"),
    });

    let suite = oracle_suite(4)?;
    let inc = suite.iter().map(|(_, c)| c.max_increase).fold(f64::NEG_INFINITY, f64::max);
    let gap = suite.iter().map(|(_, c)| c.max_tail_gap).fold(0.0, f64::max);
    lines.push(SelftestLine {
        name: "oracle",
        passed: inc <= 1e-10 && gap <= 1e-8,
        detail: format!("{} datasets, max step increase {inc:.3e}, max tail gap {gap:.3e}", suite.len()),
    });

    let cfg = toy_config(seed);
    let ds = gen_synthetic(&SyntheticSpec {
        n_samples: 64,
        n_tokens: cfg.n_tokens,
        width: cfg.d_model,
        rank: 6,
        noise_std: 0.05,
        seed,
    })?;
    let mut model = MetaAE::new(cfg)?;
    model.fit(ds.train_split(), &TrainOptions::default())?;
    let mut causal = 0;
    let held = ds.holdout_split();
    for z in held {
        let repr = model.encode(z)?;
        if response_is_prefix_causal(&prefix_response(&model, z.tokens(), &repr, 0.5)?) {
            causal += 1;
        }
    }
    lines.push(SelftestLine {
        name: "prefix",
        passed: causal == held.len(),
        detail: format!("{causal}/{} samples: chunk i moves exactly levels >= i", held.len()),
    });
    Ok(lines)
}
