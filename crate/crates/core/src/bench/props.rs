//! Checks of the three framework properties, shared by `selftest` and tests.

use serde::Serialize;

use super::{gen_synthetic, SyntheticSpec};
use crate::codec::{fit_linear_oracle, Codec, Dataset, LinearOrthoCodec, MetaAE};
use crate::control::ledger_compare;
use crate::kernel::Matrix;
use crate::repr::{chunk_range, make_boundaries, OrderedRepr};
use crate::Result;

/// `response[i][ℓ]`: whether perturbing chunk `i+1` changed the level-`ℓ+1` loss.
pub fn prefix_response(model: &MetaAE, z: &Matrix, repr: &OrderedRepr, delta: f64) -> Result<Vec<Vec<bool>>> {
    let k = repr.levels();
    let base: Vec<f64> = (1..=k).map(|l| model.level_loss(repr, z, l)).collect::<Result<_>>()?;
    (1..=k)
        .map(|i| {
            let (start, end) = chunk_range(repr.boundaries(), i);
            let mut tokens = repr.tokens().clone();
            // A shift that is constant along a row would vanish under layer
            // norm, so the perturbation varies across columns.
            for r in start..end {
                for (c, v) in tokens.row_mut(r).iter_mut().enumerate() {
                    *v += delta * ((r * 13 + c * 7) as f64 * 0.37 + 0.5).sin();
                }
            }
            let moved = OrderedRepr::new(tokens, repr.boundaries().to_vec())?;
            (1..=k)
                .map(|l| Ok(model.level_loss(&moved, z, l)? != base[l - 1]))
                .collect()
        })
        .collect()
}

/// True when chunk `i` moves exactly the losses of levels `ℓ ≥ i`.
pub fn response_is_prefix_causal(response: &[Vec<bool>]) -> bool {
    let k = response.len();
    response.iter().enumerate().all(|(i, row)| {
        row.iter().enumerate().all(|(l, &changed)| changed == (l >= i))
            && row.iter().filter(|&&c| c).count() == k - i
    })
}

/// Checks ledger totals for `K = 1..=k_max`; returns how many values of `K` passed.
pub fn check_ledger(k_max: usize, chunk_bytes: u64) -> usize {
    (1..=k_max)
        .filter(|&k| {
            let c = ledger_compare(k, chunk_bytes);
            let k64 = k as u64;
            c.progressive_total == k64 * chunk_bytes
                && c.non_progressive_total == k64 * (k64 + 1) / 2 * chunk_bytes
                && (k == 1 || c.progressive_total < c.non_progressive_total)
        })
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub level_errors: Vec<f64>,
    pub tail_sums: Vec<Option<f64>>,
    /// Largest step-to-step increase in mean error (negative when strictly decreasing).
    pub max_increase: f64,
    /// Largest `|error − tail sum|` over levels with a defined tail sum.
    pub max_tail_gap: f64,
}

/// Mean reconstruction error of the linear codec over `dataset` per level.
pub fn linear_oracle_check(codec: &LinearOrthoCodec, dataset: &Dataset) -> Result<OracleCheck> {
    let k = codec.levels();
    let mut errs = vec![0.0; k];
    for z in dataset.samples() {
        let repr = codec.encode(z)?;
        for (l, e) in errs.iter_mut().enumerate() {
            *e += codec.decode_exact(&repr.prefix_mask(l + 1)?, l + 1, z.tokens())?.e_hat;
        }
    }
    let n = dataset.len() as f64;
    errs.iter_mut().for_each(|e| *e /= n);
    let tails: Vec<Option<f64>> = (1..=k).map(|l| codec.eigen_tail_error(l)).collect();
    let max_increase = errs.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_tail_gap = errs
        .iter()
        .zip(&tails)
        .filter_map(|(e, t)| t.map(|t| (e - t).abs()))
        .fold(0.0, f64::max);
    Ok(OracleCheck {
        level_errors: errs,
        tail_sums: tails,
        max_increase,
        max_tail_gap,
    })
}

/// Small datasets covering low rank, full rank, and noisy cases.
pub fn oracle_specs() -> Vec<SyntheticSpec> {
    let base = SyntheticSpec {
        n_samples: 96,
        n_tokens: 8,
        width: 16,
        rank: 2,
        noise_std: 0.0,
        seed: 11,
    };
    vec![
        base.clone(),
        SyntheticSpec {
            rank: 16,
            seed: 12,
            ..base.clone()
        },
        SyntheticSpec {
            rank: 6,
            noise_std: 0.1,
            seed: 13,
            ..base.clone()
        },
        SyntheticSpec {
            n_tokens: 16,
            width: 32,
            rank: 16,
            noise_std: 0.05,
            n_samples: 64,
            seed: 14,
        },
    ]
}

/// Fits the oracle to each spec at `k` levels and checks it.
pub fn oracle_suite(k: usize) -> Result<Vec<(SyntheticSpec, OracleCheck)>> {
    oracle_specs()
        .into_iter()
        .map(|spec| {
            let ds = gen_synthetic(&spec)?;
            let codec = fit_linear_oracle(&ds, &make_boundaries(spec.n_tokens, k)?, spec.seed)?;
            let check = linear_oracle_check(&codec, &ds)?;
            Ok((spec, check))
        })
        .collect()
}
