use std::ops::RangeInclusive;

use serde::Serialize;

use crate::control::ledger_compare;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub k: usize,
    pub chunk_bytes: u64,
    pub progressive: u64,
    pub non_progressive: u64,
    pub ratio: f64,
    pub progressive_kib: f64,
    pub non_progressive_kib: f64,
}

/// Progressive against full-retransmission totals for each `K`.
pub fn run_cost_table(k_range: RangeInclusive<usize>, chunk_bytes: u64) -> Result<Vec<CostRow>> {
    if *k_range.start() == 0 || chunk_bytes == 0 {
        return Err(Error::argument("K must start at 1 and chunk size must be positive"));
    }
    k_range
        .map(|k| {
            let c = ledger_compare(k, chunk_bytes);
            let ratio = c.non_progressive_total as f64 / c.progressive_total as f64;
            if ratio != (k as f64 + 1.0) / 2.0 {
                return Err(Error::Numeric {
                    direction: k,
                    message: format!("cost ratio {ratio} differs from (K+1)/2"),
                });
            }
            Ok(CostRow {
                k,
                chunk_bytes,
                progressive: c.progressive_total,
                non_progressive: c.non_progressive_total,
                ratio,
                progressive_kib: c.progressive_total as f64 / 1024.0,
                non_progressive_kib: c.non_progressive_total as f64 / 1024.0,
            })
        })
        .collect()
}
