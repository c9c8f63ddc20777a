//! Synthetic data, metrics and experiment runners.

mod cost;
mod curves;
mod e2e;
mod metrics;
mod props;
mod selftest;
mod synthetic;

pub use cost::{run_cost_table, CostRow};
pub use curves::{csv_string, prefix_frames, run_curves, write_csv, CurvePoint, Curves};
pub use e2e::run_e2e;
pub use metrics::{average_ranks, srcc};
pub use props::{
    check_ledger, linear_oracle_check, oracle_specs, oracle_suite, prefix_response, response_is_prefix_causal,
    OracleCheck,
};
pub use selftest::{selftest, SelftestLine};
pub use synthetic::{gen_synthetic, SyntheticSpec};
