//! Quality-driven transmission control.

mod decision;
mod ledger;
mod run;
mod session;

pub use decision::{evaluate, predict_terminal_level, Decision, TerminateReason};
pub use ledger::{ledger_compare, CostLedger, LedgerComparison, Scheme};
pub use run::run_session;
pub(crate) use run::{CHUNK_PATH, CLOUD_HOST};
pub use session::{format_session_id, CloudSession, CloudStep, EdgeSession, Round, Transcript};
