//! Run configuration, edge-list ingestion, the Monte Carlo runner and CSV emitters.

mod config;
mod edgelist;
mod emit;
mod monte_carlo;

pub use config::{EstimatorKind, RunConfig};
pub use edgelist::{load_edge_list, write_edge_list, EdgeListDataset};
pub use emit::{emit_fn_profile, emit_histogram_csv, emit_summary_csv, fn_profile, write_mc_outputs, FnProfileRow};
pub use monte_carlo::{par_replications, run_monte_carlo, thread_count, McCell, McResult};
