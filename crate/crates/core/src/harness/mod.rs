//! End-to-end runs, benchmark instances and parameter sweeps.

pub mod instances;
pub mod pipeline;
pub mod sweep;

pub use instances::{lower_bound_instance, make_lower_bound_instance, random_instance, InstanceSpec, LowerBoundInstance};
pub use pipeline::{run_algorithm1, schedule, ExperimentConfig, RunOutcome, RunReport, RunStatus, Schedule};
pub use sweep::{read_rows, sweep, write_rows, SweepRow, SweepSpec};
