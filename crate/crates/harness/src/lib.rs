//! Experiment harness for the hsketch sketches: synthetic turnstile
//! workloads with exact ground truth, trial orchestration across schemes,
//! CSV output and summaries.

pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod summary;
pub mod workload;

pub use error::{HarnessError, Result};
pub use experiment::{
    run_experiment, write_rows, ExperimentConfig, Quantity, Row, Scheme, Task, CSV_HEADER,
};
pub use summary::{read_rows_from, summarize, SummaryRow, SummaryTable};
pub use workload::{
    gen_stream, gen_union, Stream, TruthTable, UnionSpec, Update, ValueDomain, WorkloadSpec,
};
