//! Scripted environment simulation, workload generation and benchmarks.
mod bench;
mod scenario;
mod workload;

pub use bench::{parse_csv, run_bench, spearman, to_csv, BenchConfig, BenchRow, CSV_HEADER};
pub use scenario::{
    parse_script, run_scenario, EnvEvent, EventKind, ScriptError, SimConfig, Trace, TraceRecord,
};
pub use workload::{continuum_workload, generate_workload, Workload, WorkloadSpec};
