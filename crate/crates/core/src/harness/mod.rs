//! Experiment harness: configuration, Monte-Carlo runs, theorem-bound
//! comparison, privacy audits and result files.

mod audit;
mod bounds;
mod config;
mod experiment;

pub use audit::{run_audit, AuditKind, AuditParams, AuditReport};
pub use bounds::{baseline_bound, theoretical_bound, TheoreticalBound};
pub use config::{
    DistributionFamily, ExperimentConfig, Instance, MatrixFamily, PartialConfig, ProtocolKind,
    StrategyFamily, TWO_SPIKE_GAP,
};
pub use experiment::{
    embedded_config, output_paths, run_experiment, trial_seed, trials_csv, write_outputs,
    BoundCheck, BoundedMetric, ExperimentResult, MetricSummary, TrialRecord,
};
