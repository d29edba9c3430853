//! Demographic fairness audits for biometric verification scores.
//!
//! The crate solves global decision thresholds at fixed FMR operational
//! points, computes per-group FMR / FNMR at those thresholds, and aggregates
//! them into the FDR, IR, and GARBE fairness metrics. A seeded simulator
//! produces biased score scenarios and runs an identify / mitigate /
//! re-evaluate pipeline over them.
//!
//! ```
//! use fairgauge_core::{fdr, garbe, ir};
//!
//! let fmr = [0.2003, 0.1827, 0.0567, 0.0725, 0.0328, 0.0550];
//! let fnmr = [0.0053, 0.0040, 0.0068, 0.0147, 0.0080, 0.0060];
//! assert!((fdr(&fmr, &fnmr, 0.5).unwrap() - 0.911).abs() < 1e-3);
//! assert!((garbe(&fmr, &fnmr, 0.5).unwrap() - 0.345).abs() < 1e-3);
//! assert!(ir(&fmr, &fnmr, 0.5).unwrap() > 4.7);
//! ```

pub mod commands;
pub mod error;
pub mod fairness;
pub mod numfmt;
pub mod rate_engine;
pub mod report;
pub mod score_model;
pub mod sim;

pub use error::{FairError, Result};
pub use fairness::{
    fdr, garbe, gini, ir, metric_suite, FairnessConfig, FairnessReport, MetricRow,
};
pub use rate_engine::{
    group_rates, group_rates_at, solve_all, solve_threshold, OperationalPoints, ThresholdEntry,
    ThresholdSet,
};
pub use report::{emit_report, Format, Report};
pub use score_model::{
    parse_comparisons, parse_rate_table, validate_set, ComparisonRecord, ComparisonSet,
    GroupRateTable, ValidationReport,
};
pub use sim::{
    apply_mitigation, generate_scenario, identify_bias, run_pipeline, BiasPolicy,
    GroupDistribution, MitigationMode, MitigationSpec, PipelineReport, ScenarioSpec,
};
