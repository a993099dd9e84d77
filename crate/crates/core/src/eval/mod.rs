//! Metrics and the cross-validation harness.

mod cv;
mod metrics;

pub use cv::{
    default_methods, parse_methods, run_cv, CvConfig, CvInputs, EvalReport, Method, MethodReport,
    MethodTiming,
};
pub use metrics::{average_precision, wilcoxon_signed_rank};
