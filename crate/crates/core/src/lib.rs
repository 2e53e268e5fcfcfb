//! Missing-value imputation with an iterative random-forest method
//! (MiFoImpute), five baseline imputers, and a benchmark harness that
//! injects MCAR holes and scores imputations by NRMSE and NMAE.

pub mod baselines;
pub mod bench;
pub mod csv_io;
pub mod data;
pub mod error;
pub mod forest;
pub mod inject;
pub mod linalg;
pub mod metrics;
pub mod mifo;

pub use baselines::{knn_impute, lls_impute, mean_impute, svd_impute, svt_impute, BaselineParams};
pub use bench::{
    generate_synthetic, render_report, run_benchmark, run_sweep, BenchmarkGrid, GridConfig, Method,
    MethodParams, Report, ReportFormat, SweepConfig, SweepGrid, SyntheticSpec,
};
pub use data::{ColumnSplit, DataMatrix};
pub use error::{Error, Result};
pub use forest::{fit_forest, oob_error, predict_forest, Features, ForestParams, RegressionForest};
pub use inject::{inject_missing, GroundTruthPair};
pub use linalg::{svd, Matrix, SvdFactors};
pub use metrics::{evaluate, nmae, nrmse, EvaluationReport};
pub use mifo::{
    delta_n, initial_guess, mifo_impute, mifo_impute_observed, sort_columns_by_missingness,
    ImputationResult, InitialGuess, MifoParams,
};
