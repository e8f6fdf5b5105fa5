//! Factor-augmented regression for high-dimensional panels.
//!
//! The estimator runs in three stages: observed covariates are filtered out of
//! every series by least squares, latent common factors are extracted from the
//! residual panel by principal components, and the remaining idiosyncratic
//! components are linked to one another through LASSO regressions. The
//! prediction for series `i` combines all three pieces.
//!
//! Alongside the estimator the crate provides max-type tests for structure in
//! high-dimensional covariance and partial-covariance matrices. Their critical
//! values come from a Gaussian bootstrap whose covariance is a kernel (HAC)
//! estimate of the long-run covariance of the moment series.
//!
//! Module map:
//!
//! * [`panel`]: panel container, CSV ingestion, lag matrices.
//! * [`regression`]: OLS, the first-stage filter, autoregressions.
//! * [`factors`]: principal-component factors and factor-count selection.
//! * [`sparse`]: coordinate-descent LASSO and BIC penalty paths.
//! * [`hac`]: kernel long-run covariance estimation.
//! * [`covtest`]: covariance / partial-covariance estimates and structure tests.
//! * [`pipeline`]: the three-stage fit and its prediction equation.
//! * [`simulation`]: the Monte Carlo design and experiment drivers.
//! * [`backtest`]: rolling-window forecasting comparison.

pub mod backtest;
pub mod covtest;
pub mod error;
pub mod factors;
pub mod hac;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod sparse;

pub use error::{FarmError, Result};

pub use backtest::{rank_table, rolling_backtest, BacktestConfig, BacktestReport, Method, RankTable};
pub use covtest::{
    cov_moment_series, cov_structure_test, partial_cov_estimate, pcov_structure_test, sample_cov, IndexSet,
    PartialCovEstimate, StructureTestResult, TestConfig,
};
pub use factors::{
    eigenvalue_ratio_select, ic_select, pca_factors, rotation_matrix, select_factors, FactorEstimate, FactorRule,
    FactorSelection, InfoCriterion,
};
pub use hac::{default_bandwidth, hac_long_run_cov, kernel_weight, HacEstimate, KernelKind, KernelSpec};
pub use panel::{build_lag_matrix, load_panel_csv, write_panel_csv, LaggedDesign, Orientation, PanelData};

pub use pipeline::{farm_fit, farm_predict, stagewise_report, FarmConfig, FarmModel, StagewiseReport};
pub use regression::{ar_fit, ar_forecast, first_stage_filter, ols_fit, ArFit, Covariates, OlsFit};
pub use simulation::{
    run_factor_selection, run_info_gains, run_size_power, simulate_dgp, FactorSelectionRun, GainMethod, InfoGainsRun,
    Scenario, SimulatedPanel, SimulationConfig, SizePowerRun,
};

pub use sparse::{
    fit_many_with_penalty, fit_with_penalty, kkt_check, lasso_fit, lasso_path_bic, LassoConfig, LassoFit, PathConfig,
    PenaltyChoice, PenaltyPath,
};
