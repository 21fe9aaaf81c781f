//! The Neyman–Scott panel model: `m` replicates of `n` groups,
//! `x_it = μ_t + ε_it` with `ε_it ~ NIID(0, σ²)`.
//!
//! The naive MLE of `σ²` over `(μ_1, …, μ_n, σ²)` converges to `(m−1)/m·σ²`;
//! the recast estimator built on mean-free Helmert contrasts is unbiased,
//! consistent, and attains the Cramér–Rao bound `2σ⁴/((m−1)n)`.

pub mod error;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod montecarlo;
pub mod optimizer;
pub mod recast;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{
    log_density_full, log_likelihood_kernel, mle_closed_form, score, second_order_check,
    GroupStats, NaiveMle, SecondOrderReport, ThetaFull,
};
pub use model::{generate_panel, make_spec, MeanScheme, ModelSpec, PanelData};
pub use montecarlo::{
    run_bias_experiment, run_consistency_sweep, run_group_mean_experiment, run_sample_path,
    thin_information_diagnostic, DiagnosticReport, EstimatorSummary, ExperimentConfig, SamplePath,
};
pub use optimizer::{
    finite_diff_gradient, maximize_naive_likelihood, OptimizeResult, OptimizerConfig, Termination,
};
pub use recast::{
    difference_transform, fisher_information_sigma2, helmert_transform, sigma2_mle_recast,
    ContrastSeries, RecastEstimate,
};
