//! Covariate-targeted subsampling.
//!
//! Draws a subsample from a large source cohort whose joint distribution of
//! binned continuous and categorical covariates matches a smaller target
//! cohort, checks per-variable alignment with Kolmogorov–Smirnov and
//! 1-Wasserstein permutation tests, searches for the largest aligned size,
//! and evaluates score discrimination (ROC/AUC with DeLong variance) on the
//! aligned subsamples.

pub mod cli;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use cohort::{
    build_strata, label_record, CategoricalSpec, Cohort, ColumnRole, ColumnRoles, ContinuousSpec,
    CovariateSchema, LoadOptions, Record, StratumKey, StratumTable,
};
pub use error::{Error, Result};
pub use eval::{
    auc, auc_result, auc_trajectory, compare_auc_independent, compare_auc_paired, delong_variance,
    roc_curve, stratified_auc, AucResult, ScoredOutcome, StrataDef, TrajectoryResult,
};
pub use metrics::{
    compare_all, encode_variable, kolmogorov_sf, ks_distance, ks_pvalue, permutation_pvalue,
    wasserstein1, AlignmentReport, Sample, TestMethod, TestResult,
};
pub use sampler::{
    assess_size, draw_subsample, max_aligned_size, sweep, target_proportions, AlignmentConfig,
    Aligner, PassRule, SubsampleResult, SweepResult,
};
pub use synth::{generate_cohort, generate_scores, PopulationSpec};
