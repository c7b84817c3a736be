//! Importance estimators and Wald-statistic p-values.

mod loco;
mod loss;
mod marginal;
mod permutation;
mod report;
mod wald;

pub use loco::{loco_importance, loco_variable};
pub use loss::{per_sample_loss, LossMatrix};
pub use marginal::marginal_importance;
pub use permutation::{
    conditional_loss_matrix, cpi_importance, cpi_single, cpi_with_samplers, fit_fold_samplers, marginal_loss_matrix, pi_importance,
    pi_single, CpiConfig,
};
pub use report::{Flag, ImportanceReport, Method, VariableImportance};
pub use wald::{summarize_losses, wald_pvalue, LossSummary, Wald, WaldMode};

/// Permutations per variable when not configured.
pub const DEFAULT_B: usize = 50;
