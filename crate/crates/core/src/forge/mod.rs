//! Descriptor forge: operator expansion of base features, unit-balanced
//! candidate construction, correlation screening, LASSO sparsification and
//! assembly of the top-ranked candidates into hypotheses.

mod assemble;
mod descriptor;
mod lasso;

pub use assemble::{
    assemble_hypothesis, forge, percentile, write_descriptor_report, ForgeOutcome,
    ForgeSettings, RankedDescriptor,
};
pub use descriptor::{
    combine_descriptors, dimensionless_terms, expand_features, feature_columns, pearson,
    sis_screen, Column, Descriptor, Expansion, Skipped,
};
pub use lasso::{
    center, kkt_violation, lambda_grid, lambda_max, lasso_fit, lasso_path, objective,
    rank_descriptors, soft_threshold, standardize, Design, LassoResult, Standardization,
    MAX_SWEEPS, STANDARDIZATION_TOLERANCE, UPDATE_TOLERANCE,
};

use crate::data::Unit;
use crate::expr::ExprError;

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("no carrier descriptor with unit {0}")]
    NoCarrier(Unit),
    #[error("input not standardized: {0}")]
    NotStandardized(String),
    #[error("lasso: {0}")]
    Lasso(String),
    #[error("empty active set at every lambda")]
    EmptyActiveSet,
    #[error("forge settings: {0}")]
    Config(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
