//! Hypotheses as typed expression trees: parsing, printing, evaluation,
//! parameter gradients, unit inference and canonical forms.

mod ast;
mod canonical;
mod eval;
mod hypothesis;
mod parse;
mod units;

use std::fmt;

pub use ast::{BinOp, Expr, UnaryOp};
pub use canonical::canonical_form;
pub use eval::{Node, NodePath};
pub use hypothesis::{
    bundled_hypotheses, bundled_hypotheses_json, from_unconstrained, load_hypotheses,
    parse_hypotheses, to_unconstrained, write_hypotheses, Constrained, Hypothesis,
    HypothesisFile, HypothesisSpec, MeanInputs, ParamPrior, PriorKind,
};
pub use parse::parse;
pub use units::infer_unit;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at offset {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum ExprError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unbound name `{0}`")]
    Unbound(String),
    #[error("unknown input variable `{0}`")]
    UnknownVariable(String),
    #[error("domain error at {path}: {message}")]
    Domain { path: NodePath, message: String },
    #[error("not differentiable at {path}: {message}")]
    NonDifferentiable { path: NodePath, message: String },
    #[error("unit error: {0}")]
    Unit(String),
    #[error("prior error: {0}")]
    Prior(String),
    #[error("hypothesis file: {0}")]
    File(String),
}
