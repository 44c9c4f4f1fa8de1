//! The SQL frontend: tokenizer, parser, unparser, and binder for the
//! extended dialect (SELECT plus PREDICT blocks and model statements).
//!
//! Parsing and unparsing are pure; binding reads the catalog to resolve
//! tables, columns, and model versions. `USING MODEL` resolves to the
//! latest registered version at bind time.

pub mod ast;
pub mod binder;
mod lexer;
mod parser;
mod unparse;

pub use binder::{
    bind, BindError, BoundAgg, BoundCore, BoundCreateModel, BoundFrom, BoundJoin, BoundPredict,
    BoundPredictSpec, BoundSelect, BoundSource, BoundStatement, CoreKind,
};
pub use parser::{parse, parse_all};
pub use unparse::unparse;

use thiserror::Error;

/// Parse error with the 1-based position of the offending token.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: expected {}, found {found}", expected.join(" | "))]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub expected: Vec<String>,
    pub found: String,
}
