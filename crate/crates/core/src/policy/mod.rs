//! Router policy language: syntax, evaluation and containment.

pub mod ast;
pub mod containment;
pub mod eval;
pub mod model;
pub mod parser;
pub mod version;

use alloc::string::String;

use thiserror::Error;

pub use ast::{CmpOp, ConstDecl, ConstValue, Formula, Func, Policy, Sort, Term, VarDecl};
pub use containment::{
    check_by_enumeration, check_by_homomorphism, check_containment, is_conjunctive,
    ContainmentBounds, Verdict,
};
pub use eval::{eval_path_policy, eval_router_policy, path_violations, CompiledPolicy};
pub use model::{
    decode_router_setup, encode_router_setup, PathModel, RouterSetup, SetupRecord,
    SoftwareComponent, SwidRecord,
};
pub use parser::{check_router_policy, parse_formula, parse_policy};
pub use version::{compare_versions, Version, VersionError, VersionScheme};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("sort error: `{term}` expected {expected}, found {found}")]
    Sort { term: String, expected: String, found: String },
    #[error("constant `{0}` has no value")]
    UnboundConstant(String),
    #[error("not a router policy: {0}")]
    NotRouterPolicy(String),
}
