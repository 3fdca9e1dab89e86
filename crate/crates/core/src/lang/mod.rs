//! Surface syntax, abstract syntax, functional-parameter expansion and kind checking.

pub mod ast;
pub mod expand;
pub mod kind;
pub mod parser;
pub mod pretty;

use thiserror::Error;

pub use ast::{Expr, FunctionDecl, Program};
pub use expand::expand_functional_params;
pub use kind::{kind_check, Kind, KindError, KindReport, LocalType};
pub use parser::{parse, parse_expr, parse_library};
pub use pretty::{pretty_expr, pretty_program};

/// Errors raised while reading or rewriting programs.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LangError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("misplaced reserved word `{word}` at {line}:{column}")]
    UnknownConstruct {
        line: usize,
        column: usize,
        word: String,
    },
    #[error("program has no main expression")]
    MissingMain,
    #[error("function `{0}` declared twice")]
    DuplicateFunction(String),
    #[error("parameter `{param}` repeated in `{function}`")]
    DuplicateParameter { function: String, param: String },
    #[error("unbound variable `{name}` in {context}")]
    UnboundVariable { name: String, context: String },
    #[error("extended function `{name}` passed as a functional argument in `{context}`")]
    IllegalFunctionalArgument { name: String, context: String },
    #[error("`{function}` expects {expected} functional arguments, got {found}")]
    FunctionalArity {
        function: String,
        expected: usize,
        found: usize,
    },
    #[error("`{function}` expects {expected} arguments, got {found}")]
    Arity {
        function: String,
        expected: usize,
        found: usize,
    },
    #[error("generated instance name `{0}` collides with a declared function")]
    NameCollision(String),
    #[error("expansion of `{function}` exceeded its bound of {bound} instances")]
    InstanceBound { function: String, bound: usize },
}
