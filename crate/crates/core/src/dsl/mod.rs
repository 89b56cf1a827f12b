//! The contract language: grammar, syntax tree, parser, canonical printer
//! and type checker.
//!
//! ```text
//! contract Name {
//!     attr uint reward;
//!     fn f(uint x) {
//!         start_tx;
//!         requires(msg.sender == owner);
//!         if (!solved) { transfer(owner, reward); reward = msg.value; }
//!         end_tx;
//!     }
//! }
//! ```

pub mod ast;
mod lexer;
mod parser;
mod printer;
mod typecheck;

use thiserror::Error;

pub use ast::Loc;
pub use parser::parse_contract;
pub use printer::{print_contract, print_expr};
pub use typecheck::{typecheck, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{loc}: syntax error: expected {}, found {found}", expected.join(" or "))]
    Syntax { loc: Loc, expected: Vec<String>, found: String },
    #[error("{loc}: duplicate {kind} `{name}`")]
    DuplicateName { name: String, kind: &'static str, loc: Loc },
}

impl ParseError {
    fn syntax<S: Into<String>>(loc: Loc, expected: impl IntoIterator<Item = S>, found: String) -> Self {
        ParseError::Syntax { loc, expected: expected.into_iter().map(Into::into).collect(), found }
    }

    fn duplicate(name: String, kind: &'static str, loc: Loc) -> Self {
        ParseError::DuplicateName { name, kind, loc }
    }
}
