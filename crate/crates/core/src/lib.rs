//! Desk-scale toolkit for building and evaluating a small multilingual
//! decoder-only language model.

pub mod attention;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod instruct;
pub mod kv;
pub mod model;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use error::{Error, ErrorClass, Result};
