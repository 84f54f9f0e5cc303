#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod examples;
pub mod geneig;
pub mod problems;
pub mod solvers;
pub mod symmat;
pub mod truss;

pub use error::{Error, Result};
