//! Pick-an-object (PAO) mechanisms, generalized deferred acceptance,
//! OSP millipede games and exhaustive checkers for allocation-rule axioms.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod osp;
pub mod properties;
pub mod rules;
pub mod session;
pub mod strategies;
pub mod table;

pub use error::{Error, Result};
