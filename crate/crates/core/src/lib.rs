//! Engine for synthesizing native SQL functions into an existing database
//! code base.
//!
//! The crate is organised as a pipeline:
//!
//! * [`index`] scans a repository into a symbol index and applies edits,
//! * [`characterize`] builds declarations, reference graphs, pruned unit
//!   templates and reference units for existing functions,
//! * [`planning`] generates and scores coding plans,
//! * [`synthesis`] fills templates (or writes from scratch) under the
//!   failure-driven mode adaptation,
//! * [`validation`] runs the syntax, compliance and semantic stages,
//! * [`orchestration`] wraps every operation as a tool and drives a session
//!   with trajectory memory,
//! * [`llm`] is the replayable chat-completion gateway.

pub mod characterize;
pub mod config;
pub mod error;
pub mod eval;
pub mod exec;
pub mod index;
pub mod lexer;
pub mod llm;
pub mod orchestration;
pub mod planning;
pub mod profile;
pub mod synthesis;
pub mod util;
pub mod validation;

pub use error::{Error, Result};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
