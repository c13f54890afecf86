//! Command-line tools and the HTTP evaluation service.

pub mod cli;
pub mod eval;
pub mod service;
