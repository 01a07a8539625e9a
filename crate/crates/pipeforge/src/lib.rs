//! Command-line front end and HTTP service over `pipeforge-core`.

pub mod cli;
pub mod provision;
pub mod service;
