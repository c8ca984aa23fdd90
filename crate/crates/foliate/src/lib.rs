//! Command-line front end, manifest format and acceptance suite for
//! `foliate-core`.

pub mod cli;
pub mod error;
pub mod manifest;
pub mod report;
pub mod suite;
pub mod trace;
