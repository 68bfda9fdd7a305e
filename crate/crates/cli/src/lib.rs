//! Library half of the `heis` binary: settings, verifier suites and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod json;
pub mod report;
pub mod suites;
