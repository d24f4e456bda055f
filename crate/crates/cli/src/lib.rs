//! Command-line front end: channel spec files, command dispatch and reports.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;
pub mod spec_file;
