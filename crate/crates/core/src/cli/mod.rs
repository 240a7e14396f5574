//! Command-line front end: configuration, the scan pipeline and the self-test suite.

pub mod config;
pub mod pipeline;
pub mod selftest;

pub use config::{parse_overrides, ScanConfig};
