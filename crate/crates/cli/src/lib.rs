//! Reporting pieces of the `refloc` command line: benchmark suites and SVG plots.

pub mod bench;
pub mod plot;
