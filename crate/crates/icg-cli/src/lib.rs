//! Library surface of the command-line driver. The binary in `main.rs` is a
//! thin clap dispatcher over these modules; integration tests reuse the
//! report plumbing directly.

pub mod basic;
pub mod bench;
pub mod classify;
pub mod common;
pub mod report;
pub mod study;
