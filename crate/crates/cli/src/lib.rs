//! Library surface of the experiment runner, shared by the binary and
//! the integration tests.

pub mod config;
pub mod runner;
