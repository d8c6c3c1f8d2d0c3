//! Library surface of the experiment runner, exposed so integration tests
//! drive the exact same code paths as the binary.

pub mod config;
pub mod plot;
pub mod runner;
