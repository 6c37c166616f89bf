//! Command-line driver and HTTP API for the urban-dml pipeline.

pub mod cli;
pub mod server;
