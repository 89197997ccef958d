//! Command-line driver and annotation HTTP service.

pub mod commands;
pub mod config;
pub mod server;
