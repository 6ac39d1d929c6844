//! Command-line front end and batch HTTP service over `pulsekit-core`.

pub mod cli;
pub mod config;
pub mod server;
