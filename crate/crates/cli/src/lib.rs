//! Command-line front end and the review service.

pub mod args;
pub mod commands;
pub mod error;
pub mod http_backend;
pub mod review_server;

pub use args::Cli;
pub use error::CliError;
