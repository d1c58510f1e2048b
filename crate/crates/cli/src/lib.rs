//! Command-line front end: argument handling, the result store and the
//! tabulated reproduction recipe.

pub mod appendix_b;
pub mod commands;
pub mod defaults;
pub mod expr;
pub mod store;

pub use commands::{run, CliError};
