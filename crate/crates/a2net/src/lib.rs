//! Storage formats, run reports and the `a2net` command-line tool built on
//! [`a2net_core`].

pub mod a2tn;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod report;

pub use a2tn::{A2tnError, Payload, TensorFile};
pub use error::CliError;
