pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod flow;
pub mod forms;
pub mod identities;
pub mod init;
pub mod lattice;
pub mod monitor;
pub mod snapshot;
pub mod tensor;

pub use error::{Error, Result};
