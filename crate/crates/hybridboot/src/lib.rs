pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod experiments;
pub mod idx;

pub use error::{Error, Result};
