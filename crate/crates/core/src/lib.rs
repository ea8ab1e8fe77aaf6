pub mod client;
pub mod domain;
pub mod error;
pub mod harness;
pub mod models;
pub mod secagg;
pub mod seed;
pub mod server;
pub mod tasks;

pub use error::{Error, Result};
