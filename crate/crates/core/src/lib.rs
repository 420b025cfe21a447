pub mod attest;
pub mod circuits;
pub mod classify;
pub mod error;
pub mod features;
pub mod provenance;
pub mod report;
pub mod session;
pub mod sim;
pub mod store;

pub use error::{Error, Result};
