//! Organizer-facing surfaces over the sensing engine: the `pms` command line
//! and an HTTP/WebSocket API. Both go through [`ops`].

pub mod cli;
pub mod config;
pub mod error;
pub mod http;
pub mod ops;

pub use error::ApiError;
