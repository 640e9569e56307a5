//! HTTP service, configuration and interactive front ends for the
//! `longdial` agent.

pub mod api;
pub mod config;
pub mod repl;
pub mod service;

pub use api::router;
pub use config::{ConfigError, ServiceConfig};
pub use service::{Service, ServiceError};
