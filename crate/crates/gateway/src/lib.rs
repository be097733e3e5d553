//! Live dispatch daemon.
//!
//! Clients send newline-delimited JSON requests over TCP. Each request is
//! routed by the configured policy against the live RTT belief, executed on
//! the local edge executor or shipped to the cloud stub, and answered with
//! the decision and the latency actually charged. Every decision is appended
//! to a CSV log that [`cnmt_core::replay::replay`] can re-check offline.

pub mod cloud;
mod coordinator;
pub mod protocol;
mod server;
pub mod timing;

pub use cloud::{CloudStub, CloudStubConfig};
pub use protocol::{ErrorFrame, StatsSnapshot, WireRequest, WireResponse};
pub use server::{Gateway, GatewayConfig};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("decision log: {0}")]
    Log(#[from] csv::Error),
    #[error("gateway is shut down")]
    Closed,
}

pub(crate) fn default_time_scale() -> f64 {
    1.0
}

pub(crate) fn check_time_scale(scale: f64) -> Result<(), GatewayError> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(GatewayError::Config(format!(
            "time_scale must be > 0, got {scale}"
        )))
    }
}
