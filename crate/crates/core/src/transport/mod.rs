//! Message delivery between the three roles.
//!
//! Both backends move encoded frames, so byte counts and payload bits are
//! identical whichever one carries a session. Delivery is FIFO per directed
//! pair; nothing is promised across pairs.

mod bus;
mod frame;
mod tcp;

pub use bus::{in_process_endpoints, BusEndpoint};
pub use frame::{decode_message, encode_message, read_frame, FrameError, HEADER_LEN, MAGIC, VERSION};
pub use tcp::{bind_listener, establish_local_mesh, TcpEndpoint};

use std::time::Duration;

use thiserror::Error;

use crate::protocol::{ProtocolMessage, Role};

/// Environment variable overriding the receive timeout, in milliseconds.
pub const TIMEOUT_ENV: &str = "MSBLS_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(30_000);

/// Receive timeout from `MSBLS_TIMEOUT_MS`, falling back to 30 s.
pub fn timeout_from_env() -> Duration {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_millis)
        .unwrap_or(DEFAULT_TIMEOUT)
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("timed out after {}ms waiting for {peer}", .after.as_millis())]
    Timeout { peer: Role, after: Duration },
    #[error("{peer} disconnected")]
    Disconnected { peer: Role },
    #[error("no channel from {from} to {to}")]
    NoRoute { from: Role, to: Role },
    #[error("connection handshake failed: {0}")]
    Handshake(String),
}

/// One role's view of the network.
pub trait Endpoint: Send {
    fn role(&self) -> Role;

    /// Deliver `msg` to `msg.receiver`; returns the encoded frame length.
    fn send(&mut self, msg: &ProtocolMessage) -> Result<usize, TransportError>;

    /// Next message from `from`, blocking up to the configured timeout.
    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, TransportError>;
}

impl<E: Endpoint + ?Sized> Endpoint for Box<E> {
    fn role(&self) -> Role {
        (**self).role()
    }

    fn send(&mut self, msg: &ProtocolMessage) -> Result<usize, TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, TransportError> {
        (**self).recv(from)
    }
}
