//! Three-party generation of the joint mapped features.
//!
//! Client A holds `X_A`, client B holds `X_B`, and each holds one half of the
//! mapping key (`W_A`, `W_B`). The server holds masks and the mixing key
//! `W₁`. Twelve messages later the server owns
//!
//! ```text
//! Zⁿ = [[X̄_A W_A, X̄_A W_B], [X̄_B W_A, X̄_B W_B]] W₁
//! ```
//!
//! without having seen `X̄_A`, `X̄_B`, `W_A` or `W_B`, and neither client has
//! seen the other's data or key half.

mod message;
mod ops;
mod party;
mod session;

pub use message::{
    inbound_schedule, schedule_entry, MessageKind, ProtocolMessage, Role, ScheduleEntry, SessionId,
    MESSAGES_PER_SESSION, SCHEDULE,
};
pub use ops::{
    assemble_mapped_features, blind_data, blind_key_and_product, draw_masks, own_product, server_recover_cross,
    unblind_product, MaskConfig, MaskSet, PassMasks, ProductBlocks,
};
pub use party::{server_init, ClientParty, MixKeySource, PartyMachine, ServerParty};
pub use session::{
    run_party, run_protocol, run_protocol_detailed, run_protocol_in_process, ClientInput, PartyOutcome, SessionAbort,
    SessionOutput, TranscriptEntry,
};

use thiserror::Error;

use crate::numerics::NumericsError;
use crate::transport::TransportError;

/// Public session metadata every party agrees on before the first message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionParams {
    pub session_id: SessionId,
    /// N_A
    pub rows_a: usize,
    /// N_B
    pub rows_b: usize,
    /// d, feature count before augmentation.
    pub input_dim: usize,
    /// n · d_z
    pub mapped_width: usize,
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.rows_a == 0 || self.rows_b == 0 || self.input_dim == 0 {
            return Err(ProtocolError::Config(format!(
                "row counts and input dimension must be positive (N_A={}, N_B={}, d={})",
                self.rows_a, self.rows_b, self.input_dim
            )));
        }
        if self.mapped_width == 0 || !self.mapped_width.is_multiple_of(2) {
            return Err(ProtocolError::Config(format!(
                "mapped width n*d_z = {} must be positive and even",
                self.mapped_width
            )));
        }
        Ok(())
    }

    /// n · d_z / 2
    pub fn half_width(&self) -> usize {
        self.mapped_width / 2
    }

    pub fn rows_of(&self, role: Role) -> usize {
        match role {
            Role::ClientB => self.rows_b,
            _ => self.rows_a,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("{role} aborted at seq {seq}: {source}")]
    Transport {
        role: Role,
        seq: u16,
        #[source]
        source: TransportError,
    },
    #[error("{role} aborted: expected seq {expected}, received seq {got}")]
    OutOfOrder { role: Role, expected: u16, got: u16 },
    #[error("{role} aborted at seq {seq}: {detail}")]
    Unexpected { role: Role, seq: u16, detail: String },
    #[error("{role} aborted at seq {seq}: {source}")]
    Computation {
        role: Role,
        seq: u16,
        #[source]
        source: NumericsError,
    },
    #[error("{role} party thread panicked")]
    Panicked { role: Role },
}

impl ProtocolError {
    /// Role that raised the error, if any.
    pub fn role(&self) -> Option<Role> {
        match self {
            ProtocolError::Config(_) => None,
            ProtocolError::Transport { role, .. }
            | ProtocolError::OutOfOrder { role, .. }
            | ProtocolError::Unexpected { role, .. }
            | ProtocolError::Computation { role, .. }
            | ProtocolError::Panicked { role } => Some(*role),
        }
    }

    /// Sequence number the error was raised at, if known.
    pub fn seq(&self) -> Option<u16> {
        match self {
            ProtocolError::Transport { seq, .. }
            | ProtocolError::Unexpected { seq, .. }
            | ProtocolError::Computation { seq, .. } => Some(*seq),
            ProtocolError::OutOfOrder { expected, .. } => Some(*expected),
            _ => None,
        }
    }

    /// True when the error is only a consequence of a peer going away.
    pub fn is_peer_failure(&self) -> bool {
        matches!(
            self,
            ProtocolError::Transport {
                source: TransportError::Disconnected { .. },
                ..
            }
        )
    }
}

impl From<NumericsError> for ProtocolError {
    fn from(e: NumericsError) -> Self {
        ProtocolError::Config(e.to_string())
    }
}
