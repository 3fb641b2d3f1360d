use std::fmt;

use serde::{Deserialize, Serialize};

use crate::numerics::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Server,
    ClientA,
    ClientB,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Server, Role::ClientA, Role::ClientB];

    pub fn code(self) -> u8 {
        match self {
            Role::Server => 0,
            Role::ClientA => 1,
            Role::ClientB => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Role> {
        match code {
            0 => Some(Role::Server),
            1 => Some(Role::ClientA),
            2 => Some(Role::ClientB),
            _ => None,
        }
    }

    /// The other data-holding client.
    pub fn peer_client(self) -> Option<Role> {
        match self {
            Role::ClientA => Some(Role::ClientB),
            Role::ClientB => Some(Role::ClientA),
            Role::Server => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Server => "server",
            Role::ClientA => "client-a",
            Role::ClientB => "client-b",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "server" | "s" => Ok(Role::Server),
            "client-a" | "a" => Ok(Role::ClientA),
            "client-b" | "b" => Ok(Role::ClientB),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Message kinds. Within one cross-product pass the "data holder" is the
/// client whose rows are being multiplied and the "key holder" owns the key
/// half; the second pass swaps the clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// `R_A` from the server to the data holder.
    DataMask,
    /// `(R_B, R_b)` from the server to the key holder.
    KeyMasks,
    /// `X* = X̄ + R_A`, data holder to key holder.
    BlindedData,
    /// `(W* = W + R_B, E₁ = X* W + R_b)`, key holder to data holder.
    BlindedKeyAndE1,
    /// `E₂ = E₁ − R_A W*`, data holder to server.
    E2,
    /// `X̄_A W_A` from client A.
    OwnProductA,
    /// `X̄_B W_B` from client B.
    OwnProductB,
}

impl MessageKind {
    pub fn code(self) -> u8 {
        match self {
            MessageKind::DataMask => 1,
            MessageKind::KeyMasks => 2,
            MessageKind::BlindedData => 3,
            MessageKind::BlindedKeyAndE1 => 4,
            MessageKind::E2 => 5,
            MessageKind::OwnProductA => 6,
            MessageKind::OwnProductB => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => MessageKind::DataMask,
            2 => MessageKind::KeyMasks,
            3 => MessageKind::BlindedData,
            4 => MessageKind::BlindedKeyAndE1,
            5 => MessageKind::E2,
            6 => MessageKind::OwnProductA,
            7 => MessageKind::OwnProductB,
            _ => return None,
        })
    }

    pub fn payload_count(self) -> usize {
        match self {
            MessageKind::KeyMasks | MessageKind::BlindedKeyAndE1 => 2,
            _ => 1,
        }
    }
}

/// 128-bit session identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionId(pub u128);

impl SessionId {
    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        SessionId(u128::from_be_bytes(bytes))
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub session_id: SessionId,
    pub seq: u16,
    pub sender: Role,
    pub receiver: Role,
    pub kind: MessageKind,
    pub payloads: Vec<RealMatrix>,
}

/// One row of the fixed message schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub seq: u16,
    pub sender: Role,
    pub receiver: Role,
    pub kind: MessageKind,
}

const fn entry(seq: u16, sender: Role, receiver: Role, kind: MessageKind) -> ScheduleEntry {
    ScheduleEntry {
        seq,
        sender,
        receiver,
        kind,
    }
}

/// Number of matrix-bearing messages in every session.
pub const MESSAGES_PER_SESSION: usize = 12;

/// Seq 1-5 compute `X̄_A W_B`, seq 6-10 mirror them for `X̄_B W_A`, seq 11
/// and 12 carry the diagonal products.
pub const SCHEDULE: [ScheduleEntry; MESSAGES_PER_SESSION] = {
    use MessageKind::*;
    use Role::*;
    [
        entry(1, Server, ClientA, DataMask),
        entry(2, Server, ClientB, KeyMasks),
        entry(3, ClientA, ClientB, BlindedData),
        entry(4, ClientB, ClientA, BlindedKeyAndE1),
        entry(5, ClientA, Server, E2),
        entry(6, Server, ClientB, DataMask),
        entry(7, Server, ClientA, KeyMasks),
        entry(8, ClientB, ClientA, BlindedData),
        entry(9, ClientA, ClientB, BlindedKeyAndE1),
        entry(10, ClientB, Server, E2),
        entry(11, ClientA, Server, OwnProductA),
        entry(12, ClientB, Server, OwnProductB),
    ]
};

pub fn schedule_entry(seq: u16) -> Option<&'static ScheduleEntry> {
    SCHEDULE.iter().find(|e| e.seq == seq)
}

/// Messages `role` receives, in the order it must receive them.
pub fn inbound_schedule(role: Role) -> impl Iterator<Item = &'static ScheduleEntry> {
    SCHEDULE.iter().filter(move |e| e.receiver == role)
}
