use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::{decode_message, encode_message, Endpoint, TransportError};
use crate::protocol::{ProtocolMessage, Role};

/// In-process endpoint backed by one channel per directed pair.
pub struct BusEndpoint {
    role: Role,
    outbound: HashMap<Role, Sender<Vec<u8>>>,
    inbound: HashMap<Role, Receiver<Vec<u8>>>,
    timeout: Duration,
}

/// Endpoints for server, client A and client B, in that order.
pub fn in_process_endpoints(timeout: Duration) -> [BusEndpoint; 3] {
    let mut endpoints = Role::ALL.map(|role| BusEndpoint {
        role,
        outbound: HashMap::new(),
        inbound: HashMap::new(),
        timeout,
    });
    for from in Role::ALL {
        for to in Role::ALL {
            if from == to {
                continue;
            }
            let (tx, rx) = channel();
            endpoints[from.code() as usize].outbound.insert(to, tx);
            endpoints[to.code() as usize].inbound.insert(from, rx);
        }
    }
    endpoints
}

impl BusEndpoint {
    /// Push raw bytes onto the channel to `to`, bypassing the encoder.
    pub fn send_raw(&self, to: Role, frame: Vec<u8>) -> Result<(), TransportError> {
        let tx = self.outbound.get(&to).ok_or(TransportError::NoRoute { from: self.role, to })?;
        tx.send(frame).map_err(|_| TransportError::Disconnected { peer: to })
    }
}

impl Endpoint for BusEndpoint {
    fn role(&self) -> Role {
        self.role
    }

    fn send(&mut self, msg: &ProtocolMessage) -> Result<usize, TransportError> {
        let frame = encode_message(msg)?;
        let len = frame.len();
        self.send_raw(msg.receiver, frame)?;
        Ok(len)
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, TransportError> {
        let rx = self.inbound.get(&from).ok_or(TransportError::NoRoute { from, to: self.role })?;
        let frame = rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout {
                peer: from,
                after: self.timeout,
            },
            RecvTimeoutError::Disconnected => TransportError::Disconnected { peer: from },
        })?;
        Ok(decode_message(&frame)?)
    }
}
