//! Driving the party state machines over an [`Endpoint`].

use std::thread;

use serde::{Deserialize, Serialize};

use super::{
    inbound_schedule, ClientParty, MaskConfig, MessageKind, MixKeySource, PartyMachine, ProtocolError,
    ProtocolMessage, Role, ServerParty, SessionParams,
};
use crate::numerics::{RealMatrix, RngStream};
use crate::transport::{in_process_endpoints, timeout_from_env, Endpoint};

/// Metadata of one sent message. Matrix contents are never recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub session_id: String,
    pub seq: u16,
    pub sender: Role,
    pub receiver: Role,
    pub kind: MessageKind,
    pub payload_shapes: Vec<(usize, usize)>,
    pub byte_length: usize,
}

impl TranscriptEntry {
    fn of(msg: &ProtocolMessage, byte_length: usize) -> Self {
        Self {
            session_id: msg.session_id.to_string(),
            seq: msg.seq,
            sender: msg.sender,
            receiver: msg.receiver,
            kind: msg.kind,
            payload_shapes: msg.payloads.iter().map(RealMatrix::shape).collect(),
            byte_length,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("transcript entries always serialize")
    }
}

/// What one party sent during a completed session.
#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub role: Role,
    pub sent: Vec<TranscriptEntry>,
}

impl PartyOutcome {
    pub fn bytes_sent(&self) -> usize {
        self.sent.iter().map(|e| e.byte_length).sum()
    }
}

/// Run one party to completion. On any failure the party's state is wiped
/// before the error is returned; the caller should then drop the endpoint so
/// the peers observe the abort.
pub fn run_party<P, E>(party: &mut P, endpoint: &mut E) -> Result<PartyOutcome, ProtocolError>
where
    P: PartyMachine + ?Sized,
    E: Endpoint + ?Sized,
{
    let result = drive(party, endpoint);
    if result.is_err() {
        party.wipe();
    }
    result
}

fn drive<P, E>(party: &mut P, endpoint: &mut E) -> Result<PartyOutcome, ProtocolError>
where
    P: PartyMachine + ?Sized,
    E: Endpoint + ?Sized,
{
    let role = party.role();
    let mut sent = Vec::new();
    let mut send_all = |msgs: Vec<ProtocolMessage>, endpoint: &mut E| -> Result<(), ProtocolError> {
        for msg in msgs {
            let bytes = endpoint.send(&msg).map_err(|source| ProtocolError::Transport {
                role,
                seq: msg.seq,
                source,
            })?;
            sent.push(TranscriptEntry::of(&msg, bytes));
        }
        Ok(())
    };

    send_all(party.start()?, endpoint)?;
    for entry in inbound_schedule(role) {
        let msg = endpoint.recv(entry.sender).map_err(|source| ProtocolError::Transport {
            role,
            seq: entry.seq,
            source,
        })?;
        let replies = party.handle(msg)?;
        send_all(replies, endpoint)?;
    }
    if !party.is_complete() {
        return Err(ProtocolError::Unexpected {
            role,
            seq: inbound_schedule(role).last().map_or(0, |e| e.seq),
            detail: "schedule exhausted before the party completed".into(),
        });
    }
    Ok(PartyOutcome { role, sent })
}

/// Raw features and key half supplied to one client.
#[derive(Debug, Clone, Copy)]
pub struct ClientInput<'a> {
    pub features: &'a RealMatrix,
    pub key: &'a RealMatrix,
}

/// Result of a completed session, with the final party states kept for
/// inspection.
#[derive(Debug)]
pub struct SessionOutput {
    /// Joint mapped features, client A's rows first.
    pub zn: RealMatrix,
    /// All sent messages ordered by seq.
    pub transcript: Vec<TranscriptEntry>,
    pub server: ServerParty,
    pub client_a: ClientParty,
    pub client_b: ClientParty,
}

impl SessionOutput {
    pub fn message_count(&self) -> usize {
        self.transcript.len()
    }

    pub fn bytes_on_wire(&self) -> usize {
        self.transcript.iter().map(|e| e.byte_length).sum()
    }

    /// `W₁` used by this session.
    pub fn mix_key(&self) -> &RealMatrix {
        self.server.mix_key().expect("completed session has a mixing key")
    }
}

fn join<T>(role: Role, h: thread::ScopedJoinHandle<'_, T>) -> Result<T, ProtocolError> {
    h.join().map_err(|_| ProtocolError::Panicked { role })
}

/// A failed session: the root-cause error and the (wiped) party states.
#[derive(Debug)]
pub struct SessionAbort {
    pub error: ProtocolError,
    /// Errors raised by the other parties, usually knock-on peer failures.
    pub other_errors: Vec<ProtocolError>,
    pub server: Option<ServerParty>,
    pub client_a: Option<ClientParty>,
    pub client_b: Option<ClientParty>,
}

/// Run all three parties concurrently, one thread each. `endpoints` are for
/// server, client A and client B in that order. If any party fails, every
/// party is wiped and the root-cause error is returned.
pub fn run_protocol<E: Endpoint>(
    server: ServerParty,
    client_a: ClientParty,
    client_b: ClientParty,
    endpoints: [E; 3],
) -> Result<SessionOutput, ProtocolError> {
    run_protocol_detailed(server, client_a, client_b, endpoints).map_err(|abort| abort.error)
}

/// [`run_protocol`], but a failure hands back the wiped parties as well.
pub fn run_protocol_detailed<E: Endpoint>(
    server: ServerParty,
    client_a: ClientParty,
    client_b: ClientParty,
    endpoints: [E; 3],
) -> Result<SessionOutput, Box<SessionAbort>> {
    let [es, ea, eb] = endpoints;
    // Each thread owns its endpoint, so a failed party disconnects from its
    // peers as soon as it returns.
    fn spawn<'s, P: PartyMachine + 's, E: Endpoint + 's>(
        scope: &'s thread::Scope<'s, '_>,
        mut party: P,
        mut ep: E,
    ) -> thread::ScopedJoinHandle<'s, (P, Result<PartyOutcome, ProtocolError>)> {
        scope.spawn(move || {
            let r = run_party(&mut party, &mut ep);
            drop(ep);
            (party, r)
        })
    }
    let (s, a, b) = thread::scope(|scope| {
        let hs = spawn(scope, server, es);
        let ha = spawn(scope, client_a, ea);
        let hb = spawn(scope, client_b, eb);
        (join(Role::Server, hs), join(Role::ClientA, ha), join(Role::ClientB, hb))
    });

    let mut errors = Vec::new();
    let mut transcript = Vec::new();
    let mut server = collect(s, &mut errors, &mut transcript);
    let mut client_a = collect(a, &mut errors, &mut transcript);
    let mut client_b = collect(b, &mut errors, &mut transcript);

    if errors.is_empty() {
        if let (Some(mut server), Some(client_a), Some(client_b)) = (server.take(), client_a.take(), client_b.take()) {
            if let Some(zn) = server.take_mapped_features() {
                transcript.sort_by_key(|e| e.seq);
                return Ok(SessionOutput {
                    zn,
                    transcript,
                    server,
                    client_a,
                    client_b,
                });
            }
            errors.push(ProtocolError::Unexpected {
                role: Role::Server,
                seq: 12,
                detail: "session finished without mapped features".into(),
            });
            return Err(abort(errors, Some(server), Some(client_a), Some(client_b)));
        }
    }
    Err(abort(errors, server, client_a, client_b))
}

type Joined<P> = Result<(P, Result<PartyOutcome, ProtocolError>), ProtocolError>;

fn collect<P>(joined: Joined<P>, errors: &mut Vec<ProtocolError>, transcript: &mut Vec<TranscriptEntry>) -> Option<P> {
    match joined {
        Ok((party, r)) => {
            match r {
                Ok(o) => transcript.extend(o.sent),
                Err(e) => errors.push(e),
            }
            Some(party)
        }
        Err(e) => {
            errors.push(e);
            None
        }
    }
}

fn abort(
    mut errors: Vec<ProtocolError>,
    mut server: Option<ServerParty>,
    mut client_a: Option<ClientParty>,
    mut client_b: Option<ClientParty>,
) -> Box<SessionAbort> {
    if let Some(p) = server.as_mut() {
        p.wipe();
    }
    for p in [client_a.as_mut(), client_b.as_mut()].into_iter().flatten() {
        p.wipe();
    }
    let root = errors.iter().position(|e| !e.is_peer_failure()).unwrap_or(0);
    let error = errors.remove(root);
    Box::new(SessionAbort {
        error,
        other_errors: errors,
        server,
        client_a,
        client_b,
    })
}

/// Build the three parties and run a session over the in-process bus.
pub fn run_protocol_in_process(
    params: SessionParams,
    mask: MaskConfig,
    mask_rng: &mut RngStream,
    mix: MixKeySource,
    a: ClientInput<'_>,
    b: ClientInput<'_>,
) -> Result<SessionOutput, ProtocolError> {
    let server = ServerParty::new(params, mask, mask_rng, mix)?;
    let client_a = ClientParty::new(Role::ClientA, params, a.features, a.key.clone())?;
    let client_b = ClientParty::new(Role::ClientB, params, b.features, b.key.clone())?;
    run_protocol(server, client_a, client_b, in_process_endpoints(timeout_from_env()))
}
