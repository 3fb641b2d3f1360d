use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use super::{decode_message, encode_message, read_frame, Endpoint, TransportError};
use crate::protocol::{ProtocolMessage, Role};

const HELLO_MAGIC: [u8; 4] = *b"MSBH";
const RETRY_DELAY: Duration = Duration::from_millis(20);

pub fn bind_listener(addr: SocketAddr) -> io::Result<TcpListener> {
    TcpListener::bind(addr)
}

/// TCP endpoint with one connection per directed pair. Every role listens;
/// the sender of each direction dials the receiver and announces its role.
pub struct TcpEndpoint {
    role: Role,
    outbound: HashMap<Role, BufWriter<TcpStream>>,
    inbound: HashMap<Role, BufReader<TcpStream>>,
    timeout: Duration,
}

fn dial(addr: SocketAddr, deadline: Instant) -> Result<TcpStream, TransportError> {
    loop {
        match TcpStream::connect_timeout(&addr, RETRY_DELAY.max(Duration::from_millis(200))) {
            Ok(s) => return Ok(s),
            Err(_) if Instant::now() < deadline => thread::sleep(RETRY_DELAY),
            Err(e) => return Err(TransportError::Handshake(format!("could not reach {addr}: {e}"))),
        }
    }
}

fn map_io(e: io::Error, peer: Role, timeout: Duration) -> TransportError {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => TransportError::Timeout { peer, after: timeout },
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe | ErrorKind::ConnectionAborted => {
            TransportError::Disconnected { peer }
        }
        _ => TransportError::Io(e),
    }
}

impl TcpEndpoint {
    /// Connect `role` to its two peers. `listener` must already be bound so
    /// peers can dial it while this call is still dialing them.
    pub fn establish(
        role: Role,
        listener: TcpListener,
        peers: &[(Role, SocketAddr)],
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let deadline = Instant::now() + timeout;
        let mut outbound = HashMap::new();
        for &(peer, addr) in peers {
            if peer == role {
                return Err(TransportError::Handshake(format!("{role} cannot peer with itself")));
            }
            let stream = dial(addr, deadline)?;
            stream.set_nodelay(true)?;
            let mut w = BufWriter::new(stream);
            w.write_all(&HELLO_MAGIC)?;
            w.write_all(&[role.code()])?;
            w.flush()?;
            outbound.insert(peer, w);
        }

        listener.set_nonblocking(true)?;
        let mut inbound = HashMap::new();
        while inbound.len() < peers.len() {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(timeout))?;
                    let mut hello = [0u8; 5];
                    (&stream).read_exact(&mut hello)?;
                    if hello[..4] != HELLO_MAGIC {
                        return Err(TransportError::Handshake("bad hello magic".into()));
                    }
                    let peer = Role::from_code(hello[4])
                        .filter(|r| peers.iter().any(|(p, _)| p == r))
                        .ok_or_else(|| TransportError::Handshake(format!("unexpected peer code {}", hello[4])))?;
                    if inbound.insert(peer, BufReader::new(stream)).is_some() {
                        return Err(TransportError::Handshake(format!("duplicate connection from {peer}")));
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Handshake(format!(
                            "{role} timed out waiting for {} inbound connections",
                            peers.len() - inbound.len()
                        )));
                    }
                    thread::sleep(RETRY_DELAY);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Self {
            role,
            outbound,
            inbound,
            timeout,
        })
    }
}

/// Bind all three roles on `addrs` (server, client A, client B) and connect
/// them to each other from this process. Port 0 picks a free port.
pub fn establish_local_mesh(addrs: [SocketAddr; 3], timeout: Duration) -> Result<[TcpEndpoint; 3], TransportError> {
    let listeners = addrs.map(bind_listener);
    let mut bound = Vec::with_capacity(3);
    for l in listeners {
        let l = l?;
        let addr = l.local_addr()?;
        bound.push((l, addr));
    }
    let addr_of: Vec<SocketAddr> = bound.iter().map(|(_, a)| *a).collect();
    let results: Vec<Result<TcpEndpoint, TransportError>> = thread::scope(|scope| {
        let handles: Vec<_> = bound
            .into_iter()
            .zip(Role::ALL)
            .map(|((listener, _), role)| {
                let peers: Vec<(Role, SocketAddr)> = Role::ALL
                    .into_iter()
                    .filter(|r| *r != role)
                    .map(|r| (r, addr_of[r.code() as usize]))
                    .collect();
                scope.spawn(move || TcpEndpoint::establish(role, listener, &peers, timeout))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(TransportError::Handshake("connect thread panicked".into()))))
            .collect()
    });
    let mut eps = Vec::with_capacity(3);
    for r in results {
        eps.push(r?);
    }
    Ok(eps.try_into().unwrap_or_else(|_| unreachable!("three endpoints")))
}

impl Endpoint for TcpEndpoint {
    fn role(&self) -> Role {
        self.role
    }

    fn send(&mut self, msg: &ProtocolMessage) -> Result<usize, TransportError> {
        let to = msg.receiver;
        let frame = encode_message(msg)?;
        let timeout = self.timeout;
        let w = self
            .outbound
            .get_mut(&to)
            .ok_or(TransportError::NoRoute { from: self.role, to })?;
        w.write_all(&frame)
            .and_then(|_| w.flush())
            .map_err(|e| map_io(e, to, timeout))?;
        Ok(frame.len())
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, TransportError> {
        let timeout = self.timeout;
        let r = self
            .inbound
            .get_mut(&from)
            .ok_or(TransportError::NoRoute { from, to: self.role })?;
        let frame = read_frame(r).map_err(|e| map_io(e, from, timeout))??;
        Ok(decode_message(&frame)?)
    }
}
