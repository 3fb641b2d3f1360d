//! Per-role state machines. Each party consumes its inbound messages in
//! schedule order and answers with the messages the schedule assigns it.

use crate::bls::augment;
use crate::numerics::{random_matrix, MatrixDistribution, RealMatrix, RngStream};

use super::ops::{self, MaskConfig, MaskSet, ProductBlocks};
use super::{inbound_schedule, MessageKind, ProtocolError, ProtocolMessage, Role, ScheduleEntry, SessionParams, SCHEDULE};

/// Common surface of the three party state machines.
pub trait PartyMachine: Send {
    fn role(&self) -> Role;

    fn params(&self) -> &SessionParams;

    /// Messages sent before anything is received.
    fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError>;

    /// Consume the next inbound message and return the replies it triggers.
    fn handle(&mut self, msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError>;

    /// True once every inbound message has been processed.
    fn is_complete(&self) -> bool;

    /// Every matrix the party currently stores, secrets and received values
    /// alike, labelled for inspection.
    fn held_matrices(&self) -> Vec<(&'static str, &RealMatrix)>;

    /// Overwrite every stored matrix with zeros and drop any output.
    fn wipe(&mut self);
}

fn outbound(role: Role, kind: MessageKind, after_seq: u16) -> &'static ScheduleEntry {
    SCHEDULE
        .iter()
        .find(|e| e.sender == role && e.kind == kind && e.seq > after_seq)
        .expect("schedule covers every outbound step")
}

fn message(params: &SessionParams, entry: &ScheduleEntry, payloads: Vec<RealMatrix>) -> ProtocolMessage {
    ProtocolMessage {
        session_id: params.session_id,
        seq: entry.seq,
        sender: entry.sender,
        receiver: entry.receiver,
        kind: entry.kind,
        payloads,
    }
}

/// Check `msg` against the next scheduled inbound entry for `role`.
fn accept(
    role: Role,
    params: &SessionParams,
    cursor: &mut usize,
    msg: &ProtocolMessage,
) -> Result<&'static ScheduleEntry, ProtocolError> {
    let entry = inbound_schedule(role).nth(*cursor).ok_or_else(|| ProtocolError::Unexpected {
        role,
        seq: msg.seq,
        detail: "message received after the session completed".into(),
    })?;
    if msg.seq != entry.seq {
        return Err(ProtocolError::OutOfOrder {
            role,
            expected: entry.seq,
            got: msg.seq,
        });
    }
    let unexpected = |detail: String| ProtocolError::Unexpected {
        role,
        seq: entry.seq,
        detail,
    };
    if msg.session_id != params.session_id {
        return Err(unexpected(format!("foreign session {}", msg.session_id)));
    }
    if msg.sender != entry.sender || msg.receiver != role || msg.kind != entry.kind {
        return Err(unexpected(format!(
            "expected {:?} from {}, got {:?} from {} to {}",
            entry.kind, entry.sender, msg.kind, msg.sender, msg.receiver
        )));
    }
    if msg.payloads.len() != entry.kind.payload_count() {
        return Err(unexpected(format!(
            "{:?} carries {} payloads, expected {}",
            entry.kind,
            msg.payloads.len(),
            entry.kind.payload_count()
        )));
    }
    *cursor += 1;
    Ok(entry)
}

fn expect_shape(role: Role, seq: u16, name: &str, m: &RealMatrix, shape: (usize, usize)) -> Result<(), ProtocolError> {
    if m.shape() == shape {
        Ok(())
    } else {
        Err(ProtocolError::Unexpected {
            role,
            seq,
            detail: format!("{name} has shape {:?}, expected {:?}", m.shape(), shape),
        })
    }
}

fn computation(role: Role, seq: u16) -> impl Fn(crate::numerics::NumericsError) -> ProtocolError {
    move |source| ProtocolError::Computation { role, seq, source }
}

/// Draw the session masks and build seq 1 (`R_A` to A) and seq 2
/// (`R_B`, `R_b` to B).
pub fn server_init(
    params: &SessionParams,
    mask: MaskConfig,
    rng: &mut RngStream,
) -> Result<(MaskSet, [ProtocolMessage; 2]), ProtocolError> {
    let masks = ops::draw_masks(params, mask, rng)?;
    let to_a = message(params, &SCHEDULE[0], vec![masks.first.data.clone()]);
    let to_b = message(params, &SCHEDULE[1], vec![masks.first.key.clone(), masks.first.bias.clone()]);
    Ok((masks, [to_a, to_b]))
}

/// Where the server's mixing key `W₁` comes from.
#[derive(Debug, Clone)]
pub enum MixKeySource {
    /// Draw a fresh standard-normal `W₁` once all four blocks are in.
    Generate(RngStream),
    /// Reuse the key of an earlier session (test-set features).
    Persisted(RealMatrix),
}

#[derive(Debug)]
pub struct ServerParty {
    params: SessionParams,
    masks: MaskSet,
    mix_source: Option<MixKeySource>,
    mix_key: Option<RealMatrix>,
    e2_first: Option<RealMatrix>,
    e2_second: Option<RealMatrix>,
    own_a: Option<RealMatrix>,
    own_b: Option<RealMatrix>,
    blocks: Option<ProductBlocks>,
    mapped: Option<RealMatrix>,
    cursor: usize,
    started: bool,
}

impl ServerParty {
    pub fn new(params: SessionParams, mask: MaskConfig, mask_rng: &mut RngStream, mix: MixKeySource) -> Result<Self, ProtocolError> {
        params.validate()?;
        if let MixKeySource::Persisted(k) = &mix {
            if k.shape() != (params.mapped_width, params.mapped_width) {
                return Err(ProtocolError::Config(format!(
                    "persisted mixing key is {:?}, expected {}x{}",
                    k.shape(),
                    params.mapped_width,
                    params.mapped_width
                )));
            }
        }
        let masks = ops::draw_masks(&params, mask, mask_rng)?;
        Ok(Self {
            params,
            masks,
            mix_source: Some(mix),
            mix_key: None,
            e2_first: None,
            e2_second: None,
            own_a: None,
            own_b: None,
            blocks: None,
            mapped: None,
            cursor: 0,
            started: false,
        })
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }

    /// `W₁`, available once the session completed.
    pub fn mix_key(&self) -> Option<&RealMatrix> {
        self.mix_key.as_ref()
    }

    pub fn product_blocks(&self) -> Option<&ProductBlocks> {
        self.blocks.as_ref()
    }

    pub fn mapped_features(&self) -> Option<&RealMatrix> {
        self.mapped.as_ref()
    }

    pub fn take_mapped_features(&mut self) -> Option<RealMatrix> {
        self.mapped.take()
    }

    fn finish(&mut self, seq: u16) -> Result<(), ProtocolError> {
        let role = Role::Server;
        let err = computation(role, seq);
        let take = |slot: &mut Option<RealMatrix>, name: &str| {
            slot.take().ok_or_else(|| ProtocolError::Unexpected {
                role,
                seq,
                detail: format!("{name} missing at session end"),
            })
        };
        let mut e2_first = take(&mut self.e2_first, "first E2")?;
        let mut e2_second = take(&mut self.e2_second, "second E2")?;
        let (f, s) = (&self.masks.first, &self.masks.second);
        let blocks = ProductBlocks {
            aa: take(&mut self.own_a, "X̄_A W_A")?,
            ab: ops::server_recover_cross(&e2_first, &f.bias, &f.data, &f.key).map_err(&err)?,
            ba: ops::server_recover_cross(&e2_second, &s.bias, &s.data, &s.key).map_err(&err)?,
            bb: take(&mut self.own_b, "X̄_B W_B")?,
        };
        e2_first.wipe();
        e2_second.wipe();
        let mix_key = match self.mix_source.take() {
            Some(MixKeySource::Generate(mut rng)) => {
                let w = self.params.mapped_width;
                random_matrix(w, w, MatrixDistribution::StandardNormal, &mut rng).map_err(&err)?
            }
            Some(MixKeySource::Persisted(k)) => k,
            None => {
                return Err(ProtocolError::Unexpected {
                    role,
                    seq,
                    detail: "mixing key already consumed".into(),
                })
            }
        };
        self.mapped = Some(ops::assemble_mapped_features(&blocks, &mix_key).map_err(&err)?);
        self.blocks = Some(blocks);
        self.mix_key = Some(mix_key);
        Ok(())
    }
}

impl PartyMachine for ServerParty {
    fn role(&self) -> Role {
        Role::Server
    }

    fn params(&self) -> &SessionParams {
        &self.params
    }

    fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        if std::mem::replace(&mut self.started, true) {
            return Err(ProtocolError::Unexpected {
                role: Role::Server,
                seq: 1,
                detail: "session already started".into(),
            });
        }
        let f = &self.masks.first;
        Ok(vec![
            message(&self.params, &SCHEDULE[0], vec![f.data.clone()]),
            message(&self.params, &SCHEDULE[1], vec![f.key.clone(), f.bias.clone()]),
        ])
    }

    fn handle(&mut self, mut msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let role = Role::Server;
        let entry = accept(role, &self.params, &mut self.cursor, &msg)?;
        let p = self.params;
        let half = p.half_width();
        let payload = msg.payloads.pop().expect("payload count checked");
        match (entry.kind, entry.sender) {
            (MessageKind::E2, Role::ClientA) => {
                expect_shape(role, entry.seq, "E2", &payload, (p.rows_a, half))?;
                self.e2_first = Some(payload);
                let s = &self.masks.second;
                Ok(vec![
                    message(&p, outbound(role, MessageKind::DataMask, entry.seq), vec![s.data.clone()]),
                    message(
                        &p,
                        outbound(role, MessageKind::KeyMasks, entry.seq),
                        vec![s.key.clone(), s.bias.clone()],
                    ),
                ])
            }
            (MessageKind::E2, _) => {
                expect_shape(role, entry.seq, "E2", &payload, (p.rows_b, half))?;
                self.e2_second = Some(payload);
                Ok(vec![])
            }
            (MessageKind::OwnProductA, _) => {
                expect_shape(role, entry.seq, "X̄_A W_A", &payload, (p.rows_a, half))?;
                self.own_a = Some(payload);
                Ok(vec![])
            }
            (MessageKind::OwnProductB, _) => {
                expect_shape(role, entry.seq, "X̄_B W_B", &payload, (p.rows_b, half))?;
                self.own_b = Some(payload);
                self.finish(entry.seq)?;
                Ok(vec![])
            }
            (kind, _) => unreachable!("server schedule has no inbound {kind:?}"),
        }
    }

    fn is_complete(&self) -> bool {
        self.mapped.is_some() || (self.blocks.is_some() && self.mix_key.is_some())
    }

    fn held_matrices(&self) -> Vec<(&'static str, &RealMatrix)> {
        let mut out = vec![
            ("R_A", &self.masks.first.data),
            ("R_B", &self.masks.first.key),
            ("R_b", &self.masks.first.bias),
            ("R_A'", &self.masks.second.data),
            ("R_B'", &self.masks.second.key),
            ("R_b'", &self.masks.second.bias),
        ];
        let optional = [
            ("E2", &self.e2_first),
            ("E2'", &self.e2_second),
            ("X̄_A W_A", &self.own_a),
            ("X̄_B W_B", &self.own_b),
            ("W1", &self.mix_key),
            ("Zn", &self.mapped),
        ];
        out.extend(optional.into_iter().filter_map(|(n, m)| m.as_ref().map(|m| (n, m))));
        if let Some(b) = &self.blocks {
            out.extend([
                ("X̄_A W_A", &b.aa),
                ("X̄_A W_B", &b.ab),
                ("X̄_B W_A", &b.ba),
                ("X̄_B W_B", &b.bb),
            ]);
        }
        out
    }

    fn wipe(&mut self) {
        self.masks.first.wipe();
        self.masks.second.wipe();
        for slot in [
            &mut self.e2_first,
            &mut self.e2_second,
            &mut self.own_a,
            &mut self.own_b,
            &mut self.mix_key,
            &mut self.mapped,
        ] {
            if let Some(m) = slot.as_mut() {
                m.wipe();
            }
        }
        self.mapped = None;
        if let Some(MixKeySource::Persisted(k)) = self.mix_source.as_mut() {
            k.wipe();
        }
        if let Some(b) = self.blocks.as_mut() {
            b.wipe();
        }
    }
}

/// A data-holding client. Client A is the data holder of the first pass and
/// the key holder of the second; client B the reverse.
#[derive(Debug)]
pub struct ClientParty {
    role: Role,
    params: SessionParams,
    /// X̄, own augmented data.
    data: RealMatrix,
    /// Own key half (W_A or W_B).
    key: RealMatrix,
    /// R_A of the pass in which this client is the data holder.
    data_mask: Option<RealMatrix>,
    /// (R_B, R_b) of the pass in which this client is the key holder.
    key_mask: Option<RealMatrix>,
    bias_mask: Option<RealMatrix>,
    /// X* received from the peer.
    peer_blinded_data: Option<RealMatrix>,
    /// W* and E₁ received from the peer.
    peer_blinded_key: Option<RealMatrix>,
    e1: Option<RealMatrix>,
    cursor: usize,
}

impl ClientParty {
    /// `features` is the raw `N x d` data; the party augments it itself.
    pub fn new(role: Role, params: SessionParams, features: &RealMatrix, key: RealMatrix) -> Result<Self, ProtocolError> {
        if role == Role::Server {
            return Err(ProtocolError::Config("a client party needs a client role".into()));
        }
        params.validate()?;
        let rows = params.rows_of(role);
        if features.shape() != (rows, params.input_dim) {
            return Err(ProtocolError::Config(format!(
                "{role} data is {:?}, session expects {rows}x{}",
                features.shape(),
                params.input_dim
            )));
        }
        if key.shape() != (params.input_dim + 1, params.half_width()) {
            return Err(ProtocolError::Config(format!(
                "{role} key half is {:?}, session expects {}x{}",
                key.shape(),
                params.input_dim + 1,
                params.half_width()
            )));
        }
        let data = augment(features).map_err(|e| ProtocolError::Config(e.to_string()))?;
        Ok(Self {
            role,
            params,
            data,
            key,
            data_mask: None,
            key_mask: None,
            bias_mask: None,
            peer_blinded_data: None,
            peer_blinded_key: None,
            e1: None,
            cursor: 0,
        })
    }

    pub fn key(&self) -> &RealMatrix {
        &self.key
    }

    fn peer_rows(&self) -> usize {
        self.params.rows_of(self.role.peer_client().expect("client role"))
    }

    fn own_product_message(&self, after_seq: u16) -> Result<ProtocolMessage, ProtocolError> {
        let kind = if self.role == Role::ClientA {
            MessageKind::OwnProductA
        } else {
            MessageKind::OwnProductB
        };
        let entry = outbound(self.role, kind, after_seq);
        let product = ops::own_product(&self.data, &self.key).map_err(computation(self.role, entry.seq))?;
        Ok(message(&self.params, entry, vec![product]))
    }
}

impl PartyMachine for ClientParty {
    fn role(&self) -> Role {
        self.role
    }

    fn params(&self) -> &SessionParams {
        &self.params
    }

    fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        Ok(vec![])
    }

    fn handle(&mut self, mut msg: ProtocolMessage) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        let role = self.role;
        let entry = accept(role, &self.params, &mut self.cursor, &msg)?;
        let seq = entry.seq;
        let err = computation(role, seq);
        let p = self.params;
        let (cols, half) = (p.input_dim + 1, p.half_width());
        let own_rows = p.rows_of(role);
        let peer_rows = self.peer_rows();
        let missing = |what: &str| ProtocolError::Unexpected {
            role,
            seq,
            detail: format!("{what} has not arrived"),
        };

        let mut replies = Vec::new();
        match entry.kind {
            MessageKind::DataMask => {
                let mask = msg.payloads.pop().expect("payload count checked");
                expect_shape(role, seq, "R_A", &mask, (own_rows, cols))?;
                let blinded = ops::blind_data(&self.data, &mask).map_err(&err)?;
                self.data_mask = Some(mask);
                replies.push(message(&p, outbound(role, MessageKind::BlindedData, seq), vec![blinded]));
            }
            MessageKind::KeyMasks => {
                let bias = msg.payloads.pop().expect("payload count checked");
                let key = msg.payloads.pop().expect("payload count checked");
                expect_shape(role, seq, "R_B", &key, (cols, half))?;
                expect_shape(role, seq, "R_b", &bias, (peer_rows, half))?;
                self.key_mask = Some(key);
                self.bias_mask = Some(bias);
            }
            MessageKind::BlindedData => {
                let blinded = msg.payloads.pop().expect("payload count checked");
                expect_shape(role, seq, "X*", &blinded, (peer_rows, cols))?;
                let key_mask = self.key_mask.as_ref().ok_or_else(|| missing("R_B"))?;
                let bias_mask = self.bias_mask.as_ref().ok_or_else(|| missing("R_b"))?;
                let (w_star, e1) = ops::blind_key_and_product(&blinded, &self.key, key_mask, bias_mask).map_err(&err)?;
                self.peer_blinded_data = Some(blinded);
                replies.push(message(
                    &p,
                    outbound(role, MessageKind::BlindedKeyAndE1, seq),
                    vec![w_star, e1],
                ));
            }
            MessageKind::BlindedKeyAndE1 => {
                let e1 = msg.payloads.pop().expect("payload count checked");
                let w_star = msg.payloads.pop().expect("payload count checked");
                expect_shape(role, seq, "W*", &w_star, (cols, half))?;
                expect_shape(role, seq, "E1", &e1, (own_rows, half))?;
                let data_mask = self.data_mask.as_ref().ok_or_else(|| missing("R_A"))?;
                let e2 = ops::unblind_product(&e1, &w_star, data_mask).map_err(&err)?;
                self.peer_blinded_key = Some(w_star);
                self.e1 = Some(e1);
                replies.push(message(&p, outbound(role, MessageKind::E2, seq), vec![e2]));
            }
            kind => unreachable!("client schedule has no inbound {kind:?}"),
        }
        if self.is_complete() {
            replies.push(self.own_product_message(seq)?);
        }
        Ok(replies)
    }

    fn is_complete(&self) -> bool {
        self.cursor == inbound_schedule(self.role).count()
    }

    fn held_matrices(&self) -> Vec<(&'static str, &RealMatrix)> {
        let mut out = vec![("X̄", &self.data), ("W", &self.key)];
        let optional = [
            ("R_A", &self.data_mask),
            ("R_B", &self.key_mask),
            ("R_b", &self.bias_mask),
            ("X*", &self.peer_blinded_data),
            ("W*", &self.peer_blinded_key),
            ("E1", &self.e1),
        ];
        out.extend(optional.into_iter().filter_map(|(n, m)| m.as_ref().map(|m| (n, m))));
        out
    }

    fn wipe(&mut self) {
        self.data.wipe();
        self.key.wipe();
        for slot in [
            &mut self.data_mask,
            &mut self.key_mask,
            &mut self.bias_mask,
            &mut self.peer_blinded_data,
            &mut self.peer_blinded_key,
            &mut self.e1,
        ] {
            if let Some(m) = slot.as_mut() {
                m.wipe();
            }
        }
    }
}
