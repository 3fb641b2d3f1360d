//! Checks of what each party can see, shared by the security tests and the
//! acceptance suite.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use msbls::numerics::{random_matrix, MatrixDistribution, RealMatrix, RngStream};
use msbls::protocol::{
    blind_data, blind_key_and_product, run_protocol_detailed, unblind_product, ClientParty, MaskConfig, MessageKind,
    MixKeySource, PartyMachine, ProtocolMessage, Role, ServerParty, SessionOutput,
};
use msbls::transport::{in_process_endpoints, Endpoint};

use super::{Instance, Tap};

pub type Inbox = Arc<Mutex<Vec<ProtocolMessage>>>;

/// A masked session with every party's inbound messages recorded, in role
/// order server, A, B.
pub fn observed_session(inst: &Instance, mask_seed: u64) -> (SessionOutput, [Vec<ProtocolMessage>; 3]) {
    let server = ServerParty::new(
        inst.params,
        MaskConfig::default(),
        &mut RngStream::new(mask_seed),
        MixKeySource::Persisted(inst.w1.clone()),
    )
    .unwrap();
    let a = ClientParty::new(Role::ClientA, inst.params, &inst.xa, inst.wa.clone()).unwrap();
    let b = ClientParty::new(Role::ClientB, inst.params, &inst.xb, inst.wb.clone()).unwrap();
    let taps = in_process_endpoints(Duration::from_secs(10)).map(Tap::new);
    let inboxes: Vec<Inbox> = taps.iter().map(|t| t.received.clone()).collect();
    let out = run_protocol_detailed(server, a, b, taps).map_err(|e| e.error).unwrap();
    let take = |i: &Inbox| std::mem::take(&mut *i.lock().unwrap());
    (out, [take(&inboxes[0]), take(&inboxes[1]), take(&inboxes[2])])
}

fn close(a: &RealMatrix, b: &RealMatrix) -> bool {
    a.shape() == b.shape() && a.max_abs_diff(b) <= 1e-9 * b.max_abs().max(1.0)
}

/// Fails if `target` equals a held matrix, or the sum or difference of two
/// held matrices.
fn reconstructable(held: &[(&'static str, &RealMatrix)], target: &RealMatrix) -> Option<String> {
    for (i, (n1, m1)) in held.iter().enumerate() {
        if close(m1, target) {
            return Some(format!("holds it as {n1}"));
        }
        for (n2, m2) in &held[i + 1..] {
            if m1.shape() != m2.shape() {
                continue;
            }
            if close(&m1.sub(m2).unwrap(), target) || close(&m2.sub(m1).unwrap(), target) {
                return Some(format!("{n1} - {n2}"));
            }
            if close(&m1.add(m2).unwrap(), target) {
                return Some(format!("{n1} + {n2}"));
            }
        }
    }
    None
}

/// (viewer, matrices it holds, matrices it must not learn)
type ConfinementCheck<'a> = (&'static str, Vec<(&'static str, &'a RealMatrix)>, &'a [(&'static str, &'a RealMatrix)]);

/// State assertions at session end: no client can read or affinely rebuild
/// the peer's data, key half or the masks protecting them, and nothing sent
/// to the server carries raw data or key halves.
pub fn check_view_confinement(inst: &Instance, out: &SessionOutput, server_inbox: &[ProtocolMessage]) -> Result<(), String> {
    let m = out.server.masks();
    let (xa, xb) = (inst.xa_aug(), inst.xb_aug());
    let secrets_of_b = [
        ("X̄_B", &xb),
        ("W_B", &inst.wb),
        ("R_B", &m.first.key),
        ("R_b", &m.first.bias),
        ("R_A'", &m.second.data),
    ];
    let secrets_of_a = [
        ("X̄_A", &xa),
        ("W_A", &inst.wa),
        ("R_B'", &m.second.key),
        ("R_b'", &m.second.bias),
        ("R_A", &m.first.data),
    ];
    let clear = [("X̄_A", &xa), ("X̄_B", &xb), ("W_A", &inst.wa), ("W_B", &inst.wb)];

    let checks: [ConfinementCheck<'_>; 3] = [
        ("client A", out.client_a.held_matrices(), &secrets_of_b),
        ("client B", out.client_b.held_matrices(), &secrets_of_a),
        ("server", out.server.held_matrices(), &clear),
    ];
    for (who, held, forbidden) in checks {
        for (name, secret) in forbidden {
            if let Some(how) = reconstructable(&held, secret) {
                return Err(format!("{who} can rebuild {name}: {how}"));
            }
        }
    }

    for msg in server_inbox {
        if !matches!(msg.kind, MessageKind::E2 | MessageKind::OwnProductA | MessageKind::OwnProductB) {
            return Err(format!("server received {:?} at seq {}", msg.kind, msg.seq));
        }
        for p in &msg.payloads {
            if let Some((name, _)) = clear.iter().find(|(_, c)| close(p, c)) {
                return Err(format!("seq {} carries {name}", msg.seq));
            }
        }
    }
    Ok(())
}

fn payload(inbox: &[ProtocolMessage], seq: u16, i: usize) -> RealMatrix {
    inbox.iter().find(|m| m.seq == seq).expect("message recorded").payloads[i].clone()
}

/// Solve `L X = B` for unit lower-triangular `L`.
fn unit_lower_solve(l: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    let mut x = b.clone();
    for i in 0..l.rows() {
        for k in 0..i {
            let f = l.get(i, k);
            for j in 0..x.cols() {
                let v = x.get(i, j) - f * x.get(k, j);
                x.set(i, j, v);
            }
        }
    }
    x
}

fn matches(a: &RealMatrix, b: &RealMatrix) -> bool {
    a.relative_frobenius_error(b) <= 1e-8
}

/// For each of the three observations (X*_A at B, (W*_B, E₁) at A, E₂ at the
/// server) build a second plaintext, different from the true one, that
/// produces the same observation.
pub fn check_transcript_ambiguity(inst: &Instance, out: &SessionOutput, inboxes: &[Vec<ProtocolMessage>; 3], seed: u64) -> Result<(), String> {
    let mut rng = RngStream::with_stream(seed, 1234);
    let r = MaskConfig::DEFAULT_HALF_WIDTH;
    let uniform = |rows, cols, rng: &mut RngStream| {
        random_matrix(rows, cols, MatrixDistribution::symmetric_uniform(r), rng).unwrap()
    };
    let [server_in, a_in, b_in] = inboxes;
    let xa = inst.xa_aug();

    // B sees X*_A.
    let x_star = payload(b_in, 3, 0);
    let r_alt = uniform(x_star.rows(), x_star.cols(), &mut rng);
    let xa_alt = x_star.sub(&r_alt).unwrap();
    if !matches(&blind_data(&xa_alt, &r_alt).unwrap(), &x_star) {
        return Err("alternative (X̄_A', R_A') does not reproduce X*_A".into());
    }
    if xa_alt.max_abs_diff(&xa) < 1.0 {
        return Err("alternative X̄_A' coincides with X̄_A".into());
    }

    // A sees W*_B and E₁ and knows X*_A.
    let (w_star, e1) = (payload(a_in, 4, 0), payload(a_in, 4, 1));
    let wb_alt = random_matrix(w_star.rows(), w_star.cols(), MatrixDistribution::StandardNormal, &mut rng).unwrap();
    let rb_alt = w_star.sub(&wb_alt).unwrap();
    let bias_alt = e1.sub(&x_star.matmul(&wb_alt).unwrap()).unwrap();
    let (w_star2, e1_2) = blind_key_and_product(&x_star, &wb_alt, &rb_alt, &bias_alt).unwrap();
    if !matches(&w_star2, &w_star) || !matches(&e1_2, &e1) {
        return Err("alternative (W_B', R_B', R_b') does not reproduce (W*_B, E1)".into());
    }
    if wb_alt.max_abs_diff(&inst.wb) < 1e-3 {
        return Err("alternative W_B' coincides with W_B".into());
    }

    // The server sees E₂ and X̄_A W_A and knows its masks; rotate the data
    // by a unit lower-triangular G (which keeps the constant column) and
    // counter-rotate the keys.
    let e2 = payload(server_in, 5, 0);
    let own_a = payload(server_in, 11, 0);
    let n = xa.cols();
    let g = RealMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => 0.5 * (((i * 31 + j * 17 + seed as usize) % 7) as f64 - 3.0),
        std::cmp::Ordering::Less => 0.0,
    })
    .unwrap();
    let xa_rot = xa.matmul(&g).unwrap();
    let wb_rot = unit_lower_solve(&g, &inst.wb);
    let wa_rot = unit_lower_solve(&g, &inst.wa);
    let masks = &out.server.masks().first;
    let x_star_rot = blind_data(&xa_rot, &masks.data).unwrap();
    let (w_star_rot, e1_rot) = blind_key_and_product(&x_star_rot, &wb_rot, &masks.key, &masks.bias).unwrap();
    let e2_rot = unblind_product(&e1_rot, &w_star_rot, &masks.data).unwrap();
    if !matches(&e2_rot, &e2) {
        return Err(format!("rotated plaintext gives a different E2 (rel {:e})", e2_rot.relative_frobenius_error(&e2)));
    }
    if !matches(&xa_rot.matmul(&wa_rot).unwrap(), &own_a) {
        return Err("rotated plaintext gives a different X̄_A W_A".into());
    }
    if n > 1 && xa_rot.max_abs_diff(&xa) < 1e-6 {
        return Err("rotation left X̄_A unchanged".into());
    }
    Ok(())
}

/// Every role's matrices are zero and no mapped features remain.
pub fn check_wiped(server: &ServerParty, a: &ClientParty, b: &ClientParty) -> Result<(), String> {
    if server.mapped_features().is_some() {
        return Err("server still holds Zn".into());
    }
    let parties: [(&str, &dyn PartyMachine); 3] = [("server", server), ("client A", a), ("client B", b)];
    for (who, p) in parties {
        if let Some((name, _)) = p.held_matrices().into_iter().find(|(_, m)| !m.is_all_zero()) {
            return Err(format!("{who} still holds non-zero {name}"));
        }
    }
    Ok(())
}

/// Corrupt message `seq` (wrong payload shape) and return the abort.
pub fn aborted_session(inst: &Instance, seq: u16) -> Box<msbls::protocol::SessionAbort> {
    let server = ServerParty::new(
        inst.params,
        MaskConfig::default(),
        &mut RngStream::new(3),
        MixKeySource::Persisted(inst.w1.clone()),
    )
    .unwrap();
    let a = ClientParty::new(Role::ClientA, inst.params, &inst.xa, inst.wa.clone()).unwrap();
    let b = ClientParty::new(Role::ClientB, inst.params, &inst.xb, inst.wb.clone()).unwrap();
    let eps: Vec<Box<dyn Endpoint>> = in_process_endpoints(Duration::from_secs(10))
        .into_iter()
        .map(|e| {
            Box::new(Tap::rewriting(e, move |m| {
                if m.seq == seq {
                    let (r, c) = m.payloads[0].shape();
                    m.payloads[0] = RealMatrix::zeros(r + 1, c).unwrap();
                }
            })) as Box<dyn Endpoint>
        })
        .collect();
    let eps: [Box<dyn Endpoint>; 3] = eps.try_into().unwrap_or_else(|_| unreachable!());
    run_protocol_detailed(server, a, b, eps).expect_err("corrupted session must abort")
}
