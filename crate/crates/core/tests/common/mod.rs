#![allow(dead_code)]

pub mod security;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use msbls::bls::augment;
use msbls::datasets::{load_idx, LabeledDataset};
use msbls::numerics::{random_matrix, MatrixDistribution, RealMatrix, RngStream};
use msbls::protocol::{ProtocolMessage, Role, SessionId, SessionParams};
use msbls::transport::{Endpoint, TransportError};

pub fn normal(rows: usize, cols: usize, rng: &mut RngStream) -> RealMatrix {
    random_matrix(rows, cols, MatrixDistribution::StandardNormal, rng).unwrap()
}

pub fn uniform(rows: usize, cols: usize, rng: &mut RngStream) -> RealMatrix {
    random_matrix(rows, cols, MatrixDistribution::Uniform { lo: 0.0, hi: 1.0 }, rng).unwrap()
}

/// Raw inputs of one protocol instance plus its plaintext answer.
pub struct Instance {
    pub params: SessionParams,
    pub xa: RealMatrix,
    pub xb: RealMatrix,
    pub wa: RealMatrix,
    pub wb: RealMatrix,
    pub w1: RealMatrix,
}

impl Instance {
    pub fn random(rows_a: usize, rows_b: usize, d: usize, width: usize, seed: u64) -> Self {
        let mut rng = RngStream::with_stream(seed, 99);
        Self {
            params: SessionParams {
                session_id: SessionId(u128::from(seed) + 1),
                rows_a,
                rows_b,
                input_dim: d,
                mapped_width: width,
            },
            xa: uniform(rows_a, d, &mut rng),
            xb: uniform(rows_b, d, &mut rng),
            wa: normal(d + 1, width / 2, &mut rng),
            wb: normal(d + 1, width / 2, &mut rng),
            w1: normal(width, width, &mut rng),
        }
    }

    pub fn xa_aug(&self) -> RealMatrix {
        augment(&self.xa).unwrap()
    }

    pub fn xb_aug(&self) -> RealMatrix {
        augment(&self.xb).unwrap()
    }

    /// `X̄ [W_A | W_B] W₁` on the stacked data, computed in the clear.
    pub fn clear_mapped(&self) -> RealMatrix {
        let x = self.xa_aug().vstack(&self.xb_aug()).unwrap();
        let w0 = self.wa.hstack(&self.wb).unwrap();
        x.matmul(&w0).unwrap().matmul(&self.w1).unwrap()
    }
}

/// Endpoint wrapper that can rewrite outgoing messages and records
/// everything received.
pub struct Tap<E> {
    pub inner: E,
    pub rewrite: Box<dyn FnMut(&mut ProtocolMessage) + Send>,
    pub received: Arc<Mutex<Vec<ProtocolMessage>>>,
}

impl<E: Endpoint> Tap<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            rewrite: Box::new(|_| {}),
            received: Arc::default(),
        }
    }

    pub fn rewriting(inner: E, f: impl FnMut(&mut ProtocolMessage) + Send + 'static) -> Self {
        Self {
            rewrite: Box::new(f),
            ..Self::new(inner)
        }
    }
}

impl<E: Endpoint> Endpoint for Tap<E> {
    fn role(&self) -> Role {
        self.inner.role()
    }

    fn send(&mut self, msg: &ProtocolMessage) -> Result<usize, TransportError> {
        let mut msg = msg.clone();
        (self.rewrite)(&mut msg);
        self.inner.send(&msg)
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, TransportError> {
        let msg = self.inner.recv(from)?;
        self.received.lock().unwrap().push(msg.clone());
        Ok(msg)
    }
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-sample")
}

pub fn mnist_train() -> LabeledDataset {
    let d = data_dir();
    load_idx(
        "mnist",
        &d.join("train-images-idx3-ubyte.gz"),
        &d.join("train-labels-idx1-ubyte.gz"),
    )
    .unwrap()
}

pub fn mnist_test() -> LabeledDataset {
    let d = data_dir();
    load_idx(
        "mnist",
        &d.join("t10k-images-idx3-ubyte.gz"),
        &d.join("t10k-labels-idx1-ubyte.gz"),
    )
    .unwrap()
}

pub mod equivalence {
    use msbls::bls::BlsHyperParams;
    use msbls::datasets::split_quantity;
    use msbls::experiment::{fit_msbls, RunContext, TcpAddrs, TransportChoice};
    use msbls::protocol::{MaskConfig, ProtocolMessage};
    use msbls::transport::{decode_message, encode_message, FrameError};

    /// Train the same seeded secure model over the in-process bus and over
    /// loopback TCP; mapped features and output weights must match bit for
    /// bit, as must the traffic volume.
    pub fn check_backends_agree(train_rows: usize, test_rows: usize, seed: u64) -> Result<(), String> {
        let train = super::mnist_train().head(train_rows).unwrap();
        let test = super::mnist_test().head(test_rows).unwrap();
        let test = msbls::datasets::LabeledDataset::new("mnist", test.features().clone(), test.labels().to_vec(), 10).unwrap();
        let (a, b) = split_quantity(&train, 0.3, seed).unwrap();
        let hp = BlsHyperParams {
            enhancement_dim: 200,
            seed,
            ..BlsHyperParams::default()
        };
        let ctx = |transport| RunContext {
            train_a: &a,
            train_b: &b,
            test: &test,
            hyperparams: hp,
            seed,
            mask: MaskConfig::default(),
            transport,
            split_label: "quantity:0.3",
        };
        let bus = fit_msbls(&ctx(TransportChoice::InProcess)).map_err(|e| e.to_string())?;
        let tcp = fit_msbls(&ctx(TransportChoice::Tcp(TcpAddrs::loopback()))).map_err(|e| e.to_string())?;
        let same = |x: &msbls::RealMatrix, y: &msbls::RealMatrix| {
            x.shape() == y.shape() && x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits())
        };
        if !same(&bus.fitted.zn_train, &tcp.fitted.zn_train) || !same(&bus.fitted.zn_test, &tcp.fitted.zn_test) {
            return Err("mapped features differ between backends".into());
        }
        if !same(&bus.fitted.model.output_weights, &tcp.fitted.model.output_weights) {
            return Err("output weights differ between backends".into());
        }
        if bus.train_transcript != tcp.train_transcript || bus.test_transcript != tcp.test_transcript {
            return Err("transcripts differ between backends".into());
        }
        Ok(())
    }

    /// Every message round-trips bit-exactly and any flipped bit in the
    /// checksummed region is rejected.
    pub fn check_frames(messages: &[ProtocolMessage], seed: u64) -> Result<(), String> {
        for (k, msg) in messages.iter().enumerate() {
            let frame = encode_message(msg).map_err(|e| e.to_string())?;
            let back = decode_message(&frame).map_err(|e| e.to_string())?;
            if encode_message(&back).map_err(|e| e.to_string())? != frame || &back != msg {
                return Err(format!("seq {} does not round-trip", msg.seq));
            }
            let bit = (seed as usize * 7919 + k * 104_729) % (8 * frame.len());
            let mut bad = frame.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            if decode_message(&bad).is_ok() {
                return Err(format!("flipped bit {bit} of seq {} was accepted", msg.seq));
            }
            let mut crc_only = frame.clone();
            let last = crc_only.len() - 1;
            crc_only[last] ^= 0x01;
            if !matches!(decode_message(&crc_only), Err(FrameError::ChecksumMismatch { .. })) {
                return Err(format!("corrupted checksum of seq {} was not reported", msg.seq));
            }
        }
        Ok(())
    }
}
