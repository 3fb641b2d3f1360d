use std::path::Path;
use std::thread;
use std::time::Instant;

use rand::RngCore;

use crate::bls::{augment, mapped_features_simplified, BlsHyperParams, BlsModel};
use crate::datasets::{load_idx, one_hot, split, LabeledDataset, SplitPlan};
use crate::numerics::{RealMatrix, RngStream, RNG_ALGORITHM};
use crate::protocol::{
    run_protocol, ClientParty, MaskConfig, MixKeySource, ProtocolError, Role, ServerParty, SessionId, SessionOutput,
    SessionParams, TranscriptEntry,
};
use crate::transport::{establish_local_mesh, in_process_endpoints, timeout_from_env};

use super::keys::streams;
use super::{
    accuracy, Baseline, ExperimentConfig, ExperimentError, ExperimentKeys, MetricsReport, ModelKind, Result,
    TransportChoice,
};

/// Data and settings of a single seeded run.
#[derive(Debug, Clone, Copy)]
pub struct RunContext<'a> {
    pub train_a: &'a LabeledDataset,
    pub train_b: &'a LabeledDataset,
    pub test: &'a LabeledDataset,
    pub hyperparams: BlsHyperParams,
    pub seed: u64,
    pub mask: MaskConfig,
    pub transport: TransportChoice,
    /// Split description echoed into reports.
    pub split_label: &'a str,
}

impl RunContext<'_> {
    fn check(&self) -> Result<()> {
        self.hyperparams.validate()?;
        let dim = self.train_a.dim();
        if self.train_b.dim() != dim || self.test.dim() != dim {
            return Err(ExperimentError::Config(format!(
                "feature widths differ: A {}, B {}, test {}",
                dim,
                self.train_b.dim(),
                self.test.dim()
            )));
        }
        let classes = self.train_a.classes();
        if self.train_b.classes() != classes || self.test.classes() != classes {
            return Err(ExperimentError::Config("class counts differ between datasets".into()));
        }
        Ok(())
    }

    fn keys(&self) -> Result<ExperimentKeys> {
        ExperimentKeys::generate(&self.hyperparams, self.train_a.dim(), self.seed)
    }
}

/// A trained model with its mapped features and scores.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: BlsModel,
    pub zn_train: RealMatrix,
    pub zn_test: RealMatrix,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_time_s: f64,
}

/// A secure run: the model plus both session transcripts.
#[derive(Debug, Clone)]
pub struct MsblsFit {
    pub fitted: FittedModel,
    pub train_transcript: Vec<TranscriptEntry>,
    pub test_transcript: Vec<TranscriptEntry>,
}

fn bytes(t: &[TranscriptEntry]) -> usize {
    t.iter().map(|e| e.byte_length).sum()
}

/// Test rows split into contiguous halves, the first ⌈N/2⌉ rows to client A,
/// so the mapped test features come back in the original row order.
pub fn split_test_rows(test: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    if test.len() < 2 {
        return Err(ExperimentError::Config("the test set needs at least two rows".into()));
    }
    let cut = test.len().div_ceil(2);
    let a: Vec<usize> = (0..cut).collect();
    let b: Vec<usize> = (cut..test.len()).collect();
    Ok((
        test.subset(format!("{}/A", test.name), &a)?,
        test.subset(format!("{}/B", test.name), &b)?,
    ))
}

fn run_session(
    transport: TransportChoice,
    params: SessionParams,
    mask: MaskConfig,
    mask_rng: &mut RngStream,
    mix: MixKeySource,
    parts: (&RealMatrix, &RealMatrix),
    keys: &ExperimentKeys,
) -> Result<SessionOutput> {
    let server = ServerParty::new(params, mask, mask_rng, mix)?;
    let a = ClientParty::new(Role::ClientA, params, parts.0, keys.key_a.clone())?;
    let b = ClientParty::new(Role::ClientB, params, parts.1, keys.key_b.clone())?;
    let timeout = timeout_from_env();
    let out = match transport {
        TransportChoice::InProcess => run_protocol(server, a, b, in_process_endpoints(timeout))?,
        TransportChoice::Tcp(addrs) => run_protocol(server, a, b, establish_local_mesh(addrs.as_array(), timeout)?)?,
    };
    if out.message_count() != crate::protocol::MESSAGES_PER_SESSION {
        return Err(ProtocolError::Unexpected {
            role: Role::Server,
            seq: 12,
            detail: format!("session carried {} messages", out.message_count()),
        }
        .into());
    }
    Ok(out)
}

fn pooled_labels(a: &LabeledDataset, b: &LabeledDataset) -> Vec<usize> {
    a.labels().iter().chain(b.labels()).copied().collect()
}

/// Secure training: one session maps the training rows, a second session
/// with the same keys and fresh masks maps the test rows.
pub fn fit_msbls(ctx: &RunContext<'_>) -> Result<MsblsFit> {
    ctx.check()?;
    let keys = ctx.keys()?;
    let hp = ctx.hyperparams;
    let mut ids = RngStream::with_stream(ctx.seed, streams::SESSION_IDS);
    let mut session_id = || SessionId((u128::from(ids.next_u64()) << 64) | u128::from(ids.next_u64()));

    let started = Instant::now();
    let train_params = SessionParams {
        session_id: session_id(),
        rows_a: ctx.train_a.len(),
        rows_b: ctx.train_b.len(),
        input_dim: ctx.train_a.dim(),
        mapped_width: hp.mapped_width(),
    };
    let train = run_session(
        ctx.transport,
        train_params,
        ctx.mask,
        &mut RngStream::with_stream(ctx.seed, streams::MASKS_TRAIN),
        MixKeySource::Generate(ExperimentKeys::mix_rng(ctx.seed)),
        (ctx.train_a.features(), ctx.train_b.features()),
        &keys,
    )?;
    let train_labels = pooled_labels(ctx.train_a, ctx.train_b);
    let y = one_hot(&train_labels, ctx.train_a.classes())?;
    let model = BlsModel::fit(&train.zn, &y, train.mix_key().clone(), keys.enhancement.clone(), hp)?;
    let train_time_s = started.elapsed().as_secs_f64();

    let (test_a, test_b) = split_test_rows(ctx.test)?;
    let test_params = SessionParams {
        session_id: session_id(),
        rows_a: test_a.len(),
        rows_b: test_b.len(),
        ..train_params
    };
    let test = run_session(
        ctx.transport,
        test_params,
        ctx.mask,
        &mut RngStream::with_stream(ctx.seed, streams::MASKS_TEST),
        MixKeySource::Persisted(model.mix_key.clone()),
        (test_a.features(), test_b.features()),
        &keys,
    )?;

    let train_accuracy = accuracy(&model.predict(&train.zn)?, &train_labels)?;
    let test_accuracy = accuracy(&model.predict(&test.zn)?, ctx.test.labels())?;
    Ok(MsblsFit {
        fitted: FittedModel {
            model,
            zn_train: train.zn,
            zn_test: test.zn,
            train_accuracy,
            test_accuracy,
            train_time_s,
        },
        train_transcript: train.transcript,
        test_transcript: test.transcript,
    })
}

/// Plaintext BLS on `train` with the given keys.
fn fit_plain(train: &LabeledDataset, test: &LabeledDataset, keys: &ExperimentKeys, hp: BlsHyperParams) -> Result<FittedModel> {
    let w0 = keys.mapping_key()?;
    let started = Instant::now();
    let zn_train = mapped_features_simplified(&augment(train.features())?, &w0, &keys.mix)?;
    let model = BlsModel::fit(&zn_train, &train.one_hot()?, keys.mix.clone(), keys.enhancement.clone(), hp)?;
    let train_time_s = started.elapsed().as_secs_f64();
    let zn_test = mapped_features_simplified(&augment(test.features())?, &w0, &keys.mix)?;
    Ok(FittedModel {
        train_accuracy: accuracy(&model.predict(&zn_train)?, train.labels())?,
        test_accuracy: accuracy(&model.predict(&zn_test)?, test.labels())?,
        model,
        zn_train,
        zn_test,
        train_time_s,
    })
}

/// Both shards pooled (A's rows first) and trained in the clear.
pub fn fit_non_privacy_bls(ctx: &RunContext<'_>) -> Result<FittedModel> {
    ctx.check()?;
    let pooled = ctx.train_a.concat(ctx.train_b)?;
    fit_plain(&pooled, ctx.test, &ctx.keys()?, ctx.hyperparams)
}

/// One independent model per client, each scored on the full test set.
pub fn fit_single_party(ctx: &RunContext<'_>) -> Result<(FittedModel, FittedModel)> {
    ctx.check()?;
    let keys = ctx.keys()?;
    Ok((
        fit_plain(ctx.train_a, ctx.test, &keys, ctx.hyperparams)?,
        fit_plain(ctx.train_b, ctx.test, &keys, ctx.hyperparams)?,
    ))
}

fn report(ctx: &RunContext<'_>, model: ModelKind, fit: &FittedModel) -> MetricsReport {
    MetricsReport {
        model,
        dataset: ctx.train_a.name.split('/').next().unwrap_or_default().to_string(),
        split: ctx.split_label.to_string(),
        seed: ctx.seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        train_rows_a: ctx.train_a.len(),
        train_rows_b: ctx.train_b.len(),
        test_rows: ctx.test.len(),
        train_accuracy: fit.train_accuracy,
        test_accuracy: fit.test_accuracy,
        train_time_s: fit.train_time_s,
        message_count: 0,
        bytes_on_wire: 0,
        test_message_count: 0,
        test_bytes_on_wire: 0,
        transport: "none".into(),
        mask_half_width: 0.0,
        hyperparams: ctx.hyperparams,
    }
}

pub fn run_msbls(ctx: &RunContext<'_>) -> Result<MetricsReport> {
    let fit = fit_msbls(ctx)?;
    Ok(MetricsReport {
        message_count: fit.train_transcript.len(),
        bytes_on_wire: bytes(&fit.train_transcript),
        test_message_count: fit.test_transcript.len(),
        test_bytes_on_wire: bytes(&fit.test_transcript),
        transport: ctx.transport.to_string(),
        mask_half_width: ctx.mask.half_width,
        ..report(ctx, ModelKind::Msbls, &fit.fitted)
    })
}

pub fn run_non_privacy_bls(ctx: &RunContext<'_>) -> Result<MetricsReport> {
    Ok(report(ctx, ModelKind::NonPrivacyBls, &fit_non_privacy_bls(ctx)?))
}

/// Reports for client A, client B and their mean, in that order.
pub fn run_single_party(ctx: &RunContext<'_>) -> Result<[MetricsReport; 3]> {
    let (a, b) = fit_single_party(ctx)?;
    let ra = report(ctx, ModelKind::SinglePartyA, &a);
    let rb = report(ctx, ModelKind::SinglePartyB, &b);
    let mean = MetricsReport {
        model: ModelKind::SinglePartyMean,
        train_accuracy: (ra.train_accuracy + rb.train_accuracy) / 2.0,
        test_accuracy: (ra.test_accuracy + rb.test_accuracy) / 2.0,
        train_time_s: ra.train_time_s + rb.train_time_s,
        ..ra.clone()
    };
    Ok([ra, rb, mean])
}

/// Split the training set for repetition seed `seed` and run every selected
/// baseline.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    // repetition r splits with split.seed + r
    let plan = SplitPlan {
        mode: cfg.split.mode,
        seed: cfg.split.seed.wrapping_add(seed.wrapping_sub(cfg.hyperparams.seed)),
    };
    let (train_a, train_b) = split(train, &plan)?;
    let split_label = plan.mode.to_string();
    let ctx = RunContext {
        train_a: &train_a,
        train_b: &train_b,
        test,
        hyperparams: BlsHyperParams { seed, ..cfg.hyperparams },
        seed,
        mask: cfg.mask,
        transport: cfg.transport,
        split_label: &split_label,
    };
    let mut out = Vec::new();
    for baseline in Baseline::ALL.into_iter().filter(|b| cfg.baselines.contains(b)) {
        match baseline {
            Baseline::Msbls => out.push(run_msbls(&ctx)?),
            Baseline::NonPrivacyBls => out.push(run_non_privacy_bls(&ctx)?),
            Baseline::SinglePartyBls => out.extend(run_single_party(&ctx)?),
        }
    }
    Ok(out)
}

fn load(name: &str, images: &Path, labels: &Path, limit: Option<usize>) -> Result<LabeledDataset> {
    let ds = load_idx(name, images, labels)?;
    Ok(match limit {
        Some(n) => ds.head(n)?,
        None => ds,
    })
}

/// Load the data once and run every repetition, at most
/// `cfg.parallel_runs` at a time. Reports come back in repetition order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    if let TransportChoice::Tcp(addrs) = cfg.transport {
        if cfg.parallel_runs > 1 && addrs.as_array().iter().any(|a| a.port() != 0) {
            return Err(ExperimentError::Config(
                "parallel runs over TCP need ephemeral ports (port 0) for every role".into(),
            ));
        }
    }
    let d = &cfg.dataset;
    let train = load(&d.name, &d.train_images, &d.train_labels, cfg.train_limit)?;
    let test = load(&d.name, &d.test_images, &d.test_labels, cfg.test_limit)?;
    let mut test = test;
    if test.classes() < train.classes() {
        // a small test subset may miss the top class
        test = LabeledDataset::new(test.name.clone(), test.features().clone(), test.labels().to_vec(), train.classes())?;
    }
    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|r| cfg.hyperparams.seed.wrapping_add(r)).collect();

    let mut reports = Vec::new();
    for chunk in seeds.chunks(cfg.parallel_runs) {
        let results: Vec<Result<Vec<MetricsReport>>> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| scope.spawn({
                    let (train, test) = (&train, &test);
                    move || run_replicate(cfg, train, test, seed)
                }))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(ExperimentError::Config("run thread panicked".into()))))
                .collect()
        });
        for r in results {
            reports.extend(r?);
        }
    }
    Ok(reports)
}
