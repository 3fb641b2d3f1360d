//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use common::equivalence::{check_backends_agree, check_frames};
use common::security::{aborted_session, check_transcript_ambiguity, check_view_confinement, check_wiped, observed_session};
use common::Instance;
use msbls::bls::{assemble_mapping_weights, augment, classic_mapped_features, mapped_features_simplified, BlsHyperParams, MappedGroup};
use msbls::datasets::{split_non_iid, split_quantity, LabeledDataset};
use msbls::experiment::{fit_msbls, fit_non_privacy_bls, fit_single_party, FittedModel, MsblsFit, RunContext, TransportChoice};
use msbls::numerics::{pseudoinverse, random_matrix, ridge_solve, MatrixDistribution, RealMatrix, RngStream};
use msbls::protocol::{run_protocol_in_process, ClientInput, MaskConfig, MixKeySource, MESSAGES_PER_SESSION};
use rand::Rng;

// Tolerances
const PROTOCOL_REL_TOL: f64 = 1e-8;
const PROTOCOL_BUDGET_S: f64 = 30.0;
const ACCURACY_GAP_PP: f64 = 0.5;
const RATIO_RANGE_PP: f64 = 1.0;
const SMALL_SHARD_GAP_PP: f64 = 3.0;
const NON_IID_SBLS_MAX: f64 = 0.65;
const NON_IID_GAP_PP: f64 = 20.0;
const SIMPLIFICATION_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-6;
const RECOVERY_TOL: f64 = 1e-5;
const PINV_LAMBDA: f64 = 1e-10;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn pp(x: f64) -> f64 {
    100.0 * x
}

fn data() -> &'static (LabeledDataset, LabeledDataset) {
    static DATA: OnceLock<(LabeledDataset, LabeledDataset)> = OnceLock::new();
    DATA.get_or_init(|| (common::mnist_train(), common::mnist_test()))
}

fn ctx<'a>(a: &'a LabeledDataset, b: &'a LabeledDataset, seed: u64, label: &'a str) -> RunContext<'a> {
    RunContext {
        train_a: a,
        train_b: b,
        test: &data().1,
        hyperparams: BlsHyperParams {
            seed,
            ..BlsHyperParams::default()
        },
        seed,
        mask: MaskConfig::default(),
        transport: TransportChoice::InProcess,
        split_label: label,
    }
}

fn msbls(c: &RunContext<'_>) -> Result<MsblsFit, String> {
    fit_msbls(c).map_err(|e| e.to_string())
}

fn nbls(c: &RunContext<'_>) -> Result<FittedModel, String> {
    fit_non_privacy_bls(c).map_err(|e| e.to_string())
}

fn random_instances(count: usize) -> Vec<Instance> {
    let mut rng = RngStream::with_stream(2024, 1);
    (0..count as u64)
        .map(|i| {
            let rows_a = rng.gen_range(1..=200);
            let rows_b = rng.gen_range(1..=200);
            let d = rng.gen_range(1..=50);
            let width = 2 * rng.gen_range(2..=20);
            Instance::random(rows_a, rows_b, d, width, 1000 + i)
        })
        .collect()
}

fn run_instance(inst: &Instance, mask_seed: u64) -> Result<msbls::protocol::SessionOutput, String> {
    run_protocol_in_process(
        inst.params,
        MaskConfig::default(),
        &mut RngStream::new(mask_seed),
        MixKeySource::Persisted(inst.w1.clone()),
        ClientInput { features: &inst.xa, key: &inst.wa },
        ClientInput { features: &inst.xb, key: &inst.wb },
    )
    .map_err(|e| e.to_string())
}

fn protocol_correctness() -> Outcome {
    let instances = random_instances(120);
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (i, inst) in instances.iter().enumerate() {
        let out = run_instance(inst, i as u64)?;
        let err = out.zn.relative_frobenius_error(&inst.clear_mapped());
        if err.is_nan() || err > PROTOCOL_REL_TOL {
            return Err(format!("instance {i} {:?}: relative error {err:e}", inst.params));
        }
        worst = worst.max(err);
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= PROTOCOL_BUDGET_S {
        return Err(format!("took {secs:.1}s (budget {PROTOCOL_BUDGET_S}s)"));
    }
    Ok(format!(
        "{} instances, worst relative Frobenius error {worst:.2e} (tol {PROTOCOL_REL_TOL:e}), {secs:.2}s",
        instances.len()
    ))
}

fn message_budget() -> Outcome {
    let mut counts = Vec::new();
    for (i, inst) in random_instances(120).iter().enumerate() {
        counts.push(run_instance(inst, 500 + i as u64)?.message_count());
    }
    let big = Instance::random(5_000, 5_000, 20, 10, 77);
    let out = run_instance(&big, 1)?;
    counts.push(out.message_count());
    if let Some(bad) = counts.iter().find(|&&c| c != MESSAGES_PER_SESSION) {
        return Err(format!("a session used {bad} messages"));
    }
    Ok(format!(
        "{} sessions incl. N=10^4 rows, all exactly {MESSAGES_PER_SESSION} messages ({:.1} MB on the wire for N=10^4)",
        counts.len(),
        out.bytes_on_wire() as f64 / 1e6
    ))
}

fn privacy_equivalence() -> Outcome {
    let (train, _) = data();
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let started = Instant::now();
        let (a, b) = split_quantity(train, 0.5, seed).map_err(|e| e.to_string())?;
        let c = ctx(&a, &b, seed, "quantity:0.5");
        let (s, p) = (msbls(&c)?.fitted, nbls(&c)?);
        let gap = pp((s.test_accuracy - p.test_accuracy).abs());
        lines.push(format!(
            "seed {seed}: {:.2}% vs {:.2}% ({:.0}s)",
            pp(s.test_accuracy),
            pp(p.test_accuracy),
            started.elapsed().as_secs_f64()
        ));
        if gap > ACCURACY_GAP_PP {
            return Err(format!("seed {seed}: gap {gap:.2}pp > {ACCURACY_GAP_PP}pp; {}", lines.join("; ")));
        }
    }
    Ok(format!("MSBLS vs N-BLS test accuracy, {} train / {} test: {}", train.len(), data().1.len(), lines.join("; ")))
}

fn quantity_imbalance() -> Outcome {
    let (train, _) = data();
    let mut accs = Vec::new();
    let mut small_shard_gap = None;
    for ratio in [0.5, 0.4, 0.3, 0.2, 0.1, 0.05] {
        let (a, b) = split_quantity(train, ratio, 0).map_err(|e| e.to_string())?;
        let label = format!("quantity:{ratio}");
        let c = ctx(&a, &b, 0, &label);
        let s = msbls(&c)?.fitted.test_accuracy;
        accs.push(s);
        if ratio == 0.05 {
            let (small, _) = fit_single_party(&c).map_err(|e| e.to_string())?;
            small_shard_gap = Some((small.test_accuracy, pp(s - small.test_accuracy)));
        }
    }
    let hi = accs.iter().cloned().fold(f64::MIN, f64::max);
    let lo = accs.iter().cloned().fold(f64::MAX, f64::min);
    let range = pp(hi - lo);
    let (small_acc, gap) = small_shard_gap.expect("5:95 evaluated");
    let detail = format!(
        "MSBLS over 50:50..5:95 = [{}], range {range:.2}pp; S-BLS 5% shard {:.2}%, {gap:.2}pp below MSBLS",
        accs.iter().map(|a| format!("{:.2}%", pp(*a))).collect::<Vec<_>>().join(", "),
        pp(small_acc)
    );
    if range > RATIO_RANGE_PP || gap < SMALL_SHARD_GAP_PP {
        return Err(detail);
    }
    Ok(detail)
}

fn non_iid() -> Outcome {
    let (train, _) = data();
    let (a, b) = split_non_iid(train).map_err(|e| e.to_string())?;
    let c = ctx(&a, &b, 0, "noniid");
    let s = msbls(&c)?.fitted.test_accuracy;
    let p = nbls(&c)?.test_accuracy;
    let (sa, sb) = fit_single_party(&c).map_err(|e| e.to_string())?;
    let single = (sa.test_accuracy + sb.test_accuracy) / 2.0;
    let detail = format!(
        "classes A {:?} / B {:?}; S-BLS {:.2}% (A {:.2}%, B {:.2}%), MSBLS {:.2}%, N-BLS {:.2}%",
        a.present_classes(),
        b.present_classes(),
        pp(single),
        pp(sa.test_accuracy),
        pp(sb.test_accuracy),
        pp(s),
        pp(p)
    );
    if single > NON_IID_SBLS_MAX || pp(s - single) < NON_IID_GAP_PP || pp((s - p).abs()) > ACCURACY_GAP_PP {
        return Err(detail);
    }
    Ok(detail)
}

fn simplification() -> Outcome {
    let mut rng = RngStream::with_stream(6, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (rows, d) = (rng.gen_range(1..=60), rng.gen_range(1..=30));
        let (n, dz) = (rng.gen_range(1..=6), rng.gen_range(1..=8));
        let normal = |r, c, rng: &mut RngStream| random_matrix(r, c, MatrixDistribution::StandardNormal, rng).unwrap();
        let x = normal(rows, d, &mut rng);
        let groups: Vec<MappedGroup> = (0..n)
            .map(|_| MappedGroup {
                weights: normal(d, dz, &mut rng),
                bias: normal(1, dz, &mut rng),
            })
            .collect();
        let classic = classic_mapped_features(&x, &groups).map_err(|e| e.to_string())?;
        let w0 = assemble_mapping_weights(&groups).map_err(|e| e.to_string())?;
        let ident = RealMatrix::identity(n * dz).unwrap();
        let simple = mapped_features_simplified(&augment(&x).unwrap(), &w0, &ident).map_err(|e| e.to_string())?;
        let diff = classic.max_abs_diff(&simple);
        if diff.is_nan() || diff > SIMPLIFICATION_TOL {
            return Err(format!("instance {i}: max entry difference {diff:e}"));
        }
        worst = worst.max(diff);
    }
    Ok(format!("100 instances, worst entrywise difference {worst:.2e} (tol {SIMPLIFICATION_TOL:e})"))
}

fn pseudoinverse_properties() -> Outcome {
    let mut rng = RngStream::with_stream(7, 0);
    let (mut worst_rec, mut worst_fit) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let n = rng.gen_range(1..=20);
        let m = rng.gen_range(n..=n + 30);
        let normal = |r, c, rng: &mut RngStream| random_matrix(r, c, MatrixDistribution::StandardNormal, rng).unwrap();
        let a = normal(m, n, &mut rng);
        let pinv = pseudoinverse(&a, PINV_LAMBDA).map_err(|e| e.to_string())?;
        let rec = a.matmul(&pinv).unwrap().matmul(&a).unwrap().max_abs_diff(&a);
        let w_true = normal(n, 3, &mut rng);
        let y = a.matmul(&w_true).unwrap();
        let w = ridge_solve(&a, &y, PINV_LAMBDA).map_err(|e| e.to_string())?;
        let fit = w.max_abs_diff(&w_true);
        if !(rec < RECONSTRUCTION_TOL && fit < RECOVERY_TOL) {
            return Err(format!("instance {i} ({m}x{n}): ‖AA⁺A−A‖max {rec:e}, recovery {fit:e}"));
        }
        worst_rec = worst_rec.max(rec);
        worst_fit = worst_fit.max(fit);
    }
    Ok(format!(
        "50 instances, worst ‖AA⁺A−A‖max {worst_rec:.2e} (tol {RECONSTRUCTION_TOL:e}), worst recovery {worst_fit:.2e} (tol {RECOVERY_TOL:e})"
    ))
}

fn security() -> Outcome {
    for seed in 0..20u64 {
        let inst = Instance::random(10 + seed as usize * 3, 25 - seed as usize, 2 + (seed as usize % 9), 4 + 2 * (seed as usize % 5), seed);
        let (out, inboxes) = observed_session(&inst, seed);
        check_view_confinement(&inst, &out, &inboxes[0]).map_err(|e| format!("session {seed}: {e}"))?;
        check_transcript_ambiguity(&inst, &out, &inboxes, seed).map_err(|e| format!("session {seed}: {e}"))?;
    }
    let inst = Instance::random(8, 6, 4, 6, 99);
    for seq in 1..=MESSAGES_PER_SESSION as u16 {
        let abort = aborted_session(&inst, seq);
        if abort.error.seq() != Some(seq) {
            return Err(format!("fault at seq {seq} reported as {}", abort.error));
        }
        let parties = (abort.server.as_ref(), abort.client_a.as_ref(), abort.client_b.as_ref());
        let (Some(s), Some(a), Some(b)) = parties else {
            return Err(format!("fault at seq {seq}: a party state was lost"));
        };
        check_wiped(s, a, b).map_err(|e| format!("fault at seq {seq}: {e}"))?;
    }
    Ok("view confinement and second-plaintext construction (X*_A, E1, E2) on 20 sessions; faults at each of the 12 seqs abort with no Zn and zeroed state".into())
}

fn transport_equivalence() -> Outcome {
    check_backends_agree(1500, 300, 3)?;
    let mut frames = 0;
    for seed in 0..5u64 {
        let inst = Instance::random(7 + seed as usize, 5, 3, 4, seed + 40);
        let (_, [s, a, b]) = observed_session(&inst, seed);
        let all: Vec<_> = s.into_iter().chain(a).chain(b).collect();
        frames += all.len();
        check_frames(&all, seed)?;
    }
    Ok(format!(
        "in-process and loopback TCP give bit-identical Zn (train and test) and output weights; {frames} frames round-trip, bit flips and CRC corruption rejected"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("protocol correctness", protocol_correctness),
        ("message budget", message_budget),
        ("privacy equivalence", privacy_equivalence),
        ("quantity-imbalance stability", quantity_imbalance),
        ("non-IID scenario", non_iid),
        ("algebraic simplification", simplification),
        ("pseudoinverse properties", pseudoinverse_properties),
        ("security properties", security),
        ("transport equivalence", transport_equivalence),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}) [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}) [{secs:.1}s]: {detail}");
            }
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
