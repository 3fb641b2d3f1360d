use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use msbls::bls::{Activation, BlsHyperParams};
use msbls::datasets::{SplitMode, SplitPlan};
use msbls::experiment::{
    run_experiment, summary_table, Baseline, DatasetPaths, ExperimentConfig, TcpAddrs, TransportChoice,
};
use msbls::protocol::MaskConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetName {
    Mnist,
    Fashion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Transport {
    Inproc,
    Tcp,
}

/// Train a secure two-client broad learning system and its plaintext
/// baselines, writing one JSON line per trained model.
#[derive(Debug, Parser)]
#[command(name = "msbls", version)]
struct Args {
    #[arg(long, value_enum, default_value = "mnist")]
    dataset: DatasetName,
    /// Directory holding the four standard IDX files (gzipped or raw).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Use only the first N training rows.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use only the first N test rows.
    #[arg(long)]
    test_limit: Option<usize>,

    /// `quantity:<ratio of client A>` or `noniid`.
    #[arg(long, default_value = "quantity:0.5")]
    split: SplitMode,
    /// Seed of the first split; defaults to --seed.
    #[arg(long)]
    split_seed: Option<u64>,

    /// Mapped-feature groups.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Width of each mapped-feature group.
    #[arg(long, default_value_t = 10)]
    dz: usize,
    /// Enhancement groups.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Width of each enhancement group.
    #[arg(long, default_value_t = 1000)]
    dh: usize,
    #[arg(long, default_value_t = 1e-8)]
    lambda: f64,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Comma separated subset of msbls, nbls, sbls.
    #[arg(long, value_delimiter = ',', default_value = "msbls,nbls,sbls")]
    baselines: Vec<Baseline>,

    #[arg(long, value_enum, default_value = "inproc")]
    transport: Transport,
    /// Listen address of the server role (tcp transport).
    #[arg(long, default_value = "127.0.0.1:0")]
    listen_server: SocketAddr,
    /// Listen address of client A (tcp transport).
    #[arg(long, default_value = "127.0.0.1:0")]
    listen_a: SocketAddr,
    /// Listen address of client B (tcp transport).
    #[arg(long, default_value = "127.0.0.1:0")]
    listen_b: SocketAddr,

    /// Half-width r of the uniform masks U(-r, r).
    #[arg(long, default_value_t = MaskConfig::DEFAULT_HALF_WIDTH)]
    mask_range: f64,
    /// Disable masking (debugging only; the protocol then leaks everything).
    #[arg(long)]
    zero_masks: bool,

    /// Append reports to this JSONL file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a summary table to stderr.
    #[arg(long)]
    summary: bool,
    /// Run up to K repetitions concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_runs: usize,
}

fn dataset_paths(args: &Args) -> Result<DatasetPaths> {
    let name = match args.dataset {
        DatasetName::Mnist => "mnist",
        DatasetName::Fashion => "fashion",
    };
    let dir = match (&args.data_dir, args.dataset) {
        (Some(d), _) => Some(d.clone()),
        (None, DatasetName::Mnist) => Some(PathBuf::from("data/mnist-sample")),
        (None, DatasetName::Fashion) => None,
    };
    let pick = |explicit: &Option<PathBuf>, file: &str| -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        let Some(dir) = &dir else {
            bail!("--{name} needs --data-dir or explicit --train-images/--train-labels/--test-images/--test-labels");
        };
        let gz = dir.join(format!("{file}.gz"));
        Ok(if gz.exists() { gz } else { dir.join(file) })
    };
    Ok(DatasetPaths {
        name: name.into(),
        train_images: pick(&args.train_images, "train-images-idx3-ubyte")?,
        train_labels: pick(&args.train_labels, "train-labels-idx1-ubyte")?,
        test_images: pick(&args.test_images, "t10k-images-idx3-ubyte")?,
        test_labels: pick(&args.test_labels, "t10k-labels-idx1-ubyte")?,
    })
}

fn config(args: &Args) -> Result<ExperimentConfig> {
    let mask = if args.zero_masks {
        MaskConfig::zero()
    } else {
        MaskConfig {
            half_width: args.mask_range,
        }
    };
    let transport = match args.transport {
        Transport::Inproc => TransportChoice::InProcess,
        Transport::Tcp => TransportChoice::Tcp(TcpAddrs {
            server: args.listen_server,
            client_a: args.listen_a,
            client_b: args.listen_b,
        }),
    };
    let mut baselines = args.baselines.clone();
    baselines.dedup();
    Ok(ExperimentConfig {
        dataset: dataset_paths(args)?,
        train_limit: args.train_limit,
        test_limit: args.test_limit,
        split: SplitPlan {
            mode: args.split,
            seed: args.split_seed.unwrap_or(args.seed),
        },
        hyperparams: BlsHyperParams {
            mapped_groups: args.n,
            mapped_dim: args.dz,
            enhancement_groups: args.m,
            enhancement_dim: args.dh,
            lambda: args.lambda,
            activation: args.activation,
            seed: args.seed,
        },
        transport,
        mask,
        baselines,
        repetitions: args.reps,
        parallel_runs: args.parallel_runs,
    })
}

fn main() -> Result<()> {
    let args = Args::parse();
    let cfg = config(&args)?;
    let reports = run_experiment(&cfg).context("experiment failed")?;

    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(
            File::options()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("cannot open {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    for r in &reports {
        writeln!(sink, "{}", r.to_json_line())?;
    }
    sink.flush()?;
    if args.summary {
        eprint!("{}", summary_table(&reports));
    }
    Ok(())
}
