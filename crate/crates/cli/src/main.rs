use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use progsem::bench::{gen_synthetic, run_cost_table, run_curves, run_e2e, selftest, write_csv, SyntheticSpec};
use progsem::codec::{fit_linear_oracle, AnyCodec, Codec, Dataset, MetaAE, MetaAEConfig, TrainOptions};
use progsem::repr::make_boundaries;
use progsem_cli::{init_logging, load_codec, ControlArgs, LinkArgs};

#[derive(Parser)]
#[command(name = "progsem", version, about = "Progressive semantic transmission toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecKind {
    Meta,
    Linear,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic latent dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2048)]
        n_samples: usize,
        #[arg(long, default_value_t = 16)]
        n_tokens: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        rank: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_std: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Train a codec on the training split of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = CodecKind::Meta)]
        codec: CodecKind,
        /// Defaults to the reference configuration's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        log_every: u64,
    },
    /// Sweep levels on the held-out split and write a quality/delay CSV.
    Curves {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        link: LinkArgs,
    },
    /// Cumulative payload of progressive and restart-from-scratch schemes.
    CostTable {
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 1024)]
        chunk_bytes: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run in-process edge/cloud sessions and print transcripts as JSON.
    E2e {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        /// First held-out sample to use.
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[command(flatten)]
        control: ControlArgs,
    },
    /// Quick internal consistency checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_dataset(path: &PathBuf) -> Result<Dataset> {
    Dataset::read(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn train(data: &PathBuf, out: &PathBuf, kind: CodecKind, epochs: Option<usize>, seed: u64, levels: usize, log_every: u64) -> Result<()> {
    let ds = read_dataset(data)?;
    let train = Dataset::new(ds.n_tokens(), ds.width(), ds.train_split().to_vec())?;
    let codec: AnyCodec = match kind {
        CodecKind::Linear => {
            let b = make_boundaries(ds.n_tokens(), levels)?;
            fit_linear_oracle(&train, &b, seed)?.into()
        }
        CodecKind::Meta => {
            let mut cfg = MetaAEConfig::reference();
            cfg.n_tokens = ds.n_tokens();
            cfg.d_model = ds.width();
            cfg.k_levels = levels;
            cfg.seed = seed;
            let mut model = MetaAE::new(cfg)?;
            let history = model.fit(train.samples(), &TrainOptions { epochs, log_every })?;
            if let Some(last) = history.last() {
                log::info!("trained {} epochs, final loss {last:.5}", history.len());
            }
            model.into()
        }
    };
    codec.write(out)?;
    println!("{} {}", out.display(), codec.checksum());
    Ok(())
}

fn main() -> Result<()> {
    init_logging();
    match Cli::parse().cmd {
        Cmd::Gen { out, n_samples, n_tokens, width, rank, noise_std, seed } => {
            let spec = SyntheticSpec { n_samples, n_tokens, width, rank, noise_std, seed };
            gen_synthetic(&spec)?.write(&out)?;
            log::info!("wrote {n_samples} samples of {n_tokens}x{width} to {}", out.display());
        }
        Cmd::Train { data, out, codec, epochs, seed, levels, log_every } => {
            train(&data, &out, codec, epochs, seed, levels, log_every)?;
        }
        Cmd::Curves { checkpoint, data, out, link } => {
            let codec = load_codec(&checkpoint)?;
            let ds = read_dataset(&data)?;
            let curves = run_curves(codec.as_ref(), ds.holdout_split(), &link.link()?)?;
            write_csv(&curves.points, output(&out)?)?;
            eprintln!("srcc {:.4}", curves.srcc);
        }
        Cmd::CostTable { k_max, chunk_bytes, out } => {
            let rows = run_cost_table(1..=k_max, chunk_bytes)?;
            write_csv(&rows, output(&out)?)?;
        }
        Cmd::E2e { checkpoint, data, samples, offset, control } => {
            let codec: Arc<dyn Codec> = load_codec(&checkpoint)?;
            let ds = read_dataset(&data)?;
            let held = ds.holdout_split();
            if offset >= held.len() {
                bail!("offset {offset} past the {} held-out samples", held.len());
            }
            let end = (offset + samples).min(held.len());
            let cfg = control.service_config()?;
            let transcripts = run_e2e(codec, &held[offset..end], &cfg)?;
            println!("{}", serde_json::to_string_pretty(&transcripts)?);
        }
        Cmd::Selftest { seed } => {
            let lines = selftest(seed)?;
            for line in &lines {
                println!("{line}");
            }
            if lines.iter().any(|l| !l.passed) {
                bail!("selftest failed");
            }
        }
    }
    Ok(())
}
