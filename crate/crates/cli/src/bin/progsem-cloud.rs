use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;
use progsem::endpoints::{CloudServer, CloudService, StubMode};
use progsem_cli::{init_logging, load_codec, ControlArgs};

/// Cloud endpoint: reassembles chunks, scores quality and asks for more.
#[derive(Parser)]
#[command(name = "progsem-cloud", version)]
struct Args {
    #[arg(long)]
    listen: Option<String>,
    /// Codec checkpoint; may also come from the config file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    stub_mode: Option<StubMode>,
    #[arg(long)]
    stub_latency_ms: Option<u64>,
    #[command(flatten)]
    control: ControlArgs,
}

fn main() -> Result<()> {
    init_logging();
    let args = Args::parse();
    let mut cfg = args.control.service_config()?;
    if let Some(l) = args.listen {
        cfg.listen = l;
    }
    if let Some(p) = args.checkpoint {
        cfg.checkpoint = Some(p);
    }
    if let Some(m) = args.stub_mode {
        cfg.stub.mode = m;
    }
    if let Some(ms) = args.stub_latency_ms {
        cfg.stub.latency_ms = ms;
    }
    let ckpt = cfg.checkpoint.clone().context("no checkpoint given")?;
    let codec = load_codec(&ckpt)?;
    let listen = cfg.listen.clone();
    let service = Arc::new(CloudService::new(codec, cfg)?);
    let server = CloudServer::bind(&listen, service.clone())?;
    log::info!("listening on {} with codec {}", server.local_addr()?, service.checksum());
    server.serve();
    Ok(())
}
