use std::net::ToSocketAddrs;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Parser;
use progsem::codec::Dataset;
use progsem::endpoints::{EdgeAgent, TcpTransport};
use progsem_cli::{init_logging, load_codec, LinkArgs};

/// Edge client: encodes held-out samples and streams chunks to a cloud endpoint.
#[derive(Parser)]
#[command(name = "progsem-edge", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8700")]
    connect: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    offset: usize,
    #[arg(long, default_value_t = 3)]
    attempts: u32,
    #[arg(long, default_value_t = 5.0)]
    timeout_s: f64,
    #[command(flatten)]
    link: LinkArgs,
}

fn main() -> Result<()> {
    init_logging();
    let args = Args::parse();
    let addr = args
        .connect
        .to_socket_addrs()?
        .next()
        .with_context(|| format!("cannot resolve {}", args.connect))?;
    let codec = load_codec(&args.checkpoint)?;
    let ds = Dataset::read(&args.data)?;
    let held = ds.holdout_split();
    if args.offset >= held.len() {
        bail!("offset {} past the {} held-out samples", args.offset, held.len());
    }
    let transport = TcpTransport::new(addr).with_retries(args.attempts, Duration::from_secs_f64(args.timeout_s));
    let agent = EdgeAgent::new(codec, args.link.link()?, Box::new(transport)).realtime(args.link.realtime);
    let end = (args.offset + args.samples).min(held.len());
    for z in &held[args.offset..end] {
        let (transcript, _) = agent.run(z)?;
        log::info!(
            "session {} stopped at level {} after {} bytes",
            transcript.session_id,
            transcript.terminal_level,
            transcript.total_frame_bytes()
        );
        println!("{}", serde_json::to_string(&transcript)?);
    }
    Ok(())
}
