//! Flag groups shared by the `progsem` binaries.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use progsem::codec::{AnyCodec, Codec};
use progsem::endpoints::ServiceConfig;
use progsem::transport::LinkModel;

#[derive(Args, Debug, Clone)]
pub struct LinkArgs {
    /// Uplink rate in bits per second.
    #[arg(long)]
    pub rate_bps: Option<f64>,
    /// Token-bucket burst in bits.
    #[arg(long)]
    pub burst_bits: Option<f64>,
    /// Fixed per-message overhead in milliseconds.
    #[arg(long)]
    pub overhead_ms: Option<f64>,
    /// Sleep the modeled delay instead of only recording it.
    #[arg(long)]
    pub realtime: bool,
}

impl LinkArgs {
    pub fn apply(&self, link: &mut LinkModel) {
        if let Some(v) = self.rate_bps {
            link.rate_bps = v;
        }
        if let Some(v) = self.burst_bits {
            link.burst_bits = v;
        }
        if let Some(v) = self.overhead_ms {
            link.fixed_overhead = v / 1000.0;
        }
    }

    pub fn link(&self) -> anyhow::Result<LinkModel> {
        let mut link = LinkModel::default();
        self.apply(&mut link);
        link.validate()?;
        Ok(link)
    }
}

#[derive(Args, Debug, Clone)]
pub struct ControlArgs {
    /// Key=value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Quality threshold for termination.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Number of chunks in the first transmission.
    #[arg(long)]
    pub initial_level: Option<usize>,
    #[command(flatten)]
    pub link: LinkArgs,
}

impl ControlArgs {
    pub fn service_config(&self) -> anyhow::Result<ServiceConfig> {
        let mut cfg = match &self.config {
            Some(p) => ServiceConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ServiceConfig::default(),
        };
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.initial_level {
            cfg.initial_level = v;
        }
        self.link.apply(&mut cfg.link);
        cfg.realtime |= self.link.realtime;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_codec(path: &std::path::Path) -> anyhow::Result<Arc<dyn Codec>> {
    let codec = AnyCodec::read(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(Arc::new(codec))
}

pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
}
