use std::sync::Arc;

use crate::codec::{Codec, LatentSample};
use crate::control::Transcript;
use crate::endpoints::{CloudService, EdgeAgent, LoopbackTransport, ServiceConfig};
use crate::Result;

/// Runs one loopback session per sample through the real service handlers.
pub fn run_e2e(codec: Arc<dyn Codec>, samples: &[LatentSample], config: &ServiceConfig) -> Result<Vec<Transcript>> {
    let service = Arc::new(CloudService::new(Arc::clone(&codec), config.clone())?);
    let agent = EdgeAgent::new(codec, config.link, Box::new(LoopbackTransport::new(service)));
    samples.iter().map(|z| agent.run(z).map(|(t, _)| t)).collect()
}
