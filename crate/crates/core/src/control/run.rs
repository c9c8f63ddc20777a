use super::{CloudSession, Decision, EdgeSession, Round, Transcript};
use crate::codec::LatentSample;
use crate::transport::{frame_http_post, parse_http, send_over_link, ChunkPayload, LinkMode, LinkModel};
use crate::{Error, Result};

pub(crate) const CHUNK_PATH: &str = "/v1/chunk";
pub(crate) const CLOUD_HOST: &str = "cloud";

/// Drives one closed-loop session in process.
///
/// Every round is a framed `POST` handed across the link model, so byte
/// counts and delays match what the network services would see.
pub fn run_session(
    edge: &mut EdgeSession,
    cloud: &mut CloudSession,
    link: &LinkModel,
    mode: &LinkMode,
    z: &LatentSample,
) -> Result<Transcript> {
    if edge.checksum() != cloud.checksum() {
        return Err(Error::protocol("codec checksum mismatch between edge and cloud"));
    }
    if edge.id() != cloud.id() {
        return Err(Error::protocol("edge and cloud disagree on the session id"));
    }
    edge.open(z)?;
    let k = cloud.levels();
    let mut rounds = Vec::new();
    let mut through = cloud.initial_level();
    loop {
        let first_level = edge.sent_level() + 1;
        let payload = edge.payload_through(through)?;
        let body = payload.to_bytes();
        let frame = frame_http_post(CHUNK_PATH, CLOUD_HOST, &body);
        let delivery = send_over_link(&frame, link, mode)?;
        let (_, received) = parse_http(&delivery.bytes)?;
        let step = cloud.receive(&ChunkPayload::parse(&received)?)?;
        rounds.push(Round {
            first_level,
            last_level: step.level,
            chunk_bytes: payload.raw_len(),
            payload_bytes: body.len(),
            frame_bytes: frame.len(),
            delay: delivery.modeled_delay,
            wall_delay: delivery.wall_delay,
            q: step.decoded.q,
            e_hat: step.decoded.e_hat,
            decision: step.decision,
        });
        match step.decision {
            Decision::Continue(next) => through = next,
            Decision::Terminate(_) => break,
        }
    }
    Ok(Transcript {
        session_id: edge.id().to_owned(),
        epsilon: cloud.epsilon(),
        initial_level: cloud.initial_level(),
        k_levels: k,
        terminal_level: cloud.level(),
        rounds,
        encode_calls: edge.encode_calls(),
        output: None,
    })
}
