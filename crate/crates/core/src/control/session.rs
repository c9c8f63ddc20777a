use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::{evaluate, Decision};
use crate::codec::{Codec, DecodeResult, LatentSample};
use crate::kernel::Matrix;
use crate::repr::{chunk_range, OrderedRepr, PartialRepr};
use crate::transport::{ChunkPayload, Dtype};
use crate::{Error, Result};

/// Session ids on the wire are 16 lowercase hex digits, so every payload of
/// the same shape has the same size.
pub fn format_session_id(n: u64) -> String {
    format!("{n:016x}")
}

/// Edge half of a session: encodes once and serves chunks from the cache.
pub struct EdgeSession {
    id: String,
    codec: Arc<dyn Codec>,
    checksum: String,
    repr: Option<OrderedRepr>,
    encode_calls: usize,
    sent_level: usize,
}

impl EdgeSession {
    pub fn new(id: impl Into<String>, codec: Arc<dyn Codec>) -> Self {
        let checksum = codec.checksum();
        Self::with_checksum(id, codec, checksum)
    }

    /// Reuses a checksum computed once for the codec.
    pub fn with_checksum(id: impl Into<String>, codec: Arc<dyn Codec>, checksum: String) -> Self {
        EdgeSession {
            id: id.into(),
            codec,
            checksum,
            repr: None,
            encode_calls: 0,
            sent_level: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn encode_calls(&self) -> usize {
        self.encode_calls
    }

    pub fn sent_level(&self) -> usize {
        self.sent_level
    }

    pub fn repr(&self) -> Option<&OrderedRepr> {
        self.repr.as_ref()
    }

    /// Encodes the latent. A session is opened once.
    pub fn open(&mut self, z: &LatentSample) -> Result<()> {
        if self.repr.is_some() {
            return Err(Error::protocol(format!("session {} is already open", self.id)));
        }
        self.encode_calls += 1;
        self.repr = Some(self.codec.encode(z)?);
        Ok(())
    }

    /// Payload carrying every chunk after the last one sent, through `level`.
    pub fn payload_through(&mut self, level: usize) -> Result<ChunkPayload> {
        let repr = self
            .repr
            .as_ref()
            .ok_or_else(|| Error::protocol(format!("no cached representation for session {}", self.id)))?;
        if level <= self.sent_level || level > repr.levels() {
            return Err(Error::protocol(format!(
                "cannot send through level {level}: {} already sent of {}",
                self.sent_level,
                repr.levels()
            )));
        }
        let rows = repr.chunks(self.sent_level + 1, level)?;
        let payload = ChunkPayload::from_matrix(&self.id, level, &rows, &self.checksum)?;
        self.sent_level = level;
        Ok(payload)
    }
}

impl fmt::Debug for EdgeSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EdgeSession")
            .field("id", &self.id)
            .field("encode_calls", &self.encode_calls)
            .field("sent_level", &self.sent_level)
            .finish_non_exhaustive()
    }
}

/// Result of one cloud-side decode.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudStep {
    pub level: usize,
    pub decoded: DecodeResult,
    pub decision: Decision,
}

/// Cloud half: reassembles, decodes and applies the threshold rule.
pub struct CloudSession {
    id: String,
    codec: Arc<dyn Codec>,
    checksum: String,
    epsilon: f64,
    initial_level: usize,
    partial: PartialRepr,
    history: Vec<f64>,
    finished: Option<Decision>,
}

impl CloudSession {
    pub fn new(id: impl Into<String>, codec: Arc<dyn Codec>, epsilon: f64, initial_level: usize) -> Result<Self> {
        let checksum = codec.checksum();
        Self::with_checksum(id, codec, checksum, epsilon, initial_level)
    }

    pub fn with_checksum(
        id: impl Into<String>,
        codec: Arc<dyn Codec>,
        checksum: String,
        epsilon: f64,
        initial_level: usize,
    ) -> Result<Self> {
        if !(1..=codec.levels()).contains(&initial_level) {
            return Err(Error::config(format!(
                "initial level {initial_level} outside 1..={}",
                codec.levels()
            )));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::config(format!("epsilon must be non-negative, got {epsilon}")));
        }
        let partial = PartialRepr::empty(codec.boundaries().to_vec(), codec.repr_width())?;
        Ok(CloudSession {
            id: id.into(),
            codec,
            checksum,
            epsilon,
            initial_level,
            partial,
            history: Vec::new(),
            finished: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn initial_level(&self) -> usize {
        self.initial_level
    }

    pub fn levels(&self) -> usize {
        self.partial.levels()
    }

    pub fn level(&self) -> usize {
        self.partial.level()
    }

    pub fn quality_history(&self) -> &[f64] {
        &self.history
    }

    pub fn finished(&self) -> Option<Decision> {
        self.finished
    }

    /// Zero-padded decoder input assembled from received chunks.
    pub fn reassembled(&self) -> Result<Matrix> {
        self.partial.masked_input()
    }

    pub fn receive(&mut self, payload: &ChunkPayload) -> Result<CloudStep> {
        if payload.session_id != self.id {
            return Err(Error::protocol(format!(
                "payload for session {} sent to session {}",
                payload.session_id, self.id
            )));
        }
        if payload.checksum != self.checksum {
            return Err(Error::protocol("codec checksum mismatch between edge and cloud"));
        }
        if let Some(d) = self.finished {
            return Err(Error::protocol(format!("session {} already terminated ({d:?})", self.id)));
        }
        if payload.dtype != Dtype::Float32 {
            return Err(Error::protocol("chunk payload must be float32"));
        }
        let current = self.partial.level();
        let expected = if current == 0 { self.initial_level } else { current + 1 };
        if payload.level != expected {
            return Err(Error::protocol(format!(
                "expected payload through level {expected}, got {}",
                payload.level
            )));
        }
        let rows = payload.to_matrix()?;
        let mut next = self.partial.clone();
        let mut offset = 0;
        for level in current + 1..=payload.level {
            let (start, end) = chunk_range(self.partial.boundaries(), level);
            let take = end - start;
            if offset + take > rows.rows() {
                return Err(Error::protocol("payload has too few rows for its level"));
            }
            next = next.accept(level, &rows.slice_rows(offset, offset + take))?;
            offset += take;
        }
        if offset != rows.rows() {
            return Err(Error::protocol("payload has more rows than its level covers"));
        }
        let decoded = self.codec.decode(&next.masked_input()?, next.level())?;
        self.partial = next;
        self.history.push(decoded.q);
        let decision = evaluate(decoded.q, self.epsilon, self.partial.level(), self.levels());
        if decision.is_terminal() {
            self.finished = Some(decision);
        }
        Ok(CloudStep {
            level: self.partial.level(),
            decoded,
            decision,
        })
    }
}

impl fmt::Debug for CloudSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CloudSession")
            .field("id", &self.id)
            .field("epsilon", &self.epsilon)
            .field("initial_level", &self.initial_level)
            .field("level", &self.partial.level())
            .field("history", &self.history)
            .finish_non_exhaustive()
    }
}

/// One request/response exchange.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Round {
    pub first_level: usize,
    pub last_level: usize,
    /// Raw float32 bytes of the chunks carried.
    pub chunk_bytes: usize,
    pub payload_bytes: usize,
    pub frame_bytes: usize,
    pub delay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_delay: Option<f64>,
    pub q: f64,
    pub e_hat: f64,
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transcript {
    pub session_id: String,
    pub epsilon: f64,
    pub initial_level: usize,
    pub k_levels: usize,
    pub rounds: Vec<Round>,
    pub terminal_level: usize,
    pub encode_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Transcript {
    pub fn total_frame_bytes(&self) -> usize {
        self.rounds.iter().map(|r| r.frame_bytes).sum()
    }

    pub fn total_chunk_bytes(&self) -> usize {
        self.rounds.iter().map(|r| r.chunk_bytes).sum()
    }

    pub fn total_delay(&self) -> f64 {
        self.rounds.iter().map(|r| r.delay).sum()
    }

    pub fn quality_history(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.q).collect()
    }
}
