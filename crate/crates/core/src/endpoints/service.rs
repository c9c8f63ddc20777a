use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::{ServiceConfig, SessionStore};
use crate::codec::Codec;
use crate::control::{format_session_id, CloudSession, Decision, CHUNK_PATH};
use crate::kernel::Matrix;
use crate::transport::{
    frame_http_response, from_json, parse_http_request, to_json, ChunkPayload, CloudReply, ErrorReply, HealthReply,
    SessionInfo, SessionRequest,
};
use crate::{Error, Result};

pub const SESSION_PATH: &str = "/v1/session";
pub const HEALTH_PATH: &str = "/v1/health";

const COMPLETED_KEEP: usize = 64;

/// What the cloud kept from a finished session.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedSession {
    pub session_id: String,
    pub terminal_level: usize,
    pub reassembled: Matrix,
    pub quality_history: Vec<f64>,
    pub decision: Decision,
}

/// Request handler of the cloud side. Transport-agnostic: takes request bytes
/// and returns response bytes.
pub struct CloudService {
    codec: Arc<dyn Codec>,
    checksum: String,
    config: ServiceConfig,
    store: Mutex<SessionStore<CloudSession>>,
    completed: Mutex<VecDeque<CompletedSession>>,
    next_id: AtomicU64,
}

fn status_for(err: &Error) -> u16 {
    match err {
        Error::Protocol(msg) if msg.contains("checksum") => 409,
        Error::Protocol(msg)
            if msg.starts_with("unknown session") || msg.ends_with("expired") || msg.ends_with("evicted") =>
        {
            410
        }
        _ => 400,
    }
}

fn error_response(status: u16, err: &Error) -> Vec<u8> {
    frame_http_response(
        status,
        &to_json(&ErrorReply {
            error: err.to_string(),
        }),
    )
}

impl CloudService {
    pub fn new(codec: Arc<dyn Codec>, config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        if config.initial_level > codec.levels() {
            return Err(Error::config(format!(
                "initial_level {} exceeds the codec's {} levels",
                config.initial_level,
                codec.levels()
            )));
        }
        let checksum = codec.checksum();
        Ok(CloudService {
            store: Mutex::new(SessionStore::new(config.session_ttl, config.session_capacity)),
            codec,
            checksum,
            config,
            completed: Mutex::new(VecDeque::new()),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn live_sessions(&self) -> usize {
        self.store.lock().unwrap().len()
    }

    pub fn completed(&self, session_id: &str) -> Option<CompletedSession> {
        self.completed
            .lock()
            .unwrap()
            .iter()
            .find(|c| c.session_id == session_id)
            .cloned()
    }

    pub fn handle(&self, request: &[u8]) -> Vec<u8> {
        self.handle_at(request, Instant::now())
    }

    pub fn handle_at(&self, request: &[u8], now: Instant) -> Vec<u8> {
        let req = match parse_http_request(request) {
            Ok(r) => r,
            Err(e) => return error_response(400, &e),
        };
        let result = match (req.method.as_str(), req.path.as_str()) {
            ("GET", HEALTH_PATH) => Ok(to_json(&HealthReply {
                status: "ok".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                checksum: self.checksum.clone(),
            })),
            ("POST", SESSION_PATH) => self.open_session(&req.body, now),
            ("POST", CHUNK_PATH) => self.chunk(&req.body, now),
            (_, HEALTH_PATH | SESSION_PATH | CHUNK_PATH) => {
                return error_response(405, &Error::protocol(format!("{} not allowed on {}", req.method, req.path)))
            }
            _ => return error_response(404, &Error::protocol(format!("no route for {}", req.path))),
        };
        match result {
            Ok(body) => frame_http_response(200, &body),
            Err(e) => {
                log::debug!("request failed: {e}");
                error_response(status_for(&e), &e)
            }
        }
    }

    fn open_session(&self, body: &[u8], now: Instant) -> Result<Vec<u8>> {
        let req: SessionRequest = from_json(body)?;
        if req.checksum != self.checksum {
            return Err(Error::protocol(format!(
                "codec checksum mismatch: edge {} vs cloud {}",
                req.checksum, self.checksum
            )));
        }
        let id = format_session_id(self.next_id.fetch_add(1, Ordering::Relaxed));
        let session = CloudSession::with_checksum(
            id.clone(),
            Arc::clone(&self.codec),
            self.checksum.clone(),
            self.config.epsilon,
            self.config.initial_level,
        )?;
        self.store.lock().unwrap().insert(id.clone(), session, now)?;
        Ok(to_json(&SessionInfo {
            session_id: id,
            epsilon: self.config.epsilon,
            initial_level: self.config.initial_level,
            k_levels: self.codec.levels(),
            n_tokens: self.codec.n_tokens(),
            repr_width: self.codec.repr_width(),
            boundaries: self.codec.boundaries().to_vec(),
        }))
    }

    fn chunk(&self, body: &[u8], now: Instant) -> Result<Vec<u8>> {
        let payload = ChunkPayload::parse(body)?;
        let handle = self.store.lock().unwrap().get(&payload.session_id, now)?;
        let mut session = handle.lock().unwrap();
        let step = session.receive(&payload)?;
        let reply = match step.decision {
            Decision::Continue(_) => CloudReply::need_more(step.decoded.q, step.level),
            Decision::Terminate(_) => {
                let out = self
                    .config
                    .stub
                    .run(&step.decoded.z_hat, self.codec.boundaries(), self.config.realtime);
                self.finish(&session, step.decision)?;
                CloudReply::ok(step.decoded.q, step.level, out.text)
            }
        };
        Ok(to_json(&reply))
    }

    fn finish(&self, session: &CloudSession, decision: Decision) -> Result<()> {
        self.store.lock().unwrap().remove(session.id());
        let mut done = self.completed.lock().unwrap();
        if done.len() >= COMPLETED_KEEP {
            done.pop_front();
        }
        done.push_back(CompletedSession {
            session_id: session.id().to_owned(),
            terminal_level: session.level(),
            reassembled: session.reassembled()?,
            quality_history: session.quality_history().to_vec(),
            decision,
        });
        Ok(())
    }
}
