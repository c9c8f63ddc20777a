//! Runnable edge agent and cloud service.

mod config;
mod edge;
mod server;
mod service;
mod store;
mod stub;

pub use config::{parse_kv, ServiceConfig};
pub use edge::{EdgeAgent, Exchange, LoopbackTransport, TcpTransport};
pub use server::{CloudServer, ServerHandle};
pub use service::{CloudService, CompletedSession, HEALTH_PATH, SESSION_PATH};
pub use store::SessionStore;
pub use stub::{StubMode, StubOutput, TaskDecoderStub};
