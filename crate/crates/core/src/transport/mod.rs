//! Wire format, HTTP framing and the uplink model.

pub mod http;
mod link;
mod messages;
mod payload;

pub use http::{frame_http_get, frame_http_post, frame_http_response, parse_http, parse_http_request, parse_http_response};
pub use link::{link_delay, send_over_link, Delivery, LinkMode, LinkModel};
pub use messages::{from_json, to_json, CloudReply, ErrorReply, HealthReply, ReplyStatus, SessionInfo, SessionRequest};
pub use payload::{serialize_payload, wire_round, ChunkPayload, Dtype};
