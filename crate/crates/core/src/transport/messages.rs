use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyStatus {
    Ok,
    NeedMore,
}

/// Cloud answer to one chunk payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudReply {
    pub status: ReplyStatus,
    pub q: f64,
    pub level: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl CloudReply {
    pub fn ok(q: f64, level: usize, output: String) -> Self {
        CloudReply {
            status: ReplyStatus::Ok,
            q,
            level,
            requested_level: None,
            output: Some(output),
        }
    }

    pub fn need_more(q: f64, level: usize) -> Self {
        CloudReply {
            status: ReplyStatus::NeedMore,
            q,
            level,
            requested_level: Some(level + 1),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.status {
            ReplyStatus::Ok if self.output.is_none() => Err(Error::protocol("ok reply without task output")),
            ReplyStatus::NeedMore if self.requested_level != Some(self.level + 1) => {
                Err(Error::protocol("need_more must request the next level"))
            }
            _ => Ok(()),
        }
    }
}

/// Body of `POST /v1/session`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub checksum: String,
}

/// Reply to `POST /v1/session`: cloud-owned control parameters and shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub epsilon: f64,
    pub initial_level: usize,
    pub k_levels: usize,
    pub n_tokens: usize,
    pub repr_width: usize,
    pub boundaries: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthReply {
    pub status: String,
    pub version: String,
    pub checksum: String,
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("message serialization is infallible")
}

pub fn from_json<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_invariants() {
        assert!(CloudReply::ok(0.9, 2, "x".into()).validate().is_ok());
        assert!(CloudReply::need_more(0.1, 2).validate().is_ok());
        let mut bad = CloudReply::need_more(0.1, 2);
        bad.requested_level = Some(4);
        assert!(bad.validate().is_err());
        bad = CloudReply::ok(0.9, 2, "x".into());
        bad.output = None;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn status_wire_names() {
        let text = String::from_utf8(to_json(&CloudReply::need_more(0.5, 1))).unwrap();
        assert!(text.contains("\"need_more\""), "{text}");
        let back: CloudReply = from_json(text.as_bytes()).unwrap();
        assert_eq!(back.requested_level, Some(2));
    }
}
