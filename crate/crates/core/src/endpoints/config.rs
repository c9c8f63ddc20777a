use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::{StubMode, TaskDecoderStub};
use crate::transport::LinkModel;
use crate::{Error, Result};

/// Cloud and edge service settings, loadable from a `key=value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub epsilon: f64,
    pub initial_level: usize,
    pub link: LinkModel,
    pub realtime: bool,
    pub checkpoint: Option<PathBuf>,
    pub stub: TaskDecoderStub,
    pub listen: String,
    pub session_ttl: Duration,
    pub session_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            epsilon: 0.9,
            initial_level: 1,
            link: LinkModel::default(),
            realtime: false,
            checkpoint: None,
            stub: TaskDecoderStub::default(),
            listen: "127.0.0.1:8700".into(),
            session_ttl: Duration::from_secs(60),
            session_capacity: 1024,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value {value:?} for {key}")))
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key=value", i + 1)))?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}

impl ServiceConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epsilon" => self.epsilon = parse(key, value)?,
            "initial_level" => self.initial_level = parse(key, value)?,
            "rate_bps" => self.link.rate_bps = parse(key, value)?,
            "burst_bits" => self.link.burst_bits = parse(key, value)?,
            "overhead_ms" => self.link.fixed_overhead = parse::<f64>(key, value)? / 1000.0,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "stub_mode" => self.stub.mode = value.parse()?,
            "stub_latency_ms" => self.stub.latency_ms = parse(key, value)?,
            "realtime" => self.realtime = parse(key, value)?,
            "listen" => self.listen = value.to_owned(),
            "session_ttl_s" => self.session_ttl = Duration::from_secs_f64(parse(key, value)?),
            "session_capacity" => self.session_capacity = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = ServiceConfig::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be non-negative"));
        }
        if self.initial_level == 0 {
            return Err(Error::config("initial_level is a level index starting at 1"));
        }
        if self.session_capacity == 0 {
            return Err(Error::config("session_capacity must be positive"));
        }
        if self.stub.mode == StubMode::FixedLatency && self.stub.latency_ms == 0 {
            log::debug!("fixed_latency stub with zero latency");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let cfg = ServiceConfig::from_kv_str(
            "# cloud\nepsilon = 0.75\ninitial_level=2\nrate_bps=2e6\nburst_bits=0\noverhead_ms=10\n\
             checkpoint=/tmp/x.ckpt\nstub_mode=fixed_latency\nstub_latency_ms=12\n",
        )
        .unwrap();
        assert_eq!(cfg.epsilon, 0.75);
        assert_eq!(cfg.initial_level, 2);
        assert_eq!(cfg.link.rate_bps, 2e6);
        assert_eq!(cfg.link.burst_bits, 0.0);
        assert!((cfg.link.fixed_overhead - 0.01).abs() < 1e-15);
        assert_eq!(cfg.checkpoint.as_deref(), Some(Path::new("/tmp/x.ckpt")));
        assert_eq!(cfg.stub.mode, StubMode::FixedLatency);
        assert_eq!(cfg.stub.latency_ms, 12);
    }

    #[test]
    fn defaults() {
        let cfg = ServiceConfig::from_kv_str("").unwrap();
        assert_eq!(cfg.session_ttl, Duration::from_secs(60));
        assert_eq!(cfg.session_capacity, 1024);
        assert_eq!(cfg.stub.latency_ms, 490);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ServiceConfig::from_kv_str("epsilon").is_err());
        assert!(ServiceConfig::from_kv_str("nope=1").is_err());
        assert!(ServiceConfig::from_kv_str("epsilon=abc").is_err());
        assert!(ServiceConfig::from_kv_str("rate_bps=0").is_err());
        assert!(ServiceConfig::from_kv_str("initial_level=0").is_err());
    }
}
