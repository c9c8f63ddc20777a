use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use crate::{Error, Result};

/// Token-bucket uplink.
///
/// `queue_latency_cap` is the shaper's queueing limit. It bounds how long a
/// packet may wait but is not added to the delay of a message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkModel {
    pub rate_bps: f64,
    pub burst_bits: f64,
    pub queue_latency_cap: f64,
    pub fixed_overhead: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            rate_bps: 1e6,
            burst_bits: 32_000.0,
            queue_latency_cap: 0.2,
            fixed_overhead: 0.04,
        }
    }
}

impl LinkModel {
    pub fn new(rate_bps: f64, burst_bits: f64, fixed_overhead: f64) -> Result<Self> {
        let link = LinkModel {
            rate_bps,
            burst_bits,
            fixed_overhead,
            ..LinkModel::default()
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_bps > 0.0 && self.rate_bps.is_finite()) {
            return Err(Error::config(format!("rate must be positive, got {}", self.rate_bps)));
        }
        if !(self.burst_bits >= 0.0) {
            return Err(Error::config(format!("burst must be non-negative, got {}", self.burst_bits)));
        }
        if !(self.fixed_overhead >= 0.0) {
            return Err(Error::config("fixed overhead must be non-negative"));
        }
        Ok(())
    }

    pub fn without_overhead(self) -> Self {
        LinkModel {
            fixed_overhead: 0.0,
            ..self
        }
    }

    pub fn delay(&self, total_bytes: usize) -> f64 {
        link_delay(total_bytes, self)
    }
}

/// Seconds to push one message of `total_bytes` through the shaper.
pub fn link_delay(total_bytes: usize, link: &LinkModel) -> f64 {
    let bits = 8.0 * total_bytes as f64;
    ((bits - link.burst_bits) / link.rate_bps).max(0.0) + link.fixed_overhead
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinkMode {
    /// In-process hand-off. With `realtime` the modeled delay is slept.
    Loopback { realtime: bool },
    /// Bytes cross a real TCP connection on 127.0.0.1.
    Socket { attempts: u32, timeout: Duration },
}

impl LinkMode {
    pub fn loopback() -> Self {
        LinkMode::Loopback { realtime: false }
    }

    pub fn socket() -> Self {
        LinkMode::Socket {
            attempts: 3,
            timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub bytes: Vec<u8>,
    pub modeled_delay: f64,
    /// Measured wall time, recorded in socket mode.
    pub wall_delay: Option<f64>,
}

pub fn send_over_link(request: &[u8], link: &LinkModel, mode: &LinkMode) -> Result<Delivery> {
    let modeled_delay = link_delay(request.len(), link);
    match mode {
        LinkMode::Loopback { realtime } => {
            if *realtime {
                thread::sleep(Duration::from_secs_f64(modeled_delay));
            }
            Ok(Delivery {
                bytes: request.to_vec(),
                modeled_delay,
                wall_delay: None,
            })
        }
        LinkMode::Socket { attempts, timeout } => {
            let start = Instant::now();
            let bytes = tcp_pass_through(request, (*attempts).max(1), *timeout)?;
            Ok(Delivery {
                bytes,
                modeled_delay,
                wall_delay: Some(start.elapsed().as_secs_f64()),
            })
        }
    }
}

fn tcp_pass_through(request: &[u8], attempts: u32, timeout: Duration) -> Result<Vec<u8>> {
    let mut last = String::new();
    for attempt in 1..=attempts {
        match tcp_once(request, timeout) {
            Ok(bytes) => return Ok(bytes),
            Err(e) => {
                log::warn!("socket link attempt {attempt}/{attempts} failed: {e}");
                last = e.to_string();
            }
        }
    }
    Err(Error::Transport {
        attempts,
        message: last,
    })
}

fn tcp_once(request: &[u8], timeout: Duration) -> std::io::Result<Vec<u8>> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let receiver = thread::spawn(move || -> std::io::Result<Vec<u8>> {
        let (mut conn, _) = listener.accept()?;
        conn.set_read_timeout(Some(timeout))?;
        let mut out = Vec::new();
        conn.read_to_end(&mut out)?;
        Ok(out)
    });
    let mut sender = TcpStream::connect_timeout(&addr, timeout)?;
    sender.set_write_timeout(Some(timeout))?;
    sender.write_all(request)?;
    sender.shutdown(Shutdown::Write)?;
    receiver
        .join()
        .map_err(|_| std::io::Error::other("receiver thread panicked"))?
}
