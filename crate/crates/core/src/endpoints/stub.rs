use std::fmt::Write;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use crate::kernel::Matrix;
use crate::repr::chunk_range;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StubMode {
    EchoStats,
    FixedLatency,
}

impl FromStr for StubMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "echo_stats" => Ok(StubMode::EchoStats),
            "fixed_latency" => Ok(StubMode::FixedLatency),
            other => Err(Error::config(format!("unknown stub mode {other:?}"))),
        }
    }
}

/// Placeholder for the downstream language model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskDecoderStub {
    pub mode: StubMode,
    pub latency_ms: u64,
}

impl Default for TaskDecoderStub {
    fn default() -> Self {
        TaskDecoderStub {
            mode: StubMode::EchoStats,
            latency_ms: 490,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StubOutput {
    pub text: String,
    /// Simulated decode time in seconds.
    pub latency: f64,
}

impl TaskDecoderStub {
    /// Digest of `z_hat`: mean and variance of each token block.
    pub fn run(&self, z_hat: &Matrix, boundaries: &[usize], realtime: bool) -> StubOutput {
        let mut text = String::new();
        for level in 1..=boundaries.len() {
            let (start, end) = chunk_range(boundaries, level);
            let block = z_hat.slice_rows(start, end);
            let n = block.data().len().max(1) as f64;
            let mean = block.sum() / n;
            let var = block.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if level > 1 {
                text.push(' ');
            }
            write!(text, "b{level}:mean={mean:.6},var={var:.6}").unwrap();
        }
        let latency = match self.mode {
            StubMode::EchoStats => 0.0,
            StubMode::FixedLatency => self.latency_ms as f64 / 1000.0,
        };
        if realtime && latency > 0.0 {
            thread::sleep(Duration::from_secs_f64(latency));
        }
        StubOutput { text, latency }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_per_block() {
        let z = Matrix::from_rows(&[vec![1.0, 3.0], vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let out = TaskDecoderStub::default().run(&z, &[1, 3], false);
        assert_eq!(out.text, "b1:mean=2.000000,var=1.000000 b2:mean=1.000000,var=1.000000");
        assert_eq!(out.latency, 0.0);
        let slow = TaskDecoderStub {
            mode: StubMode::FixedLatency,
            latency_ms: 490,
        };
        let o = slow.run(&z, &[1, 3], false);
        assert_eq!(o.text, out.text);
        assert!((o.latency - 0.49).abs() < 1e-15);
    }

    #[test]
    fn mode_names() {
        assert_eq!("echo_stats".parse::<StubMode>().unwrap(), StubMode::EchoStats);
        assert!("llm".parse::<StubMode>().is_err());
    }
}
