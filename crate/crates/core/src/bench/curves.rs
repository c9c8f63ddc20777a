use std::io::Write;

use serde::Serialize;

use super::srcc;
use crate::codec::{true_error, Codec, LatentSample};
use crate::control::{format_session_id, CHUNK_PATH, CLOUD_HOST};
use crate::kernel::Matrix;
use crate::repr::mask_rows;
use crate::transport::{frame_http_post, serialize_payload, wire_round, LinkModel};
use crate::{Error, Result};

/// One row of the delay/quality curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub level: usize,
    pub ltl_ratio: f64,
    pub mean_q: f64,
    pub mean_true_error: f64,
    pub mean_e_hat: f64,
    /// Size of the single framed request carrying chunks `1..=level`.
    pub frame_bytes: usize,
    pub chunk_bytes: usize,
    pub delay_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    pub points: Vec<CurvePoint>,
    /// Spearman correlation between mean quality and negated mean error.
    pub srcc: f64,
}

/// Frame size and modeled delay of sending chunks `1..=ℓ` in one request,
/// for every level.
///
/// Payload length depends only on shapes, ids and the checksum length, so a
/// zero representation gives the same sizes as real data.
pub fn prefix_frames(boundaries: &[usize], width: usize, checksum: &str, link: &LinkModel) -> Result<Vec<(usize, f64)>> {
    let id = format_session_id(0);
    boundaries
        .iter()
        .enumerate()
        .map(|(i, &rows)| {
            let body = serialize_payload(&id, i + 1, &Matrix::zeros(rows, width), checksum)?;
            let frame = frame_http_post(CHUNK_PATH, CLOUD_HOST, &body);
            Ok((frame.len(), link.delay(frame.len())))
        })
        .collect()
}

/// Per-level held-out quality, error, bytes and delay.
///
/// The decoder sees the representation after wire rounding, as it would in
/// a live session.
pub fn run_curves(codec: &dyn Codec, samples: &[LatentSample], link: &LinkModel) -> Result<Curves> {
    if samples.is_empty() {
        return Err(Error::argument("no samples to evaluate"));
    }
    let k = codec.levels();
    let mut q = vec![0.0; k];
    let mut err = vec![0.0; k];
    let mut e_hat = vec![0.0; k];
    for z in samples {
        let repr = wire_round(codec.encode(z)?.tokens());
        for level in 1..=k {
            let d = codec.decode(&mask_rows(&repr, codec.boundaries()[level - 1]), level)?;
            q[level - 1] += d.q;
            e_hat[level - 1] += d.e_hat;
            err[level - 1] += true_error(&d.z_hat, z.tokens());
        }
    }
    let n = samples.len() as f64;
    let frames = prefix_frames(codec.boundaries(), codec.repr_width(), &codec.checksum(), link)?;
    let points: Vec<CurvePoint> = (0..k)
        .map(|i| CurvePoint {
            level: i + 1,
            ltl_ratio: (i + 1) as f64 / k as f64,
            mean_q: q[i] / n,
            mean_true_error: err[i] / n,
            mean_e_hat: e_hat[i] / n,
            frame_bytes: frames[i].0,
            chunk_bytes: codec.boundaries()[i] * codec.repr_width() * 4,
            delay_s: frames[i].1,
        })
        .collect();
    let srcc = if k >= 2 {
        let qs: Vec<f64> = points.iter().map(|p| p.mean_q).collect();
        let neg: Vec<f64> = points.iter().map(|p| -p.mean_true_error).collect();
        srcc(&qs, &neg)?
    } else {
        1.0
    };
    Ok(Curves { points, srcc })
}

/// Writes rows as CSV with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}
