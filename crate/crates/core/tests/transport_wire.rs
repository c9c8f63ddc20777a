use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use progsem::kernel::Matrix;
use progsem::transport::{
    frame_http_post, link_delay, parse_http, send_over_link, serialize_payload, ChunkPayload, LinkMode, LinkModel,
};
use proptest::prelude::*;

const CHECKSUM: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[test]
fn full_latent_payload_size() {
    let z = Matrix::from_fn(64, 576, |r, c| (r as f64 - c as f64) * 1e-3);
    let p = ChunkPayload::from_matrix("0000000000000001", 4, &z, CHECKSUM).unwrap();
    assert_eq!(p.data.len(), 196_608);
    let total = p.to_bytes().len();
    assert!(total > 196_608 && total < 196_608 + 512, "{total}");
}

#[test]
fn image_payload_size() {
    let img: Vec<u8> = (0..512 * 512 * 3).map(|i| (i % 256) as u8).collect();
    let p = ChunkPayload::from_bytes_u8("0000000000000001", 1, [512, 1536], &img, CHECKSUM).unwrap();
    assert_eq!(p.data.len(), 1_048_576);
    let back = ChunkPayload::parse(&p.to_bytes()).unwrap();
    assert_eq!(back.raw().unwrap(), img);
}

#[test]
fn serialization_is_deterministic() {
    let z = Matrix::from_fn(4, 8, |r, c| ((r * 8 + c) as f64).sqrt());
    assert_eq!(
        serialize_payload("a", 1, &z, CHECKSUM).unwrap(),
        serialize_payload("a", 1, &z, CHECKSUM).unwrap()
    );
}

#[test]
fn delay_arithmetic_at_reference_sizes() {
    let link = LinkModel::default();
    let big = 1_048_883usize;
    let no_burst = 8.0 * big as f64 / link.rate_bps;
    assert!((no_burst - 8.391).abs() < 5e-4);
    let shaped = link_delay(big, &link.without_overhead());
    assert!((shaped - 8.359).abs() < 5e-4);
    let small = link_delay(196_915, &LinkModel { burst_bits: 0.0, ..link });
    assert!(((small - 1.6177) / 1.6177).abs() < 0.03, "{small}");
}

#[test]
fn delays_add_per_message() {
    let link = LinkModel::default();
    let msgs = [10_000usize, 60_000, 0, 123_456];
    let total: f64 = msgs.iter().map(|&b| link_delay(b, &link)).sum();
    let sent: f64 = msgs
        .iter()
        .map(|&b| send_over_link(&vec![7u8; b], &link, &LinkMode::loopback()).unwrap().modeled_delay)
        .sum();
    assert_eq!(total, sent);
}

#[test]
fn framed_payload_survives_socket_link() {
    let z = Matrix::from_fn(3, 5, |r, c| (r * 5 + c) as f64 / 7.0);
    let body = serialize_payload("s", 2, &z, CHECKSUM).unwrap();
    let frame = frame_http_post("/v1/chunk", "cloud", &body);
    let out = send_over_link(&frame, &LinkModel::default(), &LinkMode::socket()).unwrap();
    assert_eq!(out.bytes, frame);
    let (path, got) = parse_http(&out.bytes).unwrap();
    assert_eq!(path, "/v1/chunk");
    assert_eq!(ChunkPayload::parse(&got).unwrap().to_matrix().unwrap(), z.map(|v| f64::from(v as f32)));
}

proptest! {
    #[test]
    fn base64_round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..300)) {
        let p = ChunkPayload::from_bytes_u8("s", 1, [1, bytes.len()], &bytes, CHECKSUM).unwrap();
        prop_assert_eq!(p.data.len(), bytes.len().div_ceil(3) * 4);
        prop_assert_eq!(ChunkPayload::parse(&p.to_bytes()).unwrap().raw().unwrap(), bytes);
    }

    #[test]
    fn noncanonical_padding_rejected(bytes in proptest::collection::vec(any::<u8>(), 1..64)) {
        prop_assume!(bytes.len() % 3 != 0);
        let mut p = ChunkPayload::from_bytes_u8("s", 1, [1, bytes.len()], &bytes, CHECKSUM).unwrap();
        p.data = STANDARD.encode(&bytes).trim_end_matches('=').to_owned();
        prop_assert!(ChunkPayload::parse(&p.to_bytes()).is_err());
    }

    #[test]
    fn delay_is_monotone(a in 0usize..5_000_000, b in 0usize..5_000_000) {
        let link = LinkModel::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(link_delay(lo, &link) <= link_delay(hi, &link));
    }

    #[test]
    fn doubling_adds_linear_term(b in 4_001usize..2_000_000) {
        let link = LinkModel::default();
        let gap = link_delay(2 * b, &link) - link_delay(b, &link);
        prop_assert!((gap - 8.0 * b as f64 / link.rate_bps).abs() < 1e-9);
    }

    #[test]
    fn http_body_round_trip(body in proptest::collection::vec(any::<u8>(), 0..500)) {
        let frame = frame_http_post("/p", "h", &body);
        prop_assert_eq!(parse_http(&frame).unwrap().1, body);
    }
}
