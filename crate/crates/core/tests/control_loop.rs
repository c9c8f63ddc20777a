mod common;

use std::sync::Arc;

use common::{linear_codec, small_dataset, Counting};
use progsem::codec::{Codec, LatentSample};
use progsem::control::{
    format_session_id, ledger_compare, predict_terminal_level, run_session, CloudSession, Decision, EdgeSession,
    TerminateReason,
};
use progsem::repr::mask_rows;
use progsem::transport::{wire_round, LinkMode, LinkModel};
use progsem::Error;

fn session(codec: Arc<dyn Codec>, eps: f64, l0: usize) -> (EdgeSession, CloudSession) {
    let id = format_session_id(9);
    (
        EdgeSession::new(id.clone(), Arc::clone(&codec)),
        CloudSession::new(id, codec, eps, l0).unwrap(),
    )
}

fn qualities(codec: &dyn Codec, z: &LatentSample) -> Vec<f64> {
    let r = wire_round(codec.encode(z).unwrap().tokens());
    (1..=codec.levels())
        .map(|l| codec.decode(&mask_rows(&r, codec.boundaries()[l - 1]), l).unwrap().q)
        .collect()
}

#[test]
fn zero_threshold_is_one_round() {
    let ds = small_dataset(1);
    let codec: Arc<dyn Codec> = Arc::new(linear_codec(&ds, 4));
    let (mut e, mut c) = session(codec, 0.0, 1);
    let t = run_session(&mut e, &mut c, &LinkModel::default(), &LinkMode::loopback(), &ds.samples()[0]).unwrap();
    assert_eq!(t.rounds.len(), 1);
    assert_eq!((t.rounds[0].first_level, t.rounds[0].last_level), (1, 1));
    assert_eq!(t.rounds[0].decision, Decision::Terminate(TerminateReason::QualityMet));
}

#[test]
fn unreachable_threshold_sends_everything_once() {
    let ds = small_dataset(2);
    let inner = linear_codec(&ds, 4);
    let chunk = (2 * 16 * 4) as u64;
    for l0 in 1..=4 {
        let codec = Counting::new(inner.clone());
        let (mut e, mut c) = session(codec.clone(), 1.5, l0);
        let t = run_session(&mut e, &mut c, &LinkModel::default(), &LinkMode::loopback(), &ds.samples()[3]).unwrap();
        assert_eq!(t.rounds.len(), 4 - l0 + 1);
        assert_eq!(t.terminal_level, 4);
        assert_eq!(t.total_chunk_bytes() as u64, ledger_compare(4, chunk).progressive_total);
        assert_eq!(t.rounds.last().unwrap().decision, Decision::Terminate(TerminateReason::MaxLevel));
        assert_eq!(codec.count(), 1);
        assert_eq!(t.encode_calls, 1);
        let frame_sum: usize = t.rounds.iter().map(|r| r.frame_bytes).sum();
        assert_eq!(frame_sum, t.total_frame_bytes());
        let delay: f64 = t.rounds.iter().map(|r| LinkModel::default().delay(r.frame_bytes)).sum();
        assert_eq!(delay, t.total_delay());
    }
}

#[test]
fn terminal_level_follows_prediction_and_is_monotone_in_epsilon() {
    let ds = small_dataset(3);
    let codec: Arc<dyn Codec> = Arc::new(linear_codec(&ds, 4));
    let z = &ds.samples()[10];
    let q = qualities(codec.as_ref(), z);
    let mut last = 0;
    for step in 0..=24 {
        let eps = step as f64 * 0.05;
        let (mut e, mut c) = session(Arc::clone(&codec), eps, 1);
        let t = run_session(&mut e, &mut c, &LinkModel::default(), &LinkMode::loopback(), z).unwrap();
        assert_eq!(t.terminal_level, predict_terminal_level(&q, eps, 1), "eps {eps}");
        assert!(t.terminal_level >= last);
        assert!(t.rounds.len() <= 4);
        last = t.terminal_level;
        let cloud_view = c.reassembled().unwrap();
        let edge_view = wire_round(&e.repr().unwrap().prefix_mask(t.terminal_level).unwrap());
        assert_eq!(cloud_view, edge_view);
    }
}

#[test]
fn checksum_mismatch_is_rejected() {
    let a = small_dataset(4);
    let b = small_dataset(5);
    let ca: Arc<dyn Codec> = Arc::new(linear_codec(&a, 4));
    let cb: Arc<dyn Codec> = Arc::new(linear_codec(&b, 4));
    let id = format_session_id(1);
    let mut e = EdgeSession::new(id.clone(), ca);
    let mut c = CloudSession::new(id, cb, 0.5, 1).unwrap();
    let err = run_session(&mut e, &mut c, &LinkModel::default(), &LinkMode::loopback(), &a.samples()[0]).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn out_of_order_and_replayed_chunks_are_rejected() {
    let ds = small_dataset(6);
    let codec: Arc<dyn Codec> = Arc::new(linear_codec(&ds, 4));
    let (mut e, mut c) = session(codec, 2.0, 1);
    e.open(&ds.samples()[0]).unwrap();
    assert!(e.open(&ds.samples()[0]).is_err());
    let p1 = e.payload_through(1).unwrap();
    let p3 = e.payload_through(3).unwrap();
    assert!(c.receive(&p3).is_err());
    assert_eq!(c.level(), 0);
    c.receive(&p1).unwrap();
    assert!(c.receive(&p1).is_err());
    let mut wrong_level = p3.clone();
    wrong_level.level = 2;
    assert!(c.receive(&wrong_level).is_err());
    assert_eq!(c.level(), 1);
    assert_eq!(c.quality_history().len(), 1);
    assert!(e.payload_through(2).is_err());
}

#[test]
fn cache_miss_is_an_error() {
    let ds = small_dataset(7);
    let codec: Arc<dyn Codec> = Arc::new(linear_codec(&ds, 4));
    let mut e = EdgeSession::new("x", codec);
    assert!(e.payload_through(1).is_err());
}

#[test]
fn batched_initial_payload() {
    let ds = small_dataset(8);
    let codec: Arc<dyn Codec> = Arc::new(linear_codec(&ds, 4));
    let (mut e, mut c) = session(codec, 2.0, 3);
    let t = run_session(&mut e, &mut c, &LinkModel::default(), &LinkMode::loopback(), &ds.samples()[1]).unwrap();
    assert_eq!(t.rounds.len(), 2);
    assert_eq!((t.rounds[0].first_level, t.rounds[0].last_level), (1, 3));
    assert_eq!(t.rounds[0].chunk_bytes, 3 * t.rounds[1].chunk_bytes);
    assert_eq!((t.rounds[1].first_level, t.rounds[1].last_level), (4, 4));
}
