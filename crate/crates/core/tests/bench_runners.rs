mod common;

use std::sync::Arc;

use common::{linear_codec, small_dataset};
use progsem::bench::{csv_string, prefix_frames, run_cost_table, run_curves, run_e2e, selftest, srcc};
use progsem::codec::Codec;
use progsem::endpoints::ServiceConfig;
use progsem::repr::make_boundaries;
use progsem::transport::LinkModel;

#[test]
fn linear_curve_matches_eigen_tails() {
    let ds = small_dataset(1);
    let codec = linear_codec(&ds, 4);
    let curves = run_curves(&codec, ds.samples(), &LinkModel::default()).unwrap();
    for p in &curves.points {
        let tail = codec.eigen_tail_error(p.level).unwrap();
        assert!((p.mean_true_error - tail).abs() < 1e-8, "{p:?} vs {tail}");
    }
    assert_eq!(curves.srcc, 1.0);
    assert!(curves.points.windows(2).all(|w| w[0].frame_bytes < w[1].frame_bytes));
    assert_eq!(curves.points[3].ltl_ratio, 1.0);
}

#[test]
fn curves_csv_is_reproducible() {
    let ds = small_dataset(2);
    let a = csv_string(&run_curves(&linear_codec(&ds, 4), ds.holdout_split(), &LinkModel::default()).unwrap().points).unwrap();
    let b = csv_string(&run_curves(&linear_codec(&ds, 4), ds.holdout_split(), &LinkModel::default()).unwrap().points).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("level,ltl_ratio,mean_q,mean_true_error,mean_e_hat,frame_bytes,chunk_bytes,delay_s\n"));
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn curve_bytes_equal_session_ledger() {
    let ds = small_dataset(3);
    let codec: Arc<dyn Codec> = Arc::new(linear_codec(&ds, 4));
    let curves = run_curves(codec.as_ref(), ds.holdout_split(), &LinkModel::default()).unwrap();
    for p in &curves.points {
        let cfg = ServiceConfig {
            epsilon: 0.0,
            initial_level: p.level,
            ..ServiceConfig::default()
        };
        let t = &run_e2e(Arc::clone(&codec), &ds.samples()[..1], &cfg).unwrap()[0];
        assert_eq!(t.total_frame_bytes(), p.frame_bytes);
        assert_eq!(t.total_delay(), p.delay_s);
        assert_eq!(t.total_chunk_bytes(), p.chunk_bytes);
    }
}

#[test]
fn delay_is_nearly_linear_in_level_at_full_scale_shape() {
    let link = LinkModel::default().without_overhead();
    let frames = prefix_frames(&make_boundaries(64, 4).unwrap(), 576, &"0".repeat(64), &link).unwrap();
    let full = frames[3].1;
    for (i, (_, d)) in frames.iter().enumerate() {
        let ratio = (i + 1) as f64 / 4.0;
        assert!((d / full - ratio).abs() <= 0.05, "level {}: {}", i + 1, d / full);
    }
}

#[test]
fn cost_table_rows() {
    let rows = run_cost_table(1..=16, 100).unwrap();
    assert_eq!(rows.len(), 16);
    for r in &rows {
        assert_eq!(r.ratio, (r.k as f64 + 1.0) / 2.0);
        assert_eq!(r.progressive, r.k as u64 * 100);
    }
    let csv = csv_string(&rows).unwrap();
    assert!(csv.starts_with("k,chunk_bytes,progressive,non_progressive,ratio,"));
    assert!(csv.contains("\n4,100,400,1000,2.5,"));
}

#[test]
fn srcc_rejects_mismatched_lengths() {
    assert!(srcc(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn selftest_passes() {
    let lines = selftest(3).unwrap();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert!(l.passed, "{l}");
    }
}
