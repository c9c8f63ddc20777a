use nalgebra::{DMatrix, SymmetricEigen as NaEigen};
use progsem::codec::power_eigen;
use progsem::kernel::gradcheck::{check_gradients, GradCheckOptions};
use progsem::kernel::{forward_block, AdamConfig, BlockParams, Matrix, ParamStore, Tape};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn spd(n: usize, seed: u64) -> Matrix {
    let a = Matrix::from_fn(n, n, |r, c| (((r * 7 + c * 3) as u64 + seed) as f64 * 0.37).sin());
    let mut m = a.matmul_tn(&a);
    for i in 0..n {
        m.set(i, i, m.get(i, i) + 0.01 * (i + 1) as f64);
    }
    m
}

#[test]
fn power_iteration_matches_nalgebra() {
    for seed in 0..3 {
        let m = spd(12, seed);
        let ours = power_eigen(&m, seed).unwrap();
        let mut theirs: Vec<f64> = NaEigen::new(to_na(&m)).eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.values.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-9 * theirs[0], "{a} vs {b}");
        }
        // Each vector satisfies M v = λ v.
        for j in 0..12 {
            let v = Matrix::from_fn(12, 1, |r, _| ours.vectors.get(r, j));
            let mv = m.matmul(&v);
            let resid = mv.zip_map(&v, |x, y| x - ours.values[j] * y).sum_sq().sqrt();
            assert!(resid <= 1e-6 * theirs[0], "direction {j}: residual {resid}");
        }
    }
}

#[test]
fn products_match_nalgebra() {
    let a = Matrix::from_fn(5, 7, |r, c| (r as f64 - c as f64 * 0.3).cos());
    let b = Matrix::from_fn(7, 4, |r, c| (r * c) as f64 * 0.1 - 0.5);
    let c = Matrix::from_fn(4, 7, |r, c| (r + 2 * c) as f64 * 0.05);
    let na = to_na(&a);
    assert!((to_na(&a.matmul(&b)) - &na * to_na(&b)).abs().max() < 1e-12);
    assert!((to_na(&a.matmul_nt(&c)) - &na * to_na(&c).transpose()).abs().max() < 1e-12);
    assert!((to_na(&a.matmul_tn(&a)) - na.transpose() * &na).abs().max() < 1e-12);
}

#[test]
fn two_block_stack_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let b1 = BlockParams::init(&mut store, "b1", 8, 2, &mut rng).unwrap();
    let b2 = BlockParams::init(&mut store, "b2", 8, 4, &mut rng).unwrap();
    let x = Matrix::from_fn(5, 8, |r, c| ((r * 8 + c) as f64 * 0.9).sin());
    let report = check_gradients(
        &store,
        |tape, s| {
            let h = tape.constant(x.clone());
            let h = forward_block(tape, s, h, &b1)?;
            let h = forward_block(tape, s, h, &b2)?;
            Ok(tape.mean_square(h))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{} at {}", report.max_rel_error, report.worst_param);
}

#[test]
fn adam_matches_hand_computation() {
    let mut store = ParamStore::new();
    let id = store.add("w", Matrix::filled(1, 1, 1.0)).unwrap();
    let cfg = AdamConfig::default();
    let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
    for t in 1..=3 {
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        let loss = tape.mean_square(p);
        tape.backward_into(loss, &mut store).unwrap();
        let g = 2.0 * w;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t));
        let vh = v / (1.0 - cfg.beta2.powi(t));
        w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        store.adam_step(&cfg).unwrap();
        assert!((store.value(id).get(0, 0) - w).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn checkpoint_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let mut store = ParamStore::new();
        let n = vals.len();
        store.add("z.last", Matrix::from_vec(1, n, vals.clone()).unwrap()).unwrap();
        store.add("a.first", Matrix::from_vec(n, 1, vals).unwrap()).unwrap();
        let bytes = store.to_checkpoint_bytes();
        let parsed = ParamStore::parse_checkpoint(&bytes).unwrap();
        prop_assert_eq!(parsed[0].0.as_str(), "a.first");
        let mut again = store.clone();
        again.load_checkpoint(&bytes).unwrap();
        prop_assert_eq!(again.to_checkpoint_bytes(), bytes);
    }
}
