//! Property tests for kernel numerics and checkpoint round trips.

use proptest::prelude::*;
use tensorlab::kernels::{gemm_acc, log_softmax_in_place, matmul_nt, softmax_in_place};
use tensorlab::{checkpoint, Tensor};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-4.0f32..4.0, rows * cols)
}

fn shapes() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..12, 1usize..40, 1usize..40)
}

// Left-to-right sum over k starting from the existing output, one rounding
// per multiply and per add.
fn naive_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = out[i * n + j];
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gemm_is_bitwise_the_naive_sum(
        (m, k, n, a, b, init) in shapes().prop_flat_map(|(m, k, n)| {
            (Just(m), Just(k), Just(n), matrix(m, k), matrix(k, n), matrix(m, n))
        }),
    ) {
        let mut fast = init.clone();
        gemm_acc(&a, &b, m, k, n, &mut fast);
        let mut slow = init;
        naive_acc(&a, &b, m, k, n, &mut slow);
        prop_assert_eq!(bits(&fast), bits(&slow));
    }

    #[test]
    fn each_row_of_a_product_is_the_single_row_product(
        a in matrix(6, 9),
        b in matrix(13, 9),
    ) {
        let all = matmul_nt(&a, &b, 6, 9, 13);
        for i in 0..6 {
            let row = matmul_nt(&a[i * 9..(i + 1) * 9], &b, 1, 9, 13);
            prop_assert_eq!(bits(&row), bits(&all[i * 13..(i + 1) * 13]));
        }
    }

    #[test]
    fn softmax_is_a_distribution_and_matches_log_softmax(row in prop::collection::vec(-30.0f32..30.0, 1..64)) {
        let mut p = row.clone();
        softmax_in_place(&mut p);
        let mut lp = row;
        log_softmax_in_place(&mut lp);
        prop_assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        for (x, l) in p.iter().zip(&lp) {
            prop_assert!((0.0..=1.0).contains(x));
            prop_assert!(*l <= 0.0);
            prop_assert!((x - l.exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn checkpoints_round_trip_exactly(
        shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..4), 1..5),
        fill in -1e3f32..1e3,
    ) {
        let tensors: Vec<(String, Tensor)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("t{i}.w"), Tensor::from_fn(s, |j| fill * (j as f32 + 0.5) / (i as f32 + 1.0))))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.srlk");
        checkpoint::save(&path, tensors.iter().map(|(n, t)| (n.as_str(), t))).unwrap();
        let back = checkpoint::load(&path).unwrap();
        prop_assert_eq!(back.len(), tensors.len());
        for ((n0, t0), (n1, t1)) in tensors.iter().zip(&back) {
            prop_assert_eq!(n0, n1);
            prop_assert_eq!(t0.shape(), t1.shape());
            prop_assert_eq!(bits(t0.data()), bits(t1.data()));
        }
    }
}
