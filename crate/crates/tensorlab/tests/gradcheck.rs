//! Central finite-difference checks for every differentiable primitive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorlab::gradcheck::{primitive_suite, relative_errors};
use tensorlab::{Tape, Tensor};

const TOL: f32 = 1e-3;
const SEEDS: u64 = 24;

fn for_seeds(mut body: impl FnMut(u64, &mut ChaCha8Rng)) {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        body(seed, &mut rng);
    }
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut names = Vec::new();
    for seed in 0..SEEDS {
        for (name, err) in primitive_suite(seed) {
            assert!(err < TOL, "{name} seed {seed}: relative error {err:e}");
            if seed == 0 {
                names.push(name);
            }
        }
    }
    assert!(names.len() >= 30, "{names:?}");
}

#[test]
fn constant_inputs_are_skipped() {
    let x = Tensor::from_fn(&[2, 3], |i| i as f32 * 0.3 - 0.5).with_grad(true);
    let c = Tensor::from_fn(&[2, 3], |i| 1.0 - i as f32 * 0.2);
    let errs = relative_errors(&[x, c], 1, |t, v| {
        let e = t.exp(v[0]);
        t.mul(e, v[1]).unwrap()
    });
    assert!(errs[0].unwrap() < TOL);
    assert!(errs[1].is_none());
}

#[test]
fn softmax_rows_sum_to_one_and_log_softmax_gather_is_cross_entropy() {
    for_seeds(|_, rng| {
        let logits = Tensor::from_fn(&[6, 11], |_| rng.gen_range(-5.0..5.0));
        let targets: Vec<usize> = (0..6).map(|_| rng.gen_range(0..11)).collect();
        let mut tape = Tape::new();
        let l = tape.leaf(&logits);
        let p = tape.softmax(l);
        for row in tape.value(p).chunks(11) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        let lp = tape.log_softmax(l);
        let picked = tape.gather(lp, &targets).unwrap();
        let nll = -tape.value(picked).iter().map(|&v| v as f64).sum::<f64>() / 6.0;
        let ce = tape.cross_entropy(l, &targets).unwrap();
        assert!((tape.scalar(ce) as f64 - nll).abs() < 1e-5);
    });
}

#[test]
fn forward_values_are_deterministic() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_fn(&[8, 16], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(&[16, 16], |_| rng.gen_range(-1.0..1.0));
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let wv = tape.leaf(&w);
        let y = tape.matmul_nt(xv, wv).unwrap();
        let y = tape.softmax(y);
        tape.value(y).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(build(), build());
}
