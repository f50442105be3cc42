//! Central finite-difference checks of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Tape, Tensor, Var};

/// Perturbation used for the central differences.
pub const STEP: f32 = 1e-3;

/// Builds `sum(w ⊙ f(inputs))` with random weights `w` drawn from `seed`
/// and returns, for each input that requires a gradient, the norm-wise
/// relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
/// Inputs without a gradient get `None`.
///
/// Probe losses are summed in f64 from the f32 outputs so that rounding a
/// single f32 scalar does not dominate the difference.
pub fn relative_errors<F>(inputs: &[Tensor], seed: u64, f: F) -> Vec<Option<f32>>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let weights = |n: usize| -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let loss_of = |inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let out = f(&mut tape, &vars);
        let v = tape.value(out);
        v.iter().zip(weights(v.len())).map(|(&a, w)| f64::from(a) * f64::from(w)).sum()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars);
    let shape = tape.shape(out).to_vec();
    let w = weights(tape.value(out).len());
    let wv = tape.constant(&shape, w).expect("weights match the output");
    let prod = tape.mul(out, wv).expect("same shapes");
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).expect("finite loss");

    inputs
        .iter()
        .enumerate()
        .map(|(k, t)| {
            if !t.requires_grad() {
                return None;
            }
            let analytic = grads.get(vars[k]).map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            let mut numeric = vec![0.0f32; t.numel()];
            for (j, n) in numeric.iter_mut().enumerate() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[j] += STEP;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[j] -= STEP;
                *n = ((loss_of(&plus) - loss_of(&minus)) / (2.0 * f64::from(STEP))) as f32;
            }
            let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f32>().sqrt();
            let na = analytic.iter().map(|a| a * a).sum::<f32>().sqrt();
            let nn = numeric.iter().map(|a| a * a).sum::<f32>().sqrt();
            Some(diff / na.max(nn).max(1e-6))
        })
        .collect()
}

/// Largest relative error over all differentiable inputs.
pub fn max_relative_error<F>(inputs: &[Tensor], seed: u64, f: F) -> f32
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    relative_errors(inputs, seed, f).into_iter().flatten().fold(0.0, f32::max)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0) * scale).with_grad(true)
}

/// Checks every differentiable tape operation, alone and composed into a
/// small MLP and an attention block, on random inputs drawn from `seed`.
/// Returns each check's name and largest relative error.
pub fn primitive_suite(seed: u64) -> Vec<(&'static str, f32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let s = seed;
    let mut out = Vec::new();
    let mut run = |name: &'static str, inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var| {
        out.push((name, max_relative_error(inputs, s, f)));
    };

    let a = rand_tensor(rng, &[3, 5], 1.0);
    let b = rand_tensor(rng, &[4, 5], 1.0);
    run("matmul_nt", &[a.clone(), b], &|t, v| t.matmul_nt(v[0], v[1]).unwrap());
    let b = rand_tensor(rng, &[5, 2], 1.0);
    run("matmul", &[a, b], &|t, v| t.matmul(v[0], v[1]).unwrap());

    let a = rand_tensor(rng, &[2, 4], 1.0);
    let b = rand_tensor(rng, &[2, 4], 1.0);
    run("add", &[a.clone(), b.clone()], &|t, v| t.add(v[0], v[1]).unwrap());
    run("sub", &[a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1]).unwrap());
    run("mul", &[a.clone(), b.clone()], &|t, v| t.mul(v[0], v[1]).unwrap());
    // keep operands apart so no probe crosses the kink
    let mut b2 = b;
    for (x, y) in b2.data_mut().iter_mut().zip(a.data()) {
        if (*x - y).abs() < 0.05 {
            *x = y + 0.1;
        }
    }
    run("minimum", &[a, b2], &|t, v| t.minimum(v[0], v[1]).unwrap());

    let x = rand_tensor(rng, &[3, 4], 1.0);
    let b = rand_tensor(rng, &[4], 1.0);
    run("add_row", &[x, b], &|t, v| t.add_row(v[0], v[1]).unwrap());

    let x = rand_tensor(rng, &[2, 5], 1.5);
    run("scale", std::slice::from_ref(&x), &|t, v| t.scale(v[0], -0.7));
    run("exp", std::slice::from_ref(&x), &|t, v| t.exp(v[0]));
    run("silu", std::slice::from_ref(&x), &|t, v| t.silu(v[0]));
    run("tanh", std::slice::from_ref(&x), &|t, v| t.tanh(v[0]));
    run("square", std::slice::from_ref(&x), &|t, v| t.square(v[0]));
    let pos = Tensor::from_fn(&[2, 5], |i| 0.5 + x.data()[i].abs()).with_grad(true);
    run("log", &[pos], &|t, v| t.log(v[0]));
    let mut c = x;
    for v in c.data_mut() {
        if (v.abs() - 0.8).abs() < 0.05 {
            *v *= 0.8;
        }
    }
    run("clamp", &[c], &|t, v| t.clamp(v[0], -0.8, 0.8));

    let x = rand_tensor(rng, &[3, 4], 1.0);
    run("sum", std::slice::from_ref(&x), &|t, v| t.sum(v[0]));
    run("mean", std::slice::from_ref(&x), &|t, v| t.mean(v[0]));
    run("sum_rows", &[x], &|t, v| t.sum_rows(v[0]));

    let x = rand_tensor(rng, &[3, 6], 2.0);
    run("softmax", std::slice::from_ref(&x), &|t, v| t.softmax(v[0]));
    run("log_softmax", std::slice::from_ref(&x), &|t, v| t.log_softmax(v[0]));
    let sq = rand_tensor(rng, &[4, 4], 2.0);
    run("causal_softmax", &[sq], &|t, v| t.causal_softmax(v[0]));
    let targets: Vec<usize> = (0..3).map(|_| rng.gen_range(0..6)).collect();
    run("cross_entropy", &[x], &|t, v| t.cross_entropy(v[0], &targets).unwrap());

    let x = rand_tensor(rng, &[3, 8], 1.0);
    let g = Tensor::from_fn(&[8], |_| 1.0 + rng.gen_range(-0.3..0.3)).with_grad(true);
    let b = rand_tensor(rng, &[8], 0.3);
    run("layer_norm", &[x, g, b], &|t, v| t.layer_norm(v[0], v[1], v[2]).unwrap());

    let table = rand_tensor(rng, &[7, 3], 1.0);
    let ids = [1usize, 4, 4, 0];
    run("embedding", &[table], &|t, v| t.embedding(v[0], &ids).unwrap());
    let x = rand_tensor(rng, &[4, 5], 1.0);
    let idx: Vec<usize> = (0..4).map(|_| rng.gen_range(0..5)).collect();
    run("gather", std::slice::from_ref(&x), &|t, v| t.gather(v[0], &idx).unwrap());
    run("slice_rows", std::slice::from_ref(&x), &|t, v| t.slice_rows(v[0], 1, 2).unwrap());
    run("slice_cols", std::slice::from_ref(&x), &|t, v| t.slice_cols(v[0], 2, 3).unwrap());
    let y = rand_tensor(rng, &[4, 2], 1.0);
    run("concat_cols", &[x.clone(), y], &|t, v| t.concat_cols(&[v[0], v[1]]).unwrap());
    run("reshape", std::slice::from_ref(&x), &|t, v| t.reshape(v[0], &[20]).unwrap());
    let keep: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.9)).collect();
    run("dropout", &[x], &|t, v| t.dropout(v[0], &keep, 0.1).unwrap());

    let x = Tensor::from_fn(&[4, 6], |_| rng.gen_range(-1.0..1.0));
    let w1 = rand_tensor(rng, &[8, 6], 1.0);
    let b1 = rand_tensor(rng, &[8], 0.1);
    let w2 = rand_tensor(rng, &[3, 8], 1.5);
    let targets = [0usize, 2, 1, 1];
    // per-example log-likelihood of the targets
    run("mlp", &[x, w1, b1, w2], &|t, v| {
        let h = t.matmul_nt(v[0], v[1]).unwrap();
        let h = t.add_row(h, v[2]).unwrap();
        let h = t.tanh(h);
        let logits = t.matmul_nt(h, v[3]).unwrap();
        let lp = t.log_softmax(logits);
        t.gather(lp, &targets).unwrap()
    });

    let x = rand_tensor(rng, &[5, 4], 1.5);
    let wq = rand_tensor(rng, &[4, 4], 1.0);
    let wk = rand_tensor(rng, &[4, 4], 1.0);
    let wv = rand_tensor(rng, &[4, 4], 1.0);
    run("attention", &[x, wq, wk, wv], &|t, v| {
        let q = t.matmul_nt(v[0], v[1]).unwrap();
        let k = t.matmul_nt(v[0], v[2]).unwrap();
        let val = t.matmul_nt(v[0], v[3]).unwrap();
        let mut heads = Vec::new();
        for h in 0..2 {
            let qh = t.slice_cols(q, 2 * h, 2).unwrap();
            let kh = t.slice_cols(k, 2 * h, 2).unwrap();
            let vh = t.slice_cols(val, 2 * h, 2).unwrap();
            let sc = t.matmul_nt(qh, kh).unwrap();
            let p = t.causal_softmax(sc);
            heads.push(t.matmul(p, vh).unwrap());
        }
        t.concat_cols(&heads).unwrap()
    });
    out
}
