//! Every primitive against central differences at 64-bit, 100 random inputs each.

use numcore::{grad_check, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;
const CASES: u64 = 100;
/// Nonzero analytic coordinates smaller than this are below the central
/// difference noise floor at 64-bit; such draws are replaced.
const MIN_GRAD: f64 = 1e-3;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Values bounded away from 0 so ReLU / std kinks are not straddled by ±EPS.
fn random_off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) { mag } else { -mag }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces an arbitrary output to a scalar with fixed random weights.
fn weighted<'t>(y: Var<'t, f64>, w: &Tensor<f64>) -> Result<Var<'t, f64>, TensorError> {
    let wv = y.tape().constant(w.clone());
    Ok(y.mul(wv)?.sum())
}

fn check_op<S, F>(name: &str, shape_x: &[usize], sample: S, op: F)
where
    S: Fn(&mut ChaCha8Rng, &[usize]) -> Tensor<f64>,
    F: for<'t> Fn(Var<'t, f64>, &mut ChaCha8Rng) -> Result<Var<'t, f64>, TensorError>,
{
    let mut attempt = 0u64;
    for case in 0..CASES {
        let (x, op_seed, w) = loop {
            attempt += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(attempt * 7919 + name.len() as u64);
            let x = sample(&mut rng, shape_x);
            let op_seed: u64 = rng.gen();
            let tape = Tape::new();
            let leaf = tape.leaf(x.clone());
            let y = op(leaf, &mut ChaCha8Rng::seed_from_u64(op_seed)).unwrap();
            let w = random(&mut ChaCha8Rng::seed_from_u64(op_seed ^ 0xA5A5), &y.shape());
            let g = tape.backward(weighted(y, &w).unwrap()).unwrap().get_or_zeros(leaf);
            if g.data().iter().all(|v| *v == 0.0 || v.abs() >= MIN_GRAD) {
                break (x, op_seed, w);
            }
            assert!(attempt < 20 * CASES, "{name}: could not draw well-conditioned inputs");
        };
        let report = grad_check(
            |v| {
                let mut r = ChaCha8Rng::seed_from_u64(op_seed);
                let y = op(v, &mut r)?;
                weighted(y, &w)
            },
            &x,
            EPS,
            TOL,
        )
        .unwrap();
        assert!(
            report.pass,
            "{name} case {case}: max rel error {:.3e} at {} (analytic {:?} numeric {:?})",
            report.max_rel_error,
            report.worst_index,
            report.analytic,
            report.numeric
        );
    }
}

#[test]
fn matmul_both_sides() {
    check_op("matmul_lhs", &[3, 4], random, |x, r| {
        let b = x.tape().constant(random(r, &[4, 2]));
        x.matmul(b)
    });
    check_op("matmul_rhs", &[4, 2], random, |x, r| {
        let a = x.tape().constant(random(r, &[3, 4]));
        a.matmul(x)
    });
}

#[test]
fn elementwise_binary() {
    check_op("add", &[2, 3], random, |x, r| x.add(x.tape().constant(random(r, &[2, 3]))));
    check_op("sub_rhs", &[2, 3], random, |x, r| x.tape().constant(random(r, &[2, 3])).sub(x));
    check_op("mul", &[2, 3], random, |x, r| x.mul(x.tape().constant(random(r, &[2, 3]))));
    check_op("add_row_x", &[3, 4], random, |x, r| x.add_row(x.tape().constant(random(r, &[4]))));
    check_op("add_row_bias", &[4], random, |b, r| b.tape().constant(random(r, &[3, 4])).add_row(b));
}

#[test]
fn elementwise_unary() {
    check_op("scale", &[5], random, |x, _| Ok(x.scale(-1.7)));
    check_op("affine_scalar", &[5], random, |x, _| Ok(x.affine_scalar(-1.0, 1.0)));
    check_op("relu", &[6], random_off_kink, |x, _| Ok(x.relu()));
    check_op("exp", &[5], random, |x, _| Ok(x.exp()));
    check_op("ln", &[5], |r, s| random_off_kink(r, s).map(|v| v.abs() + 0.1), |x, _| Ok(x.ln()));
    check_op("powf", &[5], |r, s| random_off_kink(r, s).map(|v| v.abs() + 0.1), |x, _| Ok(x.powf(2.5)));
}

#[test]
fn softmax_each_axis() {
    check_op("softmax_last", &[3, 4], random, |x, _| x.softmax(1));
    check_op("softmax_first", &[3, 4], random, |x, _| x.softmax(0));
    check_op("softmax_middle", &[2, 3, 2], random, |x, _| x.softmax(1));
}

#[test]
fn reductions_and_reshapes() {
    check_op("sum", &[2, 3], random, |x, _| Ok(x.sum()));
    check_op("mean", &[2, 3], random, |x, _| Ok(x.mean()));
    check_op("reshape", &[2, 3], random, |x, _| x.reshape(&[3, 2]));
    check_op("transpose", &[2, 3], random, |x, _| x.transpose());
    check_op("pick", &[3, 4], random, |x, _| x.pick(&[2, 0, 3]));
    check_op("slice_cols", &[3, 5], random, |x, _| x.slice_cols(1, 4));
    check_op("gather_rows", &[4, 3], random, |x, _| x.gather_rows(&[3, 0, 3, 1]));
    check_op("concat_cols", &[2, 3], random, |x, r| {
        let c = x.tape().constant(random(r, &[2, 2]));
        Var::concat_cols(&[x, c, x])
    });
    check_op("concat_rows", &[2, 3], random, |x, r| {
        let c = x.tape().constant(random(r, &[1, 3]));
        Var::concat_rows(&[c, x])
    });
}

#[test]
fn set_pooling() {
    check_op("set_mean", &[2, 5, 3], random, |x, _| x.set_mean());
    check_op("set_std", &[2, 5, 3], random, |x, _| x.set_std());
}

#[test]
fn convolution_and_channel_ops() {
    check_op("conv2d_input", &[2, 2, 4, 4], random, |x, r| {
        let k = x.tape().constant(random(r, &[3, 2, 3, 3]));
        x.conv2d(k, 1, 1)
    });
    check_op("conv2d_kernel", &[3, 2, 3, 3], random, |k, r| {
        let x = k.tape().constant(random(r, &[2, 2, 5, 4]));
        x.conv2d(k, 2, 1)
    });
    check_op("conv2d_unbatched", &[2, 3, 3], random, |x, r| {
        let k = x.tape().constant(random(r, &[2, 2, 2, 2]));
        x.conv2d(k, 1, 0)
    });
    check_op("channel_affine_x", &[2, 3, 2, 2], random, |x, r| {
        let s = x.tape().constant(random(r, &[3]));
        let b = x.tape().constant(random(r, &[3]));
        x.channel_affine(s, b)
    });
    check_op("channel_affine_scale", &[3], random, |s, r| {
        let x = s.tape().constant(random(r, &[2, 3, 2, 2]));
        let b = s.tape().constant(random(r, &[3]));
        x.channel_affine(s, b)
    });
    check_op("channel_affine_shift", &[3], random, |b, r| {
        let x = b.tape().constant(random(r, &[2, 3, 2, 2]));
        let s = b.tape().constant(random(r, &[3]));
        x.channel_affine(s, b)
    });
    check_op("global_avg_pool", &[2, 3, 2, 2], random, |x, _| x.global_avg_pool());
}

#[test]
fn composite_matmul_softmax_log_chain() {
    check_op("chain", &[3, 3], random, |x, r| {
        let a = x.tape().constant(random(r, &[3, 3]));
        Ok(a.matmul(x)?.softmax(1)?.ln())
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn softmax_slices_sum_to_one(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[rows, cols]).map(|v| v * 10.0);
        let tape = Tape::new();
        let y = tape.constant(x.clone()).softmax(1).unwrap().value();
        for row in y.data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0 || cols == 1 && p == 1.0));
        }
        let shifted = tape.constant(x.map(|v| v + shift)).softmax(1).unwrap().value();
        prop_assert!(y.max_abs_diff(&shifted) < 1e-9);
    }

    #[test]
    fn matmul_is_associative_at_32_bit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats: Vec<Tensor<f32>> = (0..3).map(|_| random(&mut rng, &[8, 8]).cast()).collect();
        let tape = Tape::new();
        let [a, b, c] = [0, 1, 2].map(|i| tape.constant(mats[i].clone()));
        let left = a.matmul(b).unwrap().matmul(c).unwrap().value();
        let right = a.matmul(b.matmul(c).unwrap()).unwrap().value();
        prop_assert!(left.max_abs_diff(&right) < 1e-4);
    }

    #[test]
    fn double_use_gradient_is_sum_of_single_uses(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[4]);
        let (u, v) = (random(&mut rng, &[4]), random(&mut rng, &[4]));
        let grad_of = |ws: &[&Tensor<f64>]| {
            let tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let mut total = None;
            for w in ws {
                let term = xv.mul(tape.constant((*w).clone())).unwrap().exp().sum();
                total = Some(match total { None => term, Some(t) => term.add(t).unwrap() });
            }
            tape.backward(total.unwrap()).unwrap().get(xv).unwrap().clone()
        };
        let both = grad_of(&[&u, &v]);
        let (gu, gv) = (grad_of(&[&u]), grad_of(&[&v]));
        for i in 0..4 {
            prop_assert_eq!(both.data()[i], gv.data()[i] + gu.data()[i]);
        }
    }
}
