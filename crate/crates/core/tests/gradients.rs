//! Finite-difference oracle for every differentiable op.
//!
//! For each op, the loss is a fixed random weighting of the op output; the
//! analytic gradient from `backward` must match central differences
//! (h = 1e-5) within 1e-4 relative error on random inputs in [-2, 2].

use tgq_core::rng::NamedRng;
use tgq_core::tensor::{Graph, Tensor, Var};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut NamedRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform_in(lo, hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Relative error with a floor so near-zero gradients are compared absolutely.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Check d(loss)/d(inputs) against central differences for a loss builder.
fn check_grads(name: &str, inputs: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) {
    // analytic
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &vars);
    assert_eq!(g.value(loss).numel(), 1, "{name}: loss must be scalar");
    g.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| g.grad(v).unwrap_or_else(|| Tensor::zeros(g.value(v).shape().to_vec())))
        .collect();

    // numeric
    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item()
    };

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic[i].data()[j];
            let e = rel_err(a, numeric);
            if e > worst {
                worst = e;
            }
            assert!(
                e < TOL,
                "{name}: input {i} coord {j}: analytic {a} vs numeric {numeric} (rel {e:.3e})"
            );
        }
    }
    let _ = worst;
}

/// Weighted sum of all elements so every output coordinate carries gradient.
fn weighted(g: &mut Graph, out: Var, seed: &str) -> Var {
    let t = g.value(out);
    let (r, c) = (t.rows(), t.cols());
    let mut rng = NamedRng::derive(77, seed);
    let w = g.constant(rand_tensor(&mut rng, r, c, -1.0, 1.0));
    let prod = g.mul(out, w).unwrap();
    g.sum_all(prod)
}

#[test]
fn elementwise_binary_ops() {
    let mut rng = NamedRng::derive(1, "bin");
    let a = rand_tensor(&mut rng, 3, 4, -2.0, 2.0);
    let b = rand_tensor(&mut rng, 3, 4, -2.0, 2.0);
    check_grads("add", &[a.clone(), b.clone()], |g, v| {
        let y = g.add(v[0], v[1]).unwrap();
        weighted(g, y, "add")
    });
    check_grads("sub", &[a.clone(), b.clone()], |g, v| {
        let y = g.sub(v[0], v[1]).unwrap();
        weighted(g, y, "sub")
    });
    check_grads("mul", &[a, b], |g, v| {
        let y = g.mul(v[0], v[1]).unwrap();
        weighted(g, y, "mul")
    });
}

#[test]
fn elementwise_unary_ops() {
    let mut rng = NamedRng::derive(2, "un");
    let x = rand_tensor(&mut rng, 2, 5, -2.0, 2.0);
    let pos = rand_tensor(&mut rng, 2, 5, 0.5, 2.0);
    check_grads("sigmoid", &[x.clone()], |g, v| {
        let y = g.sigmoid(v[0]);
        weighted(g, y, "sigmoid")
    });
    check_grads("gelu", &[x.clone()], |g, v| {
        let y = g.gelu(v[0]);
        weighted(g, y, "gelu")
    });
    check_grads("exp", &[x.clone()], |g, v| {
        let y = g.exp(v[0]);
        weighted(g, y, "exp")
    });
    check_grads("log", &[pos.clone()], |g, v| {
        let y = g.log(v[0]);
        weighted(g, y, "log")
    });
    check_grads("sqrt", &[pos.clone()], |g, v| {
        let y = g.sqrt(v[0]);
        weighted(g, y, "sqrt")
    });
    check_grads("recip", &[pos], |g, v| {
        let y = g.recip(v[0]);
        weighted(g, y, "recip")
    });
    check_grads("scale_addscalar", &[x], |g, v| {
        let y = g.scale(v[0], -1.7);
        let y = g.add_scalar(y, 0.3);
        weighted(g, y, "sa")
    });
}

#[test]
fn matmul_and_transpose() {
    let mut rng = NamedRng::derive(3, "mm");
    let a = rand_tensor(&mut rng, 3, 4, -2.0, 2.0);
    let b = rand_tensor(&mut rng, 4, 2, -2.0, 2.0);
    check_grads("matmul", &[a.clone(), b], |g, v| {
        let y = g.matmul(v[0], v[1]).unwrap();
        weighted(g, y, "matmul")
    });
    check_grads("transpose", &[a], |g, v| {
        let y = g.transpose(v[0]);
        weighted(g, y, "transpose")
    });
}

#[test]
fn reductions_and_normalizations() {
    let mut rng = NamedRng::derive(4, "red");
    let x = rand_tensor(&mut rng, 4, 3, -2.0, 2.0);
    for axis in [0usize, 1] {
        check_grads(&format!("softmax{axis}"), &[x.clone()], |g, v| {
            let y = g.softmax(v[0], axis).unwrap();
            weighted(g, y, "sm")
        });
        check_grads(&format!("logsumexp{axis}"), &[x.clone()], |g, v| {
            let y = g.logsumexp(v[0], axis).unwrap();
            weighted(g, y, "lse")
        });
        check_grads(&format!("mean{axis}"), &[x.clone()], |g, v| {
            let y = g.mean(v[0], axis).unwrap();
            weighted(g, y, "mean")
        });
        check_grads(&format!("layer_norm{axis}"), &[x.clone()], |g, v| {
            let y = g.layer_norm(v[0], axis, 1e-5).unwrap();
            weighted(g, y, "ln")
        });
        check_grads(&format!("l2_normalize{axis}"), &[x.clone()], |g, v| {
            let y = g.l2_normalize(v[0], axis, 1e-12).unwrap();
            weighted(g, y, "l2")
        });
    }
    check_grads("mean_all", &[x.clone()], |g, v| g.mean_all(v[0]));
    check_grads("sum_all", &[x], |g, v| g.sum_all(v[0]));
}

#[test]
fn structural_ops() {
    let mut rng = NamedRng::derive(5, "st");
    let a = rand_tensor(&mut rng, 2, 3, -2.0, 2.0);
    let b = rand_tensor(&mut rng, 2, 3, -2.0, 2.0);
    check_grads("concat0", &[a.clone(), b.clone()], |g, v| {
        let y = g.concat(&[v[0], v[1]], 0).unwrap();
        weighted(g, y, "c0")
    });
    check_grads("concat1", &[a.clone(), b.clone()], |g, v| {
        let y = g.concat(&[v[0], v[1]], 1).unwrap();
        weighted(g, y, "c1")
    });
    let big = rand_tensor(&mut rng, 5, 4, -2.0, 2.0);
    check_grads("slice_rows", &[big.clone()], |g, v| {
        let y = g.slice_rows(v[0], 1, 3).unwrap();
        weighted(g, y, "sr")
    });
    check_grads("slice_cols", &[big.clone()], |g, v| {
        let y = g.slice_cols(v[0], 1, 2).unwrap();
        weighted(g, y, "sc")
    });
    let row = rand_tensor(&mut rng, 1, 4, -2.0, 2.0);
    check_grads("row_broadcast_add", &[big.clone(), row.clone()], |g, v| {
        let y = g.row_broadcast_add(v[0], v[1]).unwrap();
        weighted(g, y, "rba")
    });
    check_grads("row_broadcast_mul", &[big.clone(), row], |g, v| {
        let y = g.row_broadcast_mul(v[0], v[1]).unwrap();
        weighted(g, y, "rbm")
    });
    let square = rand_tensor(&mut rng, 4, 4, -2.0, 2.0);
    check_grads("diag", &[square], |g, v| {
        let y = g.diag(v[0]).unwrap();
        weighted(g, y, "diag")
    });
    check_grads("embed_rows", &[big], |g, v| {
        let y = g.embed_rows(v[0], &[3, 0, 3, 2]).unwrap();
        weighted(g, y, "er")
    });
}

#[test]
fn conv1d_gradients_including_padding() {
    let mut rng = NamedRng::derive(6, "cv");
    // 7 rows, stride 5 forces 3 rows of zero padding in the second window
    let x = rand_tensor(&mut rng, 7, 3, -2.0, 2.0);
    let w = rand_tensor(&mut rng, 2, 15, -1.0, 1.0);
    let b = rand_tensor(&mut rng, 1, 2, -1.0, 1.0);
    check_grads("conv1d", &[x, w, b], |g, v| {
        let y = g.conv1d(v[0], v[1], v[2], 5, 5).unwrap();
        weighted(g, y, "conv")
    });
    // overlapping windows (kernel > stride)
    let x = rand_tensor(&mut rng, 6, 2, -2.0, 2.0);
    let w = rand_tensor(&mut rng, 3, 6, -1.0, 1.0);
    let b = rand_tensor(&mut rng, 1, 3, -1.0, 1.0);
    check_grads("conv1d_overlap", &[x, w, b], |g, v| {
        let y = g.conv1d(v[0], v[1], v[2], 3, 2).unwrap();
        weighted(g, y, "conv2")
    });
}

#[test]
fn composite_deep_chain() {
    // a small MLP-with-norm chain touching many ops at once
    let mut rng = NamedRng::derive(7, "deep");
    let x = rand_tensor(&mut rng, 3, 4, -2.0, 2.0);
    let w1 = rand_tensor(&mut rng, 4, 6, -1.0, 1.0);
    let b1 = rand_tensor(&mut rng, 1, 6, -0.5, 0.5);
    let w2 = rand_tensor(&mut rng, 6, 2, -1.0, 1.0);
    check_grads("composite", &[x, w1, b1, w2], |g, v| {
        let h = g.matmul(v[0], v[1]).unwrap();
        let h = g.row_broadcast_add(h, v[2]).unwrap();
        let h = g.gelu(h);
        let h = g.layer_norm(h, 1, 1e-5).unwrap();
        let y = g.matmul(h, v[3]).unwrap();
        let y = g.softmax(y, 1).unwrap();
        let y = g.log(y);
        g.mean_all(y)
    });
}

#[test]
fn conv_output_length_formula_over_full_range() {
    // T_g = ceil(L / stride) for every L in 1..=512 and several strides
    for &stride in &[1usize, 2, 5, 7] {
        for &kernel in &[1usize, 3, 5] {
            for l in 1..=512usize {
                let mut g = Graph::new();
                let x = g.constant(Tensor::matrix(l, 1, vec![1.0; l]).unwrap());
                let w = g.constant(Tensor::matrix(1, kernel, vec![1.0; kernel]).unwrap());
                let b = g.constant(Tensor::row(vec![0.0]));
                let y = g.conv1d(x, w, b, kernel, stride).unwrap();
                assert_eq!(g.value(y).rows(), l.div_ceil(stride), "L={l} s={stride} k={kernel}");
            }
        }
    }
}

#[test]
fn forward_is_bit_identical_across_runs() {
    let run = || {
        let mut set = tgq_core::tensor::ParamSet::new(123);
        let w = set.add_uniform("m.w", 6, 6, 6);
        let mut g = Graph::new();
        let wv = g.param(&set, w);
        let mut rng = NamedRng::derive(123, "input");
        let x = g.leaf(rand_tensor(&mut rng, 4, 6, -2.0, 2.0), false);
        let h = g.matmul(x, wv).unwrap();
        let h = g.gelu(h);
        let h = g.softmax(h, 1).unwrap();
        g.value(h).data().to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert!(a.iter().all(|v| v.is_finite()));
}
