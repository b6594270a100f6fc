//! Properties of the tensor engine: gradient checks for every primitive,
//! convolution adjointness, broadcast-gradient shapes and determinism.

use npprov_core::{grad_check, Graph, Result, Tensor, Var};
use proptest::prelude::*;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n = shape.iter().product::<usize>();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn point(shape: &[usize]) -> impl Strategy<Value = Tensor> {
    tensor(shape.to_vec(), -2.0, 2.0)
}

/// A scalar that depends on every output element with distinct weights.
fn weighted_sum(g: &Graph, y: Var) -> Result<Var> {
    let shape = g.shape(y);
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.1 * (i % 7) as f64).collect())?;
    let prod = g.mul(y, g.constant(w))?;
    g.sum_all(prod)
}

fn check(f: impl Fn(&Graph, Var) -> Result<Var>, at: &Tensor) -> f64 {
    grad_check(|g, x| weighted_sum(g, f(g, x)?), at, EPS).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn elementwise_binary(x in point(&[2, 3]), other in point(&[2, 3]), row in point(&[1, 3])) {
        let c = other.clone();
        prop_assert!(check(|g, x| g.add(x, g.constant(c.clone())), &x) < TOL);
        prop_assert!(check(|g, x| g.sub(g.constant(c.clone()), x), &x) < TOL);
        prop_assert!(check(|g, x| g.mul(x, g.constant(c.clone())), &x) < TOL);
        // Broadcast side receives the reduced gradient.
        let full = x.clone();
        prop_assert!(check(|g, r| g.mul(g.constant(full.clone()), r), &row) < TOL);
        prop_assert!(check(|g, r| g.sub(g.constant(full.clone()), r), &row) < TOL);
    }

    #[test]
    fn division_both_sides(num in point(&[2, 3]), den in tensor(vec![2, 3], 0.5, 2.0)) {
        let d = den.clone();
        prop_assert!(check(|g, x| g.div(x, g.constant(d.clone())), &num) < TOL);
        let n = num.clone();
        prop_assert!(check(|g, x| g.div(g.constant(n.clone()), x), &den) < TOL);
    }

    #[test]
    fn matmul_both_sides(a in point(&[3, 4]), b in point(&[4, 2])) {
        let bb = b.clone();
        prop_assert!(check(|g, x| g.matmul(x, g.constant(bb.clone())), &a) < TOL);
        let aa = a.clone();
        prop_assert!(check(|g, x| g.matmul(g.constant(aa.clone()), x), &b) < TOL);
    }

    #[test]
    fn structural_ops(x in point(&[2, 3, 4]), other in point(&[2, 2, 4])) {
        let o = other.clone();
        prop_assert!(check(|g, x| g.concat(&[g.constant(o.clone()), x], 1), &x) < TOL);
        for axis in 0..3 {
            prop_assert!(check(|g, x| g.sum(x, axis), &x) < TOL);
            prop_assert!(check(|g, x| g.mean(x, axis), &x) < TOL);
        }
        prop_assert!(check(|g, x| g.slice(x, 2, 1, 2), &x) < TOL);
        prop_assert!(check(|g, x| g.reshape(x, [6, 4]), &x) < TOL);
        prop_assert!(check(|g, x| g.sum_all(x), &x) < TOL);
    }

    #[test]
    fn elementwise_unary(x in point(&[5]), pos in tensor(vec![5], 0.1, 2.0)) {
        prop_assert!(check(|g, x| g.exp(x), &x) < TOL);
        prop_assert!(check(|g, x| g.log(x), &pos) < TOL);
        prop_assert!(check(|g, x| g.neg(x), &x) < TOL);
        prop_assert!(check(|g, x| g.relu(x), &x) < TOL);
        prop_assert!(check(|g, x| g.softplus(x), &x) < TOL);
        prop_assert!(check(|g, x| g.sigmoid(x), &x) < TOL);
    }

    #[test]
    fn conv1d_input_and_filter(x in point(&[2, 9]), w in point(&[3, 2, 3])) {
        for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
            let ww = w.clone();
            prop_assert!(check(|g, x| g.conv1d(x, g.constant(ww.clone()), stride, pad), &x) < TOL);
            let xx = x.clone();
            prop_assert!(check(|g, w| g.conv1d(g.constant(xx.clone()), w, stride, pad), &w) < TOL);
        }
    }

    #[test]
    fn conv_transpose1d_input_and_filter(x in point(&[2, 5]), w in point(&[2, 3, 3])) {
        for (stride, pad, out_pad) in [(1, 1, 0), (2, 1, 1)] {
            let ww = w.clone();
            prop_assert!(check(|g, x| g.conv_transpose1d(x, g.constant(ww.clone()), stride, pad, out_pad), &x) < TOL);
            let xx = x.clone();
            prop_assert!(check(|g, w| g.conv_transpose1d(g.constant(xx.clone()), w, stride, pad, out_pad), &w) < TOL);
        }
    }

    #[test]
    fn conv2d_input_and_filter(x in point(&[2, 5, 6]), w in point(&[2, 2, 3, 3])) {
        for (stride, pad) in [(1, 1), (2, 1)] {
            let ww = w.clone();
            prop_assert!(check(|g, x| g.conv2d(x, g.constant(ww.clone()), stride, pad), &x) < TOL);
            let xx = x.clone();
            prop_assert!(check(|g, w| g.conv2d(g.constant(xx.clone()), w, stride, pad), &w) < TOL);
        }
    }

    #[test]
    fn conv_transpose2d_input_and_filter(x in point(&[2, 3, 3]), w in point(&[2, 2, 3, 3])) {
        let ww = w.clone();
        prop_assert!(check(|g, x| g.conv_transpose2d(x, g.constant(ww.clone()), 2, 1, 1), &x) < TOL);
        let xx = x.clone();
        prop_assert!(check(|g, w| g.conv_transpose2d(g.constant(xx.clone()), w, 2, 1, 1), &w) < TOL);
    }

    #[test]
    fn affine_pointwise_all_inputs(x in point(&[3, 4, 2]), w in point(&[2, 3]), b in point(&[2])) {
        let (ww, bb) = (w.clone(), b.clone());
        prop_assert!(check(|g, x| g.affine_pointwise(x, g.constant(ww.clone()), g.constant(bb.clone())), &x) < TOL);
        let (xx, bb) = (x.clone(), b.clone());
        prop_assert!(check(|g, w| g.affine_pointwise(g.constant(xx.clone()), w, g.constant(bb.clone())), &w) < TOL);
        let (xx, ww) = (x.clone(), w.clone());
        prop_assert!(check(|g, b| g.affine_pointwise(g.constant(xx.clone()), g.constant(ww.clone()), b), &b) < TOL);
    }
}

fn inner(a: &Tensor, b: &Tensor) -> f64 {
    a.dot(b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_transpose1d_is_adjoint(
        len in 5usize..20,
        k in prop::sample::select(vec![1usize, 3, 5]),
        stride in 1usize..4,
        pad in 0usize..3,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= len + 2 * pad);
        let (ci, co) = (2, 3);
        let out_len = (len + 2 * pad - k) / stride + 1;
        let out_pad = (len + 2 * pad - k) % stride;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut rand_t = |shape: Vec<usize>| {
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).unwrap()
        };
        let (u, v, w) = (rand_t(vec![ci, len]), rand_t(vec![co, out_len]), rand_t(vec![co, ci, k]));
        let g = Graph::new();
        let wv = g.constant(w);
        let fwd = g.conv1d(g.constant(u.clone()), wv, stride, pad).unwrap();
        let back = g.conv_transpose1d(g.constant(v.clone()), wv, stride, pad, out_pad).unwrap();
        prop_assert_eq!(g.shape(back), vec![ci, len]);
        let (lhs, rhs) = (inner(&g.value(fwd), &v), inner(&u, &g.value(back)));
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn conv_transpose2d_is_adjoint(
        h in 4usize..10,
        wd in 4usize..10,
        k in prop::sample::select(vec![1usize, 3]),
        stride in 1usize..3,
        pad in 0usize..2,
        seed in any::<u64>(),
    ) {
        let (ci, co) = (2, 2);
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        // Transposed output padding is applied equally on both axes.
        prop_assume!((h + 2 * pad - k) % stride == (wd + 2 * pad - k) % stride);
        let out_pad = (h + 2 * pad - k) % stride;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut rand_t = |shape: Vec<usize>| {
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).unwrap()
        };
        let (u, v, w) = (rand_t(vec![ci, h, wd]), rand_t(vec![co, oh, ow]), rand_t(vec![co, ci, k, k]));
        let g = Graph::new();
        let wv = g.constant(w);
        let fwd = g.conv2d(g.constant(u.clone()), wv, stride, pad).unwrap();
        let back = g.conv_transpose2d(g.constant(v.clone()), wv, stride, pad, out_pad).unwrap();
        prop_assert_eq!(g.shape(back), vec![ci, h, wd]);
        let (lhs, rhs) = (inner(&g.value(fwd), &v), inner(&u, &g.value(back)));
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn broadcast_gradients_keep_input_shapes(
        rows in 1usize..4,
        cols in 1usize..4,
        keep_rows in any::<bool>(),
        keep_cols in any::<bool>(),
    ) {
        let small = [if keep_rows { rows } else { 1 }, if keep_cols { cols } else { 1 }];
        let g = Graph::new();
        let a = g.param("a", &Tensor::full([rows, cols], 0.5));
        let b = g.param("b", &Tensor::full(small, 1.5));
        let s = g.scale(a, 2.0).unwrap();
        let y = g.div(g.mul(s, b).unwrap(), g.add(b, g.constant(Tensor::scalar(1.0))).unwrap()).unwrap();
        let grads = g.backward(g.sum_all(y).unwrap()).unwrap();
        prop_assert_eq!(grads.get("a").unwrap().shape(), &[rows, cols]);
        prop_assert_eq!(grads.get("b").unwrap().shape(), &small);
    }

    #[test]
    fn forward_is_deterministic(x in point(&[2, 16]), w in point(&[4, 2, 3])) {
        let run = || {
            let g = Graph::new();
            let y = g.conv1d(g.constant(x.clone()), g.constant(w.clone()), 2, 1).unwrap();
            let z = g.softplus(y).unwrap();
            let t = g.conv_transpose1d(z, g.constant(w.clone()), 2, 1, 1).unwrap();
            g.value(t)
        };
        let (a, b) = (run(), run());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }
}
