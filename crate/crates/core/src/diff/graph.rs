//! Reverse-mode differentiation over a dynamically recorded graph.
//!
//! Every primitive appends one node holding its forward value. Inputs always
//! precede their consumers, so node order is a topological order and the
//! backward pass is a single reverse sweep.

use std::cell::RefCell;
use std::collections::BTreeMap;

use super::kernels::{self, ConvGeom};
use super::tensor::{broadcast_index_map, broadcast_shape, reduce_to_shape, shape_mismatch, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Sum { x: Var, axis: usize },
    Mean { x: Var, axis: usize },
    SumAll(Var),
    Exp(Var),
    Log(Var),
    Neg(Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Reshape(Var),
    Conv { x: Var, w: Var, geom: ConvGeom },
    ConvTranspose { x: Var, w: Var, geom: ConvGeom },
}

struct Node {
    op: Op,
    value: Tensor,
    param: Option<String>,
}

/// Gradients of a scalar with respect to every named parameter of a graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients(BTreeMap<String, Tensor>);

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> BTreeMap<String, Tensor> {
        self.0
    }

    /// Accumulate `other` into `self`, scaled by `weight`.
    pub fn accumulate(&mut self, other: &Gradients, weight: f64) {
        for (name, g) in &other.0 {
            let scaled = g.map(|v| v * weight);
            match self.0.get_mut(name) {
                Some(acc) => acc.add_assign(&scaled),
                None => {
                    self.0.insert(name.clone(), scaled);
                }
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .values()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.0.values_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}

impl FromIterator<(String, Tensor)> for Gradients {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Gradients(iter.into_iter().collect())
    }
}

/// A single-threaded computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NumericFault { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            param: None,
        });
        Ok(Var(nodes.len() - 1))
    }

    /// A leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Op::Leaf,
            value,
            param: None,
        });
        Var(nodes.len() - 1)
    }

    /// A named leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&self, name: impl Into<String>, value: &Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Op::Leaf,
            value: value.clone(),
            param: Some(name.into()),
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn with2<R>(&self, a: Var, b: Var, f: impl FnOnce(&Tensor, &Tensor) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a.0].value, &nodes[b.0].value)
    }

    fn with1<R>(&self, a: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a.0].value)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let value = self.with2(a, b, |ta, tb| -> Result<Tensor> {
            let shape = broadcast_shape(name, ta.shape(), tb.shape())?;
            let data = if ta.shape() == tb.shape() {
                ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect()
            } else {
                let ma = broadcast_index_map(ta.shape(), &shape);
                let mb = broadcast_index_map(tb.shape(), &shape);
                ma.iter()
                    .zip(&mb)
                    .map(|(&i, &j)| f(ta.data()[i], tb.data()[j]))
                    .collect()
            };
            Tensor::new(shape, data)
        })?;
        self.push(op, value, name)
    }

    fn unary(&self, a: Var, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.with1(a, |t| t.map(f));
        self.push(op, value, name)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", Op::Div(a, b), |x, y| x / y)
    }

    /// Multiply by a fixed scalar.
    pub fn scale(&self, a: Var, factor: f64) -> Result<Var> {
        let c = self.constant(Tensor::scalar(factor));
        self.mul(a, c)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = self.with2(a, b, |ta, tb| -> Result<Tensor> {
            match (ta.shape(), tb.shape()) {
                (&[m, k], &[k2, n]) if k == k2 => {
                    let mut out = vec![0.0; m * n];
                    kernels::gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
                    Tensor::new([m, n], out)
                }
                (sa, sb) => Err(shape_mismatch("matmul", sa, sb)),
            }
        })?;
        self.push(Op::MatMul(a, b), value, "matmul")
    }

    pub fn concat(&self, inputs: &[Var], axis: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let parts: Vec<&Tensor> = inputs.iter().map(|v| &nodes[v.0].value).collect();
            concat_values(&parts, axis)?
        };
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
            "concat",
        )
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.with1(x, |t| -> Result<Tensor> {
            check_axis("slice", t.shape(), axis)?;
            if len == 0 || start + len > t.shape()[axis] {
                return Err(Error::contract(format!(
                    "slice {start}..{} out of range for axis {axis} of shape {:?}",
                    start + len,
                    t.shape()
                )));
            }
            Ok(slice_axis(t, axis, start, len))
        })?;
        self.push(Op::Slice { x, axis, start }, value, "slice")
    }

    /// Sum over `axis`, keeping it with length one.
    pub fn sum(&self, x: Var, axis: usize) -> Result<Var> {
        let value = self.with1(x, |t| reduce_axis(t, axis, 1.0))?;
        self.push(Op::Sum { x, axis }, value, "sum")
    }

    /// Mean over `axis`, keeping it with length one.
    pub fn mean(&self, x: Var, axis: usize) -> Result<Var> {
        let value = self.with1(x, |t| {
            let n = *t.shape().get(axis).unwrap_or(&1) as f64;
            reduce_axis(t, axis, 1.0 / n)
        })?;
        self.push(Op::Mean { x, axis }, value, "mean")
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&self, x: Var) -> Result<Var> {
        let value = self.with1(x, |t| Tensor::scalar(t.sum()));
        self.push(Op::SumAll(x), value, "sum_all")
    }

    pub fn mean_all(&self, x: Var) -> Result<Var> {
        let n = self.with1(x, |t| t.numel()) as f64;
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n)
    }

    pub fn exp(&self, x: Var) -> Result<Var> {
        self.unary(x, "exp", Op::Exp(x), f64::exp)
    }

    pub fn log(&self, x: Var) -> Result<Var> {
        self.unary(x, "log", Op::Log(x), f64::ln)
    }

    pub fn neg(&self, x: Var) -> Result<Var> {
        self.unary(x, "neg", Op::Neg(x), |v| -v)
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        self.unary(x, "relu", Op::Relu(x), |v| v.max(0.0))
    }

    pub fn softplus(&self, x: Var) -> Result<Var> {
        self.unary(x, "softplus", Op::Softplus(x), kernels::softplus)
    }

    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        self.unary(x, "sigmoid", Op::Sigmoid(x), kernels::sigmoid)
    }

    pub fn reshape(&self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.with1(x, |t| t.clone().reshape(shape))?;
        self.push(Op::Reshape(x), value, "reshape")
    }

    /// 1-d convolution of `[c_in, len]` by filters `[c_out, c_in, k]`.
    pub fn conv1d(&self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let geom = match (xs.as_slice(), ws.as_slice()) {
            (&[ci, l], &[co, ci2, k]) if ci == ci2 => {
                ConvGeom::conv(ci, (1, l), co, (1, k), (1, stride), (0, padding))?
            }
            _ => return Err(shape_mismatch("conv1d", &xs, &ws)),
        };
        let out = self.with2(x, w, |tx, tw| geom.forward(tx.data(), tw.data()));
        let value = Tensor::new([geom.c_out, geom.w_out], out)?;
        self.push(Op::Conv { x, w, geom }, value, "conv1d")
    }

    /// 1-d transposed convolution of `[c_in, len]` by filters `[c_in, c_out, k]`.
    pub fn conv_transpose1d(
        &self,
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let geom = match (xs.as_slice(), ws.as_slice()) {
            (&[ci, l], &[ci2, co, k]) if ci == ci2 => ConvGeom::transposed(
                ci,
                (1, l),
                co,
                (1, k),
                (1, stride),
                (0, padding),
                (0, output_padding),
            )?,
            _ => return Err(shape_mismatch("conv_transpose1d", &xs, &ws)),
        };
        let out = self.with2(x, w, |tx, tw| geom.backward_data(tx.data(), tw.data()));
        let value = Tensor::new([geom.c_in, geom.w_in], out)?;
        self.push(Op::ConvTranspose { x, w, geom }, value, "conv_transpose1d")
    }

    /// 2-d convolution of `[c_in, h, w]` by filters `[c_out, c_in, kh, kw]`.
    pub fn conv2d(&self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let geom = match (xs.as_slice(), ws.as_slice()) {
            (&[ci, h, wd], &[co, ci2, kh, kw]) if ci == ci2 => ConvGeom::conv(
                ci,
                (h, wd),
                co,
                (kh, kw),
                (stride, stride),
                (padding, padding),
            )?,
            _ => return Err(shape_mismatch("conv2d", &xs, &ws)),
        };
        let out = self.with2(x, w, |tx, tw| geom.forward(tx.data(), tw.data()));
        let value = Tensor::new([geom.c_out, geom.h_out, geom.w_out], out)?;
        self.push(Op::Conv { x, w, geom }, value, "conv2d")
    }

    /// 2-d transposed convolution of `[c_in, h, w]` by filters `[c_in, c_out, kh, kw]`.
    pub fn conv_transpose2d(
        &self,
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let geom = match (xs.as_slice(), ws.as_slice()) {
            (&[ci, h, wd], &[ci2, co, kh, kw]) if ci == ci2 => ConvGeom::transposed(
                ci,
                (h, wd),
                co,
                (kh, kw),
                (stride, stride),
                (padding, padding),
                (output_padding, output_padding),
            )?,
            _ => return Err(shape_mismatch("conv_transpose2d", &xs, &ws)),
        };
        let out = self.with2(x, w, |tx, tw| geom.backward_data(tx.data(), tw.data()));
        let value = Tensor::new([geom.c_in, geom.h_in, geom.w_in], out)?;
        self.push(Op::ConvTranspose { x, w, geom }, value, "conv_transpose2d")
    }

    /// Channel-mixing affine map applied at every position (a 1x1
    /// convolution): `x` is `[c_in, ...]`, `w` is `[c_out, c_in]`, `b` is
    /// `[c_out]`. Returns `[c_out, ...]`.
    pub fn affine_pointwise(&self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let (ws, bs) = (self.shape(w), self.shape(b));
        let (c_out, c_in) = match ws.as_slice() {
            &[co, ci] if xs.first() == Some(&ci) && bs == [co] => (co, ci),
            _ => {
                return Err(Error::contract(format!(
                    "affine_pointwise: input {xs:?}, weight {ws:?}, bias {bs:?}"
                )))
            }
        };
        let positions = xs[1..].iter().product::<usize>();
        let flat = self.reshape(x, [c_in, positions])?;
        let mixed = self.matmul(w, flat)?;
        let bias = self.reshape(b, [c_out, 1])?;
        let out = self.add(mixed, bias)?;
        let mut shape = xs;
        shape[0] = c_out;
        self.reshape(out, shape)
    }

    /// Gradient of the scalar `loss` with respect to every named parameter.
    /// Parameters that `loss` does not depend on get a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(nodes[loss.0].value.shape().to_vec()));

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let mut send = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    send(*a, reduce_to_shape(&g, val(*a).shape()));
                    send(*b, reduce_to_shape(&g, val(*b).shape()));
                }
                Op::Sub(a, b) => {
                    send(*a, reduce_to_shape(&g, val(*a).shape()));
                    send(*b, reduce_to_shape(&g.map(|v| -v), val(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let ga = zip_broadcast(&g, tb, |g, y| g * y);
                    let gb = zip_broadcast(&g, ta, |g, x| g * x);
                    send(*a, reduce_to_shape(&ga, ta.shape()));
                    send(*b, reduce_to_shape(&gb, tb.shape()));
                }
                Op::Div(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    // d(x/y)/dy = -out/y
                    let ga = zip_broadcast(&g, tb, |g, y| g / y);
                    let gy = zip_broadcast(&ga, &node.value, |gy, out| -gy * out);
                    send(*a, reduce_to_shape(&ga, ta.shape()));
                    send(*b, reduce_to_shape(&gy, tb.shape()));
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g.data(), false, tb.data(), true, &mut ga, false);
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm(k, m, n, ta.data(), true, g.data(), false, &mut gb, false);
                    send(*a, Tensor::new([m, k], ga)?);
                    send(*b, Tensor::new([k, n], gb)?);
                }
                Op::Concat { inputs, axis } => {
                    let mut start = 0;
                    for v in inputs {
                        let shape = val(*v).shape();
                        let len = shape[*axis];
                        send(*v, slice_axis(&g, *axis, start, len));
                        start += len;
                    }
                }
                Op::Slice { x, axis, start } => {
                    send(*x, embed_axis(&g, val(*x).shape(), *axis, *start));
                }
                Op::Sum { x, axis } => send(*x, expand_axis(&g, val(*x).shape(), *axis, 1.0)),
                Op::Mean { x, axis } => {
                    let shape = val(*x).shape();
                    let n = *shape.get(*axis).unwrap_or(&1) as f64;
                    send(*x, expand_axis(&g, shape, *axis, 1.0 / n));
                }
                Op::SumAll(x) => {
                    let gv = g.data()[0];
                    send(*x, Tensor::full(val(*x).shape().to_vec(), gv));
                }
                Op::Exp(x) => send(*x, zip_same(&g, &node.value, |g, y| g * y)),
                Op::Log(x) => send(*x, zip_same(&g, val(*x), |g, x| g / x)),
                Op::Neg(x) => send(*x, g.map(|v| -v)),
                Op::Relu(x) => send(
                    *x,
                    zip_same(&g, val(*x), |g, x| if x > 0.0 { g } else { 0.0 }),
                ),
                Op::Softplus(x) => {
                    send(*x, zip_same(&g, val(*x), |g, x| g * kernels::sigmoid(x)))
                }
                Op::Sigmoid(x) => send(*x, zip_same(&g, &node.value, |g, s| g * s * (1.0 - s))),
                Op::Reshape(x) => send(*x, g.reshape(val(*x).shape().to_vec())?),
                Op::Conv { x, w, geom } => {
                    let (tx, tw) = (val(*x), val(*w));
                    let gx = geom.backward_data(g.data(), tw.data());
                    let gw = geom.backward_weight(tx.data(), g.data());
                    send(*x, Tensor::new(tx.shape().to_vec(), gx)?);
                    send(*w, Tensor::new(tw.shape().to_vec(), gw)?);
                }
                Op::ConvTranspose { x, w, geom } => {
                    let (tx, tw) = (val(*x), val(*w));
                    let gx = geom.forward(g.data(), tw.data());
                    let gw = geom.backward_weight(g.data(), tx.data());
                    send(*x, Tensor::new(tx.shape().to_vec(), gx)?);
                    send(*w, Tensor::new(tw.shape().to_vec(), gw)?);
                }
            }
        }

        Ok(nodes
            .iter()
            .zip(grads)
            .filter_map(|(node, g)| {
                let name = node.param.as_ref()?;
                let g = g.unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                Some((name.clone(), g))
            })
            .collect())
    }
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Elementwise `f(a, b)` where `b` broadcasts onto `a`'s shape.
fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return zip_same(a, b, f);
    }
    let map = broadcast_index_map(b.shape(), a.shape());
    let data = a
        .data()
        .iter()
        .zip(&map)
        .map(|(&x, &j)| f(x, b.data()[j]))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Split a shape around `axis` into (outer count, axis length, inner count).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::contract(format!(
            "{op}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

fn concat_values(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("concat of zero tensors"))?;
    check_axis("concat", first.shape(), axis)?;
    let mut shape = first.shape().to_vec();
    shape[axis] = 0;
    for p in parts {
        let ok = p.rank() == shape.len()
            && p
                .shape()
                .iter()
                .enumerate()
                .all(|(i, &d)| i == axis || d == first.shape()[i]);
        if !ok {
            return Err(shape_mismatch("concat", first.shape(), p.shape()));
        }
        shape[axis] += p.shape()[axis];
    }
    let (outer, _, inner) = axis_split(&shape, axis);
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Tensor::new(shape, data)
}

fn slice_axis(t: &Tensor, axis: usize, start: usize, len: usize) -> Tensor {
    let (outer, full, inner) = axis_split(t.shape(), axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        data.extend_from_slice(&t.data()[base..base + len * inner]);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = len;
    Tensor::new(shape, data).expect("slice within bounds")
}

/// Inverse of [`slice_axis`]: place `t` at `start` along `axis` of a zero
/// tensor of `shape`.
fn embed_axis(t: &Tensor, shape: &[usize], axis: usize, start: usize) -> Tensor {
    let (outer, full, inner) = axis_split(shape, axis);
    let len = t.shape()[axis];
    let mut data = vec![0.0; outer * full * inner];
    for o in 0..outer {
        let base = (o * full + start) * inner;
        data[base..base + len * inner].copy_from_slice(&t.data()[o * len * inner..(o + 1) * len * inner]);
    }
    Tensor::new(shape.to_vec(), data).expect("embedding shape")
}

fn reduce_axis(t: &Tensor, axis: usize, weight: f64) -> Result<Tensor> {
    check_axis("sum", t.shape(), axis)?;
    let (outer, len, inner) = axis_split(t.shape(), axis);
    let mut data = vec![0.0; outer * inner];
    for o in 0..outer {
        for a in 0..len {
            let row = &t.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
            for (acc, v) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    for v in &mut data {
        *v *= weight;
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = 1;
    Tensor::new(shape, data)
}

fn expand_axis(g: &Tensor, shape: &[usize], axis: usize, weight: f64) -> Tensor {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let row = &g.data()[o * inner..(o + 1) * inner];
        for _ in 0..len {
            data.extend(row.iter().map(|v| v * weight));
        }
    }
    Tensor::new(shape.to_vec(), data).expect("expanded shape")
}
