//! A small reverse-mode tape.
//!
//! Every operation appends a node holding its forward value; `backward` walks
//! the nodes in reverse creation order, which is a valid topological order.
//! Operations panic on shape mismatches: callers validate user-facing shapes
//! before building a graph.

use std::collections::BTreeMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transforms::fourier::{canonical_angle, dft_real, inverse_unnormalized_real, wrap_angle};
use crate::transforms::wavelet::{dwt, dwt_adjoint, FilterBank};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Input,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    ScaleRows(Var, Vec<f64>),
    MulRows(Var, Var),
    MulBroadcast(Var, Vec<f64>),
    Silu(Var),
    Abs(Var),
    Square(Var),
    WrapAngle(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Conv2d { input: Var, weight: Var, bias: Var },
    Linear { input: Var, weight: Var, bias: Var },
    AddChannelBias { x: Var, bias: Var },
    Dft { input: Var },
    ComplexAbs(Var),
    ComplexArg(Var),
    Dwt { input: Var, bank: FilterBank, levels: usize },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: BTreeMap<usize, Vec<f64>>,
    inputs: BTreeMap<usize, Vec<f64>>,
}

impl Gradients {
    /// Gradient with respect to parameter `index`, summed over every binding.
    pub fn param(&self, index: usize) -> Option<&[f64]> {
        self.params.get(&index).map(Vec::as_slice)
    }

    /// Gradient with respect to an input leaf created by [`Tape::input`].
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.inputs.get(&v.0).map(Vec::as_slice)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn view2(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view matches buffer")
}

fn view2_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view matches buffer")
}

/// Circular im2col: `col[(ci*k + ky)*k + kx][y*w + x] = img[ci][y+ky-p][x+kx-p]`.
fn im2col(img: &[f64], c_in: usize, h: usize, w: usize, k: usize, col: &mut [f64]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let dst = &mut col[row..row + hw];
                for y in 0..h {
                    let sy = (y + ky + h - p) % h;
                    let src = &plane[sy * w..(sy + 1) * w];
                    let out = &mut dst[y * w..(y + 1) * w];
                    let shift = (kx + w - p) % w;
                    // out[x] = src[(x + shift) % w]
                    let head = w - shift;
                    out[..head].copy_from_slice(&src[shift..]);
                    out[head..].copy_from_slice(&src[..shift]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulated into `img`.
fn col2im(col: &[f64], c_in: usize, h: usize, w: usize, k: usize, img: &mut [f64]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &mut img[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                let src = &col[row..row + hw];
                let shift = (kx + w - p) % w;
                let head = w - shift;
                for y in 0..h {
                    let sy = (y + ky + h - p) % h;
                    let dst = &mut plane[sy * w..(sy + 1) * w];
                    let s = &src[y * w..(y + 1) * w];
                    add_into(&mut dst[shift..], &s[..head]);
                    add_into(&mut dst[..shift], &s[head..]);
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Whether gradient can flow from `v` back to a trainable leaf.
    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let n = self.node(v);
        assert_eq!(n.value.len(), 1, "scalar() on a node of shape {:?}", n.shape);
        n.value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes hold consistent shapes")
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Constant, false)
    }

    /// A non-parameter leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Input, true)
    }

    /// Binds parameter `index`; it takes part in differentiation iff
    /// `t.requires_grad`.
    pub fn param(&mut self, index: usize, t: &Tensor) -> Var {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Param(index),
            t.requires_grad,
        )
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let n = self.node(a);
        let value = n.value.iter().map(|&x| f(x)).collect();
        let shape = n.shape.clone();
        let needs = n.needs_grad;
        self.push(shape, value, op, needs)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (na, nb) = (self.node(a), self.node(b));
        assert_eq!(na.shape, nb.shape, "elementwise operands differ in shape");
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let shape = na.shape.clone();
        let needs = na.needs_grad || nb.needs_grad;
        self.push(shape, value, op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |x| x + c)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Silu(a), |x| x * sigmoid(x))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Wraps angles into `(-pi, pi]`. The wrap is locally constant, so the
    /// gradient passes through unchanged.
    pub fn wrap_angle(&mut self, a: Var) -> Var {
        self.unary(a, Op::WrapAngle(a), wrap_angle)
    }

    /// Multiplies each leading-axis row by a constant: `x[b, ..] * c[b]`.
    pub fn scale_rows(&mut self, a: Var, c: &[f64]) -> Var {
        let n = self.node(a);
        assert_eq!(n.shape[0], c.len(), "scale_rows length");
        let per = n.value.len() / c.len();
        let value = n
            .value
            .chunks(per)
            .zip(c)
            .flat_map(|(row, &s)| row.iter().map(move |&x| x * s))
            .collect();
        let shape = n.shape.clone();
        let needs = n.needs_grad;
        self.push(shape, value, Op::ScaleRows(a, c.to_vec()), needs)
    }

    /// `x[b, ..] * w[b]` where `w` has shape `[B]`.
    pub fn mul_rows(&mut self, a: Var, w: Var) -> Var {
        let (na, nw) = (self.node(a), self.node(w));
        assert_eq!(nw.shape, vec![na.shape[0]], "mul_rows weight shape");
        let per = na.value.len() / na.shape[0];
        let value = na
            .value
            .chunks(per)
            .zip(&nw.value)
            .flat_map(|(row, &s)| row.iter().map(move |&x| x * s))
            .collect();
        let shape = na.shape.clone();
        let needs = na.needs_grad || nw.needs_grad;
        self.push(shape, value, Op::MulRows(a, w), needs)
    }

    /// Multiplies every row elementwise by the same constant vector.
    pub fn mul_broadcast(&mut self, a: Var, weights: &[f64]) -> Var {
        let n = self.node(a);
        let per = n.value.len() / n.shape[0];
        assert_eq!(per, weights.len(), "mul_broadcast weight length");
        let value = n
            .value
            .chunks(per)
            .flat_map(|row| row.iter().zip(weights).map(|(x, w)| x * w))
            .collect();
        let shape = n.shape.clone();
        let needs = n.needs_grad;
        self.push(shape, value, Op::MulBroadcast(a, weights.to_vec()), needs)
    }

    /// Sums all but the leading axis: `[B, ..] -> [B]`, left to right.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let b = n.shape[0];
        let per = n.value.len() / b;
        let value = n.value.chunks(per).map(|r| r.iter().sum()).collect();
        let needs = n.needs_grad;
        self.push(vec![b], value, Op::SumRows(a), needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let v = n.value.iter().sum();
        let needs = n.needs_grad;
        self.push(vec![1], vec![v], Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let v = n.value.iter().sum::<f64>() / n.value.len() as f64;
        let needs = n.needs_grad;
        self.push(vec![1], vec![v], Op::Mean(a), needs)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let n = self.node(a);
        assert_eq!(shape.iter().product::<usize>(), n.value.len(), "reshape size");
        let value = n.value.clone();
        let needs = n.needs_grad;
        self.push(shape, value, Op::Reshape(a), needs)
    }

    /// Circular 2-D convolution (cross-correlation) with odd square kernels.
    /// `input [B, Cin, H, W]`, `weight [Cout, Cin, k, k]`, `bias [Cout]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let (ni, nw, nb) = (self.node(input), self.node(weight), self.node(bias));
        let &[b, c_in, h, w] = ni.shape.as_slice() else {
            panic!("conv2d input must be rank 4, got {:?}", ni.shape)
        };
        let &[c_out, wc_in, k, k2] = nw.shape.as_slice() else {
            panic!("conv2d weight must be rank 4, got {:?}", nw.shape)
        };
        assert!(wc_in == c_in && k == k2 && k % 2 == 1, "conv2d weight shape {:?}", nw.shape);
        assert_eq!(nb.shape, vec![c_out], "conv2d bias shape");
        let hw = h * w;
        let ck = c_in * k * k;
        let mut out = vec![0.0; b * c_out * hw];
        let mut col = vec![0.0; ck * hw];
        for bi in 0..b {
            im2col(&ni.value[bi * c_in * hw..(bi + 1) * c_in * hw], c_in, h, w, k, &mut col);
            let dst = &mut out[bi * c_out * hw..(bi + 1) * c_out * hw];
            for (co, plane) in dst.chunks_mut(hw).enumerate() {
                plane.fill(nb.value[co]);
            }
            general_mat_mul(
                1.0,
                &view2(&nw.value, c_out, ck),
                &view2(&col, ck, hw),
                1.0,
                &mut view2_mut(dst, c_out, hw),
            );
        }
        let needs = ni.needs_grad || nw.needs_grad || nb.needs_grad;
        self.push(vec![b, c_out, h, w], out, Op::Conv2d { input, weight, bias }, needs)
    }

    /// `input [B, E] x weight[C, E]^T + bias[C] -> [B, C]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let (ni, nw, nb) = (self.node(input), self.node(weight), self.node(bias));
        let &[b, e] = ni.shape.as_slice() else { panic!("linear input must be rank 2") };
        let &[c, we] = nw.shape.as_slice() else { panic!("linear weight must be rank 2") };
        assert_eq!(we, e, "linear weight width");
        assert_eq!(nb.shape, vec![c], "linear bias shape");
        let mut out = vec![0.0; b * c];
        for bi in 0..b {
            let x = &ni.value[bi * e..(bi + 1) * e];
            for ci in 0..c {
                let row = &nw.value[ci * e..(ci + 1) * e];
                out[bi * c + ci] = nb.value[ci] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let needs = ni.needs_grad || nw.needs_grad || nb.needs_grad;
        self.push(vec![b, c], out, Op::Linear { input, weight, bias }, needs)
    }

    /// `x[b, c, ..] + bias[b, c]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Var {
        let (nx, nb) = (self.node(x), self.node(bias));
        assert_eq!(nb.shape, nx.shape[..2].to_vec(), "channel bias shape");
        let plane: usize = nx.shape[2..].iter().product();
        let value = nx
            .value
            .chunks(plane)
            .zip(&nb.value)
            .flat_map(|(p, &s)| p.iter().map(move |&v| v + s))
            .collect();
        let shape = nx.shape.clone();
        let needs = nx.needs_grad || nb.needs_grad;
        self.push(shape, value, Op::AddChannelBias { x, bias }, needs)
    }

    /// Unnormalized DFT over all but the leading axis. The result has shape
    /// `[2, ..input]`: real parts followed by imaginary parts.
    pub fn dft(&mut self, input: Var) -> Var {
        let n = self.node(input);
        let b = n.shape[0];
        let dims = n.shape[1..].to_vec();
        let per = n.value.len() / b;
        let mut value = vec![0.0; 2 * n.value.len()];
        let (re, im) = value.split_at_mut(n.value.len());
        for (bi, x) in n.value.chunks(per).enumerate() {
            for (j, c) in dft_real(x, &dims).into_iter().enumerate() {
                re[bi * per + j] = c.re;
                im[bi * per + j] = c.im;
            }
        }
        let mut shape = vec![2];
        shape.extend_from_slice(&n.shape);
        let needs = n.needs_grad;
        self.push(shape, value, Op::Dft { input }, needs)
    }

    fn complex_unary(&mut self, z: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let n = self.node(z);
        assert_eq!(n.shape[0], 2, "complex ops take packed [2, ..] nodes");
        let half = n.value.len() / 2;
        let (re, im) = n.value.split_at(half);
        let value = re.iter().zip(im).map(|(&r, &i)| f(r, i)).collect();
        let shape = n.shape[1..].to_vec();
        let needs = n.needs_grad;
        self.push(shape, value, op, needs)
    }

    /// Modulus of a packed complex node. Subgradient 0 at the origin.
    pub fn complex_abs(&mut self, z: Var) -> Var {
        self.complex_unary(z, Op::ComplexAbs(z), |r, i| Complex64::new(r, i).norm())
    }

    /// Argument in `(-pi, pi]` of a packed complex node; 0 (with zero
    /// gradient) at the origin.
    pub fn complex_arg(&mut self, z: Var) -> Var {
        self.complex_unary(z, Op::ComplexArg(z), |r, i| {
            if r == 0.0 && i == 0.0 {
                0.0
            } else {
                canonical_angle(i.atan2(r))
            }
        })
    }

    /// Per-row DWT; the result is `[B, n]` in the pyramid's flattening order.
    pub fn dwt(&mut self, input: Var, bank: &FilterBank, levels: usize) -> Result<Var> {
        let n = self.node(input);
        let b = n.shape[0];
        let dims = n.shape[1..].to_vec();
        let per = n.value.len() / b;
        let mut value = Vec::with_capacity(n.value.len());
        for x in n.value.chunks(per) {
            value.extend(dwt(x, &dims, bank, levels)?.flatten());
        }
        let needs = n.needs_grad;
        Ok(self.push(
            vec![b, per],
            value,
            Op::Dwt {
                input,
                bank: bank.clone(),
                levels,
            },
            needs,
        ))
    }

    /// Reverse pass from a one-element node. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss);
        if root.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        if !root.needs_grad {
            return Err(Error::Usage(
                "backward called on a tensor detached from every trainable leaf".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |v: Var, delta: Vec<f64>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => add_into(acc, &delta),
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Input => {
                    out.inputs.insert(idx, g);
                }
                Op::Param(p) => match out.params.get_mut(p) {
                    Some(acc) => add_into(acc, &g),
                    None => {
                        out.params.insert(*p, g);
                    }
                },
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.iter().map(|v| -v).collect());
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.needs(*a) {
                        send(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                    }
                    if self.needs(*b) {
                        send(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                    }
                }
                Op::Scale(a, c) => send(*a, g.iter().map(|v| v * c).collect()),
                Op::Offset(a) | Op::WrapAngle(a) | Op::Reshape(a) => send(*a, g),
                Op::ScaleRows(a, c) => {
                    let per = g.len() / c.len();
                    let d = g
                        .chunks(per)
                        .zip(c)
                        .flat_map(|(r, &s)| r.iter().map(move |v| v * s))
                        .collect();
                    send(*a, d);
                }
                Op::MulRows(a, w) => {
                    let (va, vw) = (&self.nodes[a.0].value, &self.nodes[w.0].value);
                    let per = g.len() / vw.len();
                    if self.needs(*a) {
                        let d = g
                            .chunks(per)
                            .zip(vw)
                            .flat_map(|(r, &s)| r.iter().map(move |v| v * s))
                            .collect();
                        send(*a, d);
                    }
                    if self.needs(*w) {
                        let d = g
                            .chunks(per)
                            .zip(va.chunks(per))
                            .map(|(gr, xr)| gr.iter().zip(xr).map(|(g, x)| g * x).sum())
                            .collect();
                        send(*w, d);
                    }
                }
                Op::MulBroadcast(a, wts) => {
                    let d = g
                        .chunks(wts.len())
                        .flat_map(|r| r.iter().zip(wts).map(|(g, w)| g * w))
                        .collect();
                    send(*a, d);
                }
                Op::Silu(a) => {
                    let x = &self.nodes[a.0].value;
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * (s + x * s * (1.0 - s))
                        })
                        .collect();
                    send(*a, d);
                }
                Op::Abs(a) => {
                    let x = &self.nodes[a.0].value;
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else if x < 0.0 { -g } else { 0.0 })
                        .collect();
                    send(*a, d);
                }
                Op::Square(a) => {
                    let x = &self.nodes[a.0].value;
                    send(*a, g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect());
                }
                Op::SumRows(a) => {
                    let per = self.nodes[a.0].value.len() / g.len();
                    send(*a, g.iter().flat_map(|&v| std::iter::repeat_n(v, per)).collect());
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    send(*a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.len();
                    send(*a, vec![g[0] / n as f64; n]);
                }
                Op::Conv2d { input, weight, bias } => {
                    let (ni, nw) = (&self.nodes[input.0], &self.nodes[weight.0]);
                    let &[b, c_in, h, w] = ni.shape.as_slice() else { unreachable!() };
                    let (c_out, k) = (nw.shape[0], nw.shape[2]);
                    let hw = h * w;
                    let ck = c_in * k * k;
                    let mut col = vec![0.0; ck * hw];
                    let mut dcol = vec![0.0; ck * hw];
                    let mut dw = vec![0.0; nw.value.len()];
                    let mut dx = if ni.needs_grad { vec![0.0; ni.value.len()] } else { Vec::new() };
                    let mut db = vec![0.0; c_out];
                    for bi in 0..b {
                        let gout = &g[bi * c_out * hw..(bi + 1) * c_out * hw];
                        for (co, plane) in gout.chunks(hw).enumerate() {
                            db[co] += plane.iter().sum::<f64>();
                        }
                        if nw.needs_grad {
                            im2col(&ni.value[bi * c_in * hw..(bi + 1) * c_in * hw], c_in, h, w, k, &mut col);
                            general_mat_mul(
                                1.0,
                                &view2(gout, c_out, hw),
                                &view2(&col, ck, hw).t(),
                                1.0,
                                &mut view2_mut(&mut dw, c_out, ck),
                            );
                        }
                        if ni.needs_grad {
                            general_mat_mul(
                                1.0,
                                &view2(&nw.value, c_out, ck).t(),
                                &view2(gout, c_out, hw),
                                0.0,
                                &mut view2_mut(&mut dcol, ck, hw),
                            );
                            col2im(&dcol, c_in, h, w, k, &mut dx[bi * c_in * hw..(bi + 1) * c_in * hw]);
                        }
                    }
                    if ni.needs_grad {
                        send(*input, dx);
                    }
                    send(*weight, dw);
                    send(*bias, db);
                }
                Op::Linear { input, weight, bias } => {
                    let (ni, nw) = (&self.nodes[input.0], &self.nodes[weight.0]);
                    let (b, e) = (ni.shape[0], ni.shape[1]);
                    let c = nw.shape[0];
                    let mut dx = vec![0.0; b * e];
                    let mut dw = vec![0.0; c * e];
                    let mut db = vec![0.0; c];
                    for bi in 0..b {
                        let x = &ni.value[bi * e..(bi + 1) * e];
                        for ci in 0..c {
                            let gv = g[bi * c + ci];
                            db[ci] += gv;
                            for j in 0..e {
                                dw[ci * e + j] += gv * x[j];
                                dx[bi * e + j] += gv * nw.value[ci * e + j];
                            }
                        }
                    }
                    send(*input, dx);
                    send(*weight, dw);
                    send(*bias, db);
                }
                Op::AddChannelBias { x, bias } => {
                    let plane: usize = self.nodes[x.0].shape[2..].iter().product();
                    send(*bias, g.chunks(plane).map(|p| p.iter().sum()).collect());
                    send(*x, g);
                }
                Op::Dft { input } => {
                    let ni = &self.nodes[input.0];
                    let dims = &ni.shape[1..];
                    let n = ni.value.len();
                    let per = n / ni.shape[0];
                    let (gre, gim) = g.split_at(n);
                    let mut dx = Vec::with_capacity(n);
                    for (r, i) in gre.chunks(per).zip(gim.chunks(per)) {
                        let gz: Vec<Complex64> = r.iter().zip(i).map(|(&a, &b)| Complex64::new(a, b)).collect();
                        dx.extend(inverse_unnormalized_real(&gz, dims));
                    }
                    send(*input, dx);
                }
                Op::ComplexAbs(z) | Op::ComplexArg(z) => {
                    let zv = &self.nodes[z.0].value;
                    let half = zv.len() / 2;
                    let (re, im) = zv.split_at(half);
                    let mut d = vec![0.0; zv.len()];
                    let is_abs = matches!(node.op, Op::ComplexAbs(_));
                    for j in 0..half {
                        let a2 = re[j] * re[j] + im[j] * im[j];
                        if a2 == 0.0 {
                            continue;
                        }
                        if is_abs {
                            let a = a2.sqrt();
                            d[j] = g[j] * re[j] / a;
                            d[half + j] = g[j] * im[j] / a;
                        } else {
                            d[j] = -g[j] * im[j] / a2;
                            d[half + j] = g[j] * re[j] / a2;
                        }
                    }
                    send(*z, d);
                }
                Op::Dwt { input, bank, levels } => {
                    let ni = &self.nodes[input.0];
                    let dims = &ni.shape[1..];
                    let per = ni.value.len() / ni.shape[0];
                    let mut dx = Vec::with_capacity(ni.value.len());
                    for row in g.chunks(per) {
                        dx.extend(dwt_adjoint(row, dims, bank, *levels)?);
                    }
                    send(*input, dx);
                }
            }
        }
        Ok(out)
    }
}
