//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every operation appends a node holding its output value. `backward` walks
//! the record in exact reverse order, so a node's adjoint is complete before
//! it is propagated, and adjoints reaching the same node from several
//! consumers are summed.

use super::{Gradients, NumericsError, ParamId, ParameterSet, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    },
    Affine {
        x: Var,
        weight: Var,
        bias: Option<Var>,
    },
    LinearRows {
        x: Var,
        weight: Var,
        bias: Option<Var>,
    },
    AddRow {
        m: Var,
        v: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Slice {
        x: Var,
        start: usize,
    },
    Pick {
        x: Var,
        index: usize,
    },
    Row {
        m: Var,
        index: usize,
    },
    WeightedRows {
        weights: Var,
        m: Var,
    },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    SumScalars(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    // Empty for parameter leaves; their value lives in the parameter set.
    value: Vec<f64>,
    requires_grad: bool,
}

/// Record of executed operations, borrowing the parameters it reads.
pub struct Tape<'p> {
    params: &'p ParameterSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, expected: &[usize], got: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn add_into(dst: &mut Vec<f64>, len: usize) -> &mut Vec<f64> {
    if dst.is_empty() {
        dst.resize(len, 0.0);
    }
    dst
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParameterSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParameterSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node, NumericsError> {
        self.nodes.get(v.0).ok_or(NumericsError::UnknownVar(v.0))
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.get(id).data(),
            _ => &node.value,
        }
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("tape nodes hold consistent shapes")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<f64, NumericsError> {
        let value = self.value(v);
        if value.len() != 1 {
            return Err(NumericsError::NotScalar(self.shape(v).to_vec()));
        }
        Ok(value[0])
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, inputs: &[Var]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, vars: &[Var]) -> Result<(), NumericsError> {
        for &v in vars {
            self.node(v)?;
        }
        Ok(())
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, tensor: &Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Input,
            shape: tensor.shape().to_vec(),
            value: tensor.data().to_vec(),
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input_vec(&mut self, data: Vec<f64>) -> Var {
        let shape = vec![data.len()];
        self.nodes.push(Node {
            op: Op::Input,
            shape,
            value: data,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies the current value of `v` into a new constant leaf, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let shape = self.shape(v).to_vec();
        let value = self.value(v).to_vec();
        self.nodes.push(Node {
            op: Op::Input,
            shape,
            value,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a trainable parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            shape: self.params.get(id).shape().to_vec(),
            value: Vec::new(),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn param_by_name(&mut self, name: &str) -> Result<Var, NumericsError> {
        let id = self.params.id(name)?;
        Ok(self.param(id))
    }

    /// Valid cross-correlation of `input [C_in,H,W]` with `kernel [C_out,C_in,k,k]` plus per-channel bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    ) -> Result<Var, NumericsError> {
        self.check(&[input, kernel, bias])?;
        let ishape = self.shape(input).to_vec();
        let kshape = self.shape(kernel).to_vec();
        if ishape.len() != 3 || kshape.len() != 4 || kshape[2] != kshape[3] {
            return Err(mismatch("conv2d", &[0, 0, 0], &ishape));
        }
        let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
        let (c_out, k) = (kshape[0], kshape[2]);
        if kshape[1] != c_in {
            return Err(mismatch("conv2d", &[c_out, c_in, k, k], &kshape));
        }
        if self.shape(bias) != [c_out] {
            return Err(mismatch("conv2d", &[c_out], self.shape(bias)));
        }
        let oh = conv_output_size(h, k, stride)?;
        let ow = conv_output_size(w, k, stride)?;

        let x = self.value(input);
        let kv = self.value(kernel);
        let b = self.value(bias);
        let mut out = vec![0.0; c_out * oh * ow];
        for co in 0..c_out {
            let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = b[co]);
            for ci in 0..c_in {
                let kbase = (co * c_in + ci) * k * k;
                let xbase = ci * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            let row = xbase + (oy * stride + ky) * w + ox * stride;
                            let krow = kbase + ky * k;
                            for kx in 0..k {
                                acc += kv[krow + kx] * x[row + kx];
                            }
                        }
                        plane[oy * ow + ox] += acc;
                    }
                }
            }
        }
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
            vec![c_out, oh, ow],
            out,
            &[input, kernel, bias],
        ))
    }

    /// `weight · x + bias` for `x [n]`, `weight [out, n]`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var, NumericsError> {
        self.check(&[x, weight])?;
        let wshape = self.shape(weight).to_vec();
        let n = self.value(x).len();
        if wshape.len() != 2 || wshape[1] != n || self.shape(x).len() != 1 {
            return Err(mismatch(
                "affine",
                &[wshape.first().copied().unwrap_or(0), n],
                &wshape,
            ));
        }
        let out_dim = wshape[0];
        if let Some(b) = bias {
            self.check(&[b])?;
            if self.shape(b) != [out_dim] {
                return Err(mismatch("affine", &[out_dim], self.shape(b)));
            }
        }
        let xv = self.value(x);
        let wv = self.value(weight);
        let mut out: Vec<f64> = wv
            .chunks_exact(n)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        if let Some(b) = bias {
            for (o, bv) in out.iter_mut().zip(self.value(b)) {
                *o += bv;
            }
        }
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push(Op::Affine { x, weight, bias }, vec![out_dim], out, &inputs))
    }

    /// Row-wise affine map: `x [R, n]`, `weight [out, n]` gives `[R, out]`.
    pub fn linear_rows(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
    ) -> Result<Var, NumericsError> {
        self.check(&[x, weight])?;
        let xshape = self.shape(x).to_vec();
        let wshape = self.shape(weight).to_vec();
        if xshape.len() != 2 || wshape.len() != 2 || xshape[1] != wshape[1] {
            return Err(mismatch("linear_rows", &xshape, &wshape));
        }
        let (rows, n, out_dim) = (xshape[0], xshape[1], wshape[0]);
        if let Some(b) = bias {
            self.check(&[b])?;
            if self.shape(b) != [out_dim] {
                return Err(mismatch("linear_rows", &[out_dim], self.shape(b)));
            }
        }
        let xv = self.value(x);
        let wv = self.value(weight);
        let bv = bias.map(|b| self.value(b));
        let mut out = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xr = &xv[r * n..(r + 1) * n];
            for o in 0..out_dim {
                let wr = &wv[o * n..(o + 1) * n];
                let mut acc: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
                if let Some(bv) = bv {
                    acc += bv[o];
                }
                out[r * out_dim + o] = acc;
            }
        }
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push(
            Op::LinearRows { x, weight, bias },
            vec![rows, out_dim],
            out,
            &inputs,
        ))
    }

    /// Adds vector `v [C]` to every row of `m [R, C]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var, NumericsError> {
        self.check(&[m, v])?;
        let mshape = self.shape(m).to_vec();
        if mshape.len() != 2 || self.shape(v) != [mshape[1]] {
            return Err(mismatch("add_row", &mshape, self.shape(v)));
        }
        let cols = mshape[1];
        let vv = self.value(v);
        let out: Vec<f64> = self
            .value(m)
            .chunks_exact(cols)
            .flat_map(|row| row.iter().zip(vv).map(|(a, b)| a + b))
            .collect();
        Ok(self.push(Op::AddRow { m, v }, mshape, out, &[m, v]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        self.check(&[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(name, self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(op, shape, out, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let out: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(op, shape, out, &[x]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, NumericsError> {
        self.unary(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Max-subtracted softmax over a vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let xv = self.value(x);
        if xv.iter().any(|v| v.is_nan()) {
            return Err(NumericsError::NonFinite("softmax input".into()));
        }
        let out = softmax_values(xv);
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Softmax(x), shape, out, &[x]))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let xv = self.value(x);
        if xv.iter().any(|v| v.is_nan()) {
            return Err(NumericsError::NonFinite("log_softmax input".into()));
        }
        let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + xv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out: Vec<f64> = xv.iter().map(|v| v - lse).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::LogSoftmax(x), shape, out, &[x]))
    }

    /// Contiguous sub-vector `x[start..start + len]`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let xv = self.value(x);
        if self.shape(x).len() != 1 || len == 0 || start + len > xv.len() {
            return Err(NumericsError::IndexOutOfRange {
                index: start + len,
                len: xv.len(),
            });
        }
        let out = xv[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x, start }, vec![len], out, &[x]))
    }

    /// Single element of a vector as a `[1]` node.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let xv = self.value(x);
        if index >= xv.len() {
            return Err(NumericsError::IndexOutOfRange {
                index,
                len: xv.len(),
            });
        }
        let out = vec![xv[index]];
        Ok(self.push(Op::Pick { x, index }, vec![1], out, &[x]))
    }

    /// Row `index` of a matrix `[R, C]` as a `[C]` vector.
    pub fn row(&mut self, m: Var, index: usize) -> Result<Var, NumericsError> {
        self.check(&[m])?;
        let mshape = self.shape(m).to_vec();
        if mshape.len() != 2 {
            return Err(mismatch("row", &[0, 0], &mshape));
        }
        if index >= mshape[0] {
            return Err(NumericsError::IndexOutOfRange {
                index,
                len: mshape[0],
            });
        }
        let cols = mshape[1];
        let out = self.value(m)[index * cols..(index + 1) * cols].to_vec();
        Ok(self.push(Op::Row { m, index }, vec![cols], out, &[m]))
    }

    /// `Σ_r weights[r] · m[r, :]` for `weights [R]`, `m [R, C]`.
    pub fn weighted_rows(&mut self, weights: Var, m: Var) -> Result<Var, NumericsError> {
        self.check(&[weights, m])?;
        let mshape = self.shape(m).to_vec();
        if mshape.len() != 2 || self.shape(weights) != [mshape[0]] {
            return Err(mismatch("weighted_rows", &mshape, self.shape(weights)));
        }
        let cols = mshape[1];
        let wv = self.value(weights);
        let mut out = vec![0.0; cols];
        for (row, &w) in self.value(m).chunks_exact(cols).zip(wv) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        Ok(self.push(
            Op::WeightedRows { weights, m },
            vec![cols],
            out,
            &[weights, m],
        ))
    }

    /// Transpose of a matrix, or of the `[C, H·W]` view of a rank-3 map.
    pub fn transpose(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let shape = self.shape(x).to_vec();
        let (r, c) = match shape.as_slice() {
            [r, c] => (*r, *c),
            [ch, h, w] => (*ch, h * w),
            _ => return Err(mismatch("transpose", &[0, 0], &shape)),
        };
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        Ok(self.push(Op::Transpose(x), vec![c, r], out, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(mismatch("reshape", shape, self.shape(x)));
        }
        let out = self.value(x).to_vec();
        Ok(self.push(Op::Reshape(x), shape.to_vec(), out, &[x]))
    }

    /// Sum of all elements as a `[1]` node.
    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.check(&[x])?;
        let s = self.value(x).iter().sum();
        Ok(self.push(Op::Sum(x), vec![1], vec![s], &[x]))
    }

    /// Sum of single-element nodes, added in the given order.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var, NumericsError> {
        self.check(terms)?;
        if terms.is_empty() {
            return Err(NumericsError::EmptyInput);
        }
        let mut s = 0.0;
        for &t in terms {
            s += self.scalar(t)?;
        }
        Ok(self.push(Op::SumScalars(terms.to_vec()), vec![1], vec![s], terms))
    }

    /// Accumulates `∂loss/∂θ` into `grads` for every parameter reachable from `loss`.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<(), NumericsError> {
        let node = self.node(loss)?;
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NotScalar(node.shape.clone()));
        }
        if grads.len() != self.params.len() {
            return Err(mismatch("backward", &[self.params.len()], &[grads.len()]));
        }
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut adj[i]);
            if g.is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut adj, grads);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Vec<f64>], grads: &mut Gradients) {
        match &node.op {
            Op::Input => {}
            Op::Param(id) => {
                for (a, b) in grads.get_mut(*id).data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            } => {
                let ishape = self.shape(*input);
                let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
                let kshape = self.shape(*kernel);
                let (c_out, k) = (kshape[0], kshape[2]);
                let (oh, ow) = (node.shape[1], node.shape[2]);
                let s = *stride;
                let x = self.value(*input);
                let kv = self.value(*kernel);
                if self.wants(*bias) {
                    let db = add_into(&mut adj[bias.0], c_out);
                    for co in 0..c_out {
                        db[co] += g[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
                    }
                }
                if self.wants(*kernel) {
                    let dk = add_into(&mut adj[kernel.0], kv.len());
                    for co in 0..c_out {
                        let gp = &g[co * oh * ow..(co + 1) * oh * ow];
                        for ci in 0..c_in {
                            let kbase = (co * c_in + ci) * k * k;
                            let xbase = ci * h * w;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let mut acc = 0.0;
                                    for oy in 0..oh {
                                        let row = xbase + (oy * s + ky) * w + kx;
                                        for ox in 0..ow {
                                            acc += gp[oy * ow + ox] * x[row + ox * s];
                                        }
                                    }
                                    dk[kbase + ky * k + kx] += acc;
                                }
                            }
                        }
                    }
                }
                if self.wants(*input) {
                    let dx = add_into(&mut adj[input.0], x.len());
                    for co in 0..c_out {
                        let gp = &g[co * oh * ow..(co + 1) * oh * ow];
                        for ci in 0..c_in {
                            let kbase = (co * c_in + ci) * k * k;
                            let xbase = ci * h * w;
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let gv = gp[oy * ow + ox];
                                    for ky in 0..k {
                                        let row = xbase + (oy * s + ky) * w + ox * s;
                                        let krow = kbase + ky * k;
                                        for kx in 0..k {
                                            dx[row + kx] += gv * kv[krow + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Affine { x, weight, bias } => {
                let xv = self.value(*x);
                let n = xv.len();
                if let Some(b) = bias {
                    if self.wants(*b) {
                        let db = add_into(&mut adj[b.0], g.len());
                        db.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    }
                }
                if self.wants(*weight) {
                    let dw = add_into(&mut adj[weight.0], g.len() * n);
                    for (o, &go) in g.iter().enumerate() {
                        for (d, xj) in dw[o * n..(o + 1) * n].iter_mut().zip(xv) {
                            *d += go * xj;
                        }
                    }
                }
                if self.wants(*x) {
                    let wv = self.value(*weight);
                    let dx = add_into(&mut adj[x.0], n);
                    for (o, &go) in g.iter().enumerate() {
                        for (d, wj) in dx.iter_mut().zip(&wv[o * n..(o + 1) * n]) {
                            *d += go * wj;
                        }
                    }
                }
            }
            Op::LinearRows { x, weight, bias } => {
                let xshape = self.shape(*x);
                let (rows, n) = (xshape[0], xshape[1]);
                let out_dim = node.shape[1];
                let xv = self.value(*x);
                if let Some(b) = bias {
                    if self.wants(*b) {
                        let db = add_into(&mut adj[b.0], out_dim);
                        for grow in g.chunks_exact(out_dim) {
                            db.iter_mut().zip(grow).for_each(|(a, b)| *a += b);
                        }
                    }
                }
                if self.wants(*weight) {
                    let dw = add_into(&mut adj[weight.0], out_dim * n);
                    for r in 0..rows {
                        let xr = &xv[r * n..(r + 1) * n];
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            for (d, xj) in dw[o * n..(o + 1) * n].iter_mut().zip(xr) {
                                *d += go * xj;
                            }
                        }
                    }
                }
                if self.wants(*x) {
                    let wv = self.value(*weight);
                    let dx = add_into(&mut adj[x.0], rows * n);
                    for r in 0..rows {
                        let dxr = &mut dx[r * n..(r + 1) * n];
                        for o in 0..out_dim {
                            let go = g[r * out_dim + o];
                            for (d, wj) in dxr.iter_mut().zip(&wv[o * n..(o + 1) * n]) {
                                *d += go * wj;
                            }
                        }
                    }
                }
            }
            Op::AddRow { m, v } => {
                let cols = node.shape[1];
                if self.wants(*m) {
                    let dm = add_into(&mut adj[m.0], g.len());
                    dm.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                if self.wants(*v) {
                    let dv = add_into(&mut adj[v.0], cols);
                    for grow in g.chunks_exact(cols) {
                        dv.iter_mut().zip(grow).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.wants(*a) {
                    let da = add_into(&mut adj[a.0], g.len());
                    da.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
                if self.wants(*b) {
                    let db = add_into(&mut adj[b.0], g.len());
                    db.iter_mut().zip(g).for_each(|(d, gv)| *d += sign * gv);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let da = add_into(&mut adj[a.0], g.len());
                    for ((d, gv), y) in da.iter_mut().zip(g).zip(bv) {
                        *d += gv * y;
                    }
                }
                if self.wants(*b) {
                    let db = add_into(&mut adj[b.0], g.len());
                    for ((d, gv), x) in db.iter_mut().zip(g).zip(av) {
                        *d += gv * x;
                    }
                }
            }
            Op::Scale(x, factor) => {
                if self.wants(*x) {
                    let dx = add_into(&mut adj[x.0], g.len());
                    dx.iter_mut().zip(g).for_each(|(d, gv)| *d += factor * gv);
                }
            }
            Op::Tanh(x) => {
                if self.wants(*x) {
                    let dx = add_into(&mut adj[x.0], g.len());
                    for ((d, gv), y) in dx.iter_mut().zip(g).zip(&node.value) {
                        *d += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(*x) {
                    let dx = add_into(&mut adj[x.0], g.len());
                    for ((d, gv), y) in dx.iter_mut().zip(g).zip(&node.value) {
                        *d += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let dx = add_into(&mut adj[x.0], g.len());
                    for ((d, gv), xi) in dx.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Square(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let dx = add_into(&mut adj[x.0], g.len());
                    for ((d, gv), xi) in dx.iter_mut().zip(g).zip(xv) {
                        *d += 2.0 * xi * gv;
                    }
                }
            }
            Op::Softmax(x) => {
                if self.wants(*x) {
                    let s = &node.value;
                    let dot: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
                    let dx = add_into(&mut adj[x.0], g.len());
                    for ((d, gv), si) in dx.iter_mut().zip(g).zip(s) {
                        *d += si * (gv - dot);
                    }
                }
            }
            Op::LogSoftmax(x) => {
                if self.wants(*x) {
                    let total: f64 = g.iter().sum();
                    let dx = add_into(&mut adj[x.0], g.len());
                    for ((d, gv), y) in dx.iter_mut().zip(g).zip(&node.value) {
                        *d += gv - y.exp() * total;
                    }
                }
            }
            Op::Slice { x, start } => {
                if self.wants(*x) {
                    let n = self.value(*x).len();
                    let dx = add_into(&mut adj[x.0], n);
                    for (d, gv) in dx[*start..*start + g.len()].iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::Pick { x, index } => {
                if self.wants(*x) {
                    let n = self.value(*x).len();
                    let dx = add_into(&mut adj[x.0], n);
                    dx[*index] += g[0];
                }
            }
            Op::Row { m, index } => {
                if self.wants(*m) {
                    let n = self.value(*m).len();
                    let cols = g.len();
                    let dm = add_into(&mut adj[m.0], n);
                    for (d, gv) in dm[index * cols..(index + 1) * cols].iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::WeightedRows { weights, m } => {
                let cols = g.len();
                let mv = self.value(*m);
                let wv = self.value(*weights);
                if self.wants(*weights) {
                    let dw = add_into(&mut adj[weights.0], wv.len());
                    for (d, row) in dw.iter_mut().zip(mv.chunks_exact(cols)) {
                        *d += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                if self.wants(*m) {
                    let dm = add_into(&mut adj[m.0], mv.len());
                    for (drow, w) in dm.chunks_exact_mut(cols).zip(wv) {
                        for (d, gv) in drow.iter_mut().zip(g) {
                            *d += w * gv;
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                if self.wants(*x) {
                    // node is [c, r]; input viewed as [r, c]
                    let (c, r) = (node.shape[0], node.shape[1]);
                    let dx = add_into(&mut adj[x.0], g.len());
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    let dx = add_into(&mut adj[x.0], g.len());
                    dx.iter_mut().zip(g).for_each(|(d, gv)| *d += gv);
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let n = self.value(*x).len();
                    let dx = add_into(&mut adj[x.0], n);
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::SumScalars(terms) => {
                for t in terms {
                    if self.wants(*t) {
                        let dt = add_into(&mut adj[t.0], 1);
                        dt[0] += g[0];
                    }
                }
            }
        }
    }
}

/// Output extent of a valid convolution; errors unless `(size - kernel)` divides evenly by `stride`.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize) -> Result<usize, NumericsError> {
    if stride == 0 || kernel == 0 || kernel > size || !(size - kernel).is_multiple_of(stride) {
        return Err(NumericsError::NonIntegralOutput {
            size,
            kernel,
            stride,
        });
    }
    Ok((size - kernel) / stride + 1)
}
