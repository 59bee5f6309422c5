//! Reverse-mode differentiation over a linear tape of 2-D tensor ops.

use std::collections::HashMap;

use super::tensor::{gemm, matmul, mish, mish_grad, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifies one parameter tensor of one module.
pub type ParamKey = (u64, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Mish,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Mish => mish(x),
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Mish => mish_grad(x),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Adds a `1 x cols` row to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Multiplies every column by a `rows x 1` column.
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Act(Var, Activation),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    /// Elementwise minimum; records which input won each element.
    Min(Vec<Var>, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamKey, Var>,
    frozen: HashMap<ParamKey, Var>,
}

/// Parameter gradients gathered by [`Tape::backward`], summed over every use
/// of a parameter within the tape.
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<ParamKey, Tensor>,
}

impl Gradients {
    pub fn get(&self, key: ParamKey) -> Option<&Tensor> {
        self.map.get(&key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// True when `v` was recorded as a constant or parameter, not computed.
    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A trainable parameter; recording the same key twice returns the first handle.
    pub fn param(&mut self, key: ParamKey, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf, true);
        self.params.insert(key, v);
        v
    }

    /// A parameter used as a constant (no gradient); cached like [`Tape::param`].
    pub fn frozen(&mut self, key: ParamKey, value: &Tensor) -> Var {
        if let Some(&v) = self.frozen.get(&key) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf, false);
        self.frozen.insert(key, v);
        v
    }

    fn check(&self, ok: bool, what: &str, a: Var, b: Var) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: incompatible shapes {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a)[1] == self.shape(b)[0], "matmul", a, b)?;
        let v = matmul(self.value(a), self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        self.check(sr[0] == 1 && sr[1] == sa[1], "add_row", a, row)?;
        let mut v = self.value(a).clone();
        let r = &self.nodes[row.0].value.data;
        for chunk in v.data.chunks_mut(sa[1]) {
            for (x, b) in chunk.iter_mut().zip(r) {
                *x += b;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(v, Op::AddRow(a, row), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        self.check(self.shape(a) == self.shape(b), what, a, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(col));
        self.check(sc[1] == 1 && sc[0] == sa[0], "mul_col", a, col)?;
        let mut v = self.value(a).clone();
        let c = &self.nodes[col.0].value.data;
        for (chunk, s) in v.data.chunks_mut(sa[1].max(1)).zip(c) {
            for x in chunk.iter_mut() {
                *x *= s;
            }
        }
        let rg = self.rg(&[a, col]);
        Ok(self.push(v, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn act(&mut self, a: Var, f: Activation) -> Var {
        let v = self.value(a).map(|x| f.apply(x));
        let rg = self.rg(&[a]);
        self.push(v, Op::Act(a, f), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.act(a, Activation::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(&[a]);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(v, Op::Square(a), rg)
    }

    /// Clamps elementwise; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(&[a]);
        self.push(v, Op::Clamp(a, lo, hi), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let v = {
            let ts: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
            Tensor::concat_cols(&ts)?
        };
        let rg = self.rg(parts);
        Ok(self.push(v, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        if start >= end || end > self.shape(a)[1] {
            return Err(Error::invalid(format!(
                "slice_cols: bad range {start}..{end} for {:?}",
                self.shape(a)
            )));
        }
        let v = self.value(a).slice_cols(start, end);
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Slice(a, start), rg))
    }

    /// Row sums, as a `rows x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data: Vec<f64> = (0..t.rows).map(|r| t.row(r).iter().sum()).collect();
        let v = Tensor {
            rows: t.rows,
            cols: 1,
            data,
        };
        let rg = self.rg(&[a]);
        self.push(v, Op::SumCols(a), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data.iter().sum());
        let rg = self.rg(&[a]);
        self.push(v, Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.data.iter().sum::<f64>() / t.len() as f64);
        let rg = self.rg(&[a]);
        self.push(v, Op::MeanAll(a), rg)
    }

    /// Elementwise minimum over same-shaped inputs; ties go to the first.
    pub fn min(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars.first().ok_or_else(|| Error::invalid("min of no tensors"))?;
        for &v in &vars[1..] {
            self.same_shape(first, v, "min")?;
        }
        let mut out = self.value(first).clone();
        let mut arg = vec![0usize; out.len()];
        for (k, &v) in vars.iter().enumerate().skip(1) {
            for (i, x) in self.value(v).data.iter().enumerate() {
                if *x < out.data[i] {
                    out.data[i] = *x;
                    arg[i] = k;
                }
            }
        }
        let rg = self.rg(vars);
        Ok(self.push(out, Op::Min(vars.to_vec(), arg), rg))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        let mut map = HashMap::new();
        for (key, v) in &self.params {
            if v.0 <= loss.0 {
                let g = grads[v.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.rows, self.nodes[v.0].value.cols));
                map.insert(*key, g);
            } else {
                let t = &self.nodes[v.0].value;
                map.insert(*key, Tensor::zeros(t.rows, t.cols));
            }
        }
        Ok(Gradients { map })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        let acc = |v: Var, t: Tensor, grads: &mut [Option<Tensor>]| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if wants(a) {
                    let mut ga = Tensor::zeros(va.rows, va.cols);
                    gemm(g, false, vb, true, &mut ga);
                    acc(*a, ga, grads);
                }
                if wants(b) {
                    let mut gb = Tensor::zeros(vb.rows, vb.cols);
                    gemm(va, true, g, false, &mut gb);
                    acc(*b, gb, grads);
                }
            }
            Op::AddRow(a, r) => {
                if wants(r) {
                    let mut gr = Tensor::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (s, x) in gr.data.iter_mut().zip(chunk) {
                            *s += x;
                        }
                    }
                    acc(*r, gr, grads);
                }
                if wants(a) {
                    acc(*a, g.clone(), grads);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    acc(*a, g.clone(), grads);
                }
                if wants(b) {
                    acc(*b, g.clone(), grads);
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    acc(*a, g.clone(), grads);
                }
                if wants(b) {
                    acc(*b, g.map(|x| -x), grads);
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y), grads);
                }
                if wants(b) {
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y), grads);
                }
            }
            Op::MulCol(a, c) => {
                let (va, vc) = (self.value(*a), self.value(*c));
                let cols = va.cols.max(1);
                if wants(a) {
                    let mut ga = g.clone();
                    for (chunk, s) in ga.data.chunks_mut(cols).zip(&vc.data) {
                        for x in chunk.iter_mut() {
                            *x *= s;
                        }
                    }
                    acc(*a, ga, grads);
                }
                if wants(c) {
                    let data = g
                        .data
                        .chunks(cols)
                        .zip(va.data.chunks(cols))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                        .collect();
                    acc(*c, Tensor { rows: vc.rows, cols: 1, data }, grads);
                }
            }
            Op::Scale(a, s) => {
                if wants(a) {
                    acc(*a, g.map(|x| x * s), grads);
                }
            }
            Op::AddScalar(a) => {
                if wants(a) {
                    acc(*a, g.clone(), grads);
                }
            }
            Op::Act(a, f) => {
                let x = self.value(*a);
                let y = &node.value;
                let mut ga = g.clone();
                for ((gi, xi), yi) in ga.data.iter_mut().zip(&x.data).zip(&y.data) {
                    *gi *= f.grad(*xi, *yi);
                }
                acc(*a, ga, grads);
            }
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y), grads),
            Op::Square(a) => acc(*a, g.zip_map(self.value(*a), |x, y| 2.0 * x * y), grads),
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                acc(
                    *a,
                    g.zip_map(x, |gi, xi| if xi < *lo || xi > *hi { 0.0 } else { gi }),
                    grads,
                );
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    if wants(p) {
                        acc(*p, g.slice_cols(start, start + w), grads);
                    }
                    start += w;
                }
            }
            Op::Slice(a, start) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                for r in 0..g.rows {
                    ga.data[r * va.cols + start..r * va.cols + start + g.cols].copy_from_slice(g.row(r));
                }
                acc(*a, ga, grads);
            }
            Op::SumCols(a) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                for (r, chunk) in ga.data.chunks_mut(va.cols.max(1)).enumerate() {
                    chunk.fill(g.data[r]);
                }
                acc(*a, ga, grads);
            }
            Op::SumAll(a) => {
                let va = self.value(*a);
                acc(*a, Tensor::full(va.rows, va.cols, g.item()), grads);
            }
            Op::MeanAll(a) => {
                let va = self.value(*a);
                acc(*a, Tensor::full(va.rows, va.cols, g.item() / va.len() as f64), grads);
            }
            Op::Min(vars, arg) => {
                for (k, v) in vars.iter().enumerate() {
                    if !wants(v) {
                        continue;
                    }
                    let data = g
                        .data
                        .iter()
                        .zip(arg)
                        .map(|(x, &w)| if w == k { *x } else { 0.0 })
                        .collect();
                    acc(*v, Tensor { rows: g.rows, cols: g.cols, data }, grads);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gradient_is_input() {
        let mut t = Tape::new();
        let w = t.param((1, 0), &Tensor::from_rows(&[[0.5], [-2.0], [3.0]]).unwrap());
        let x = t.constant(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        let y = t.matmul(x, w).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get((1, 0)).unwrap().data, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn disconnected_param_gets_zero() {
        let mut t = Tape::new();
        let a = t.param((1, 0), &Tensor::scalar(2.0));
        let b = t.param((1, 1), &Tensor::full(2, 2, 1.0));
        let l = t.square(a);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get((1, 0)).unwrap().data, vec![4.0]);
        assert_eq!(g.get((1, 1)).unwrap().data, vec![0.0; 4]);
        let _ = b;
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let a = t.param((1, 0), &Tensor::full(2, 1, 1.0));
        assert!(t.backward(a).is_err());
    }

    #[test]
    fn reused_param_sums_gradients() {
        let mut t = Tape::new();
        let w = Tensor::scalar(3.0);
        let a = t.param((7, 0), &w);
        let b = t.param((7, 0), &w);
        assert_eq!(a, b);
        let p = t.mul(a, b).unwrap();
        let g = t.backward(p).unwrap();
        assert_eq!(g.get((7, 0)).unwrap().data, vec![6.0]);
    }

    #[test]
    fn min_routes_gradient() {
        let mut t = Tape::new();
        let a = t.param((1, 0), &Tensor::row_vector(&[1.0, 5.0]));
        let b = t.param((1, 1), &Tensor::row_vector(&[2.0, 3.0]));
        let m = t.min(&[a, b]).unwrap();
        assert_eq!(t.value(m).data, vec![1.0, 3.0]);
        let s = t.sum_all(m);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get((1, 0)).unwrap().data, vec![1.0, 0.0]);
        assert_eq!(g.get((1, 1)).unwrap().data, vec![0.0, 1.0]);
    }
}
