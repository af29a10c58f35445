//! Reverse-mode automatic differentiation over a sequential tape.
//!
//! Every primitive call appends one node holding its output value. Node
//! indices are execution order, so inputs always precede their consumers and
//! the backward sweep is a single reverse walk over the node list.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops::{self, conv, dense, elementwise, loss, pool, reduce, ReduceMode, Window};
use crate::tensor::{Element, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate backward-rule corruptions, used to check that the gradient
/// checker catches a wrong derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the sigmoid vector-Jacobian product by 1.5.
    SigmoidGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Constant,
    Parameter,
    Conv3d,
    MaxPool,
    Dense,
    Relu,
    Sigmoid,
    Add,
    Mul,
    BroadcastMul,
    Reduce,
    Reshape,
    BceLoss,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv3d { input: Var, kernel: Var, bias: Var },
    MaxPool { input: Var, window: Window, argmax: Vec<u32> },
    Dense { input: Var, weight: Var, bias: Var },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    BroadcastMul { x: Var, mask: Var },
    Reduce { input: Var, axes: Vec<usize>, mode: ReduceMode, argmax: Option<Vec<u32>> },
    Reshape(Var),
    Bce { predictions: Var, labels: Var },
}

struct Node<E> {
    op: Op,
    value: Tensor<E>,
    requires_grad: bool,
    param: Option<String>,
    scope: String,
}

/// Read-only view of one recorded node.
#[derive(Debug, Clone, Copy)]
pub struct NodeInfo<'a> {
    pub var: Var,
    pub kind: OpKind,
    pub scope: &'a str,
    pub shape: &'a [usize],
    pub param: Option<&'a str>,
    /// Pooling window, for `MaxPool` nodes.
    pub window: Option<Window>,
}

pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
    scope: String,
    fault: Option<Fault>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Gradients<E: Element> {
    grads: BTreeMap<String, Tensor<E>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, name: &str) -> Option<&Tensor<E>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds `other` element-wise. Both must cover the same parameters.
    pub fn accumulate(&mut self, other: &Gradients<E>) {
        for (name, g) in &other.grads {
            match self.grads.get_mut(name) {
                Some(acc) => add_into(acc, g),
                None => {
                    self.grads.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, factor: E) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * factor);
        }
    }
}

fn add_into<E: Element>(acc: &mut Tensor<E>, g: &Tensor<E>) {
    debug_assert_eq!(acc.shape(), g.shape());
    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a = *a + b;
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            scope: String::new(),
            fault: None,
        }
    }

    pub fn with_fault(fault: Fault) -> Self {
        Tape {
            fault: Some(fault),
            ..Self::new()
        }
    }

    /// Labels subsequently recorded nodes with `scope` (e.g. `spatial.block1`).
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<E> {
        &self.nodes[var.0].value
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeInfo<'_>> {
        self.nodes.iter().enumerate().map(|(i, n)| NodeInfo {
            var: Var(i),
            kind: kind_of(n),
            scope: &n.scope,
            shape: n.value.shape(),
            param: n.param.as_deref(),
            window: match &n.op {
                Op::MaxPool { window, .. } => Some(*window),
                _ => None,
            },
        })
    }

    fn push(&mut self, op: Op, value: Tensor<E>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            param: None,
            scope: self.scope.clone(),
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Records a trainable tensor; its gradient is reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor<E>) -> Var {
        let var = self.push(Op::Leaf, value, true);
        self.nodes[var.0].param = Some(name.into());
        var
    }

    pub fn conv3d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let value = ops::conv3d(self.value(input), self.value(kernel), self.value(bias))?;
        let rg = self.grad_of(&[input, kernel, bias]);
        Ok(self.push(Op::Conv3d { input, kernel, bias }, value, rg))
    }

    pub fn maxpool(&mut self, input: Var, window: Window) -> Result<Var> {
        let (value, argmax) = ops::maxpool(self.value(input), window)?;
        let rg = self.grad_of(&[input]);
        Ok(self.push(Op::MaxPool { input, window, argmax }, value, rg))
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let value = ops::dense(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.grad_of(&[input, weight, bias]);
        Ok(self.push(Op::Dense { input, weight, bias }, value, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = ops::relu(self.value(x));
        let rg = self.grad_of(&[x]);
        self.push(Op::Relu(x), value, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = ops::sigmoid(self.value(x));
        let rg = self.grad_of(&[x]);
        self.push(Op::Sigmoid(x), value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::add(self.value(a), self.value(b))?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::mul(self.value(a), self.value(b))?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    /// Scales each leading-axis slice of `x` by the matching entry of `mask`
    /// (shape `[T, 1, ..., 1]`).
    pub fn broadcast_mul(&mut self, x: Var, mask: Var) -> Result<Var> {
        let value = ops::broadcast_mul(self.value(x), self.value(mask))?;
        let rg = self.grad_of(&[x, mask]);
        Ok(self.push(Op::BroadcastMul { x, mask }, value, rg))
    }

    pub fn reduce(&mut self, input: Var, axes: &[usize], mode: ReduceMode, keep_dims: bool) -> Result<Var> {
        let (value, argmax) = ops::reduce(self.value(input), axes, mode, keep_dims)?;
        let rg = self.grad_of(&[input]);
        let op = Op::Reduce {
            input,
            axes: axes.to_vec(),
            mode,
            argmax,
        };
        Ok(self.push(op, value, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::Reshape(x), value, rg))
    }

    pub fn bce_loss(&mut self, predictions: Var, labels: Var) -> Result<Var> {
        let value = ops::bce_loss(self.value(predictions), self.value(labels))?;
        let rg = self.grad_of(&[predictions]);
        Ok(self.push(Op::Bce { predictions, labels }, value, rg))
    }

    /// Back-propagates from the scalar `loss`. Every recorded parameter gets
    /// an entry, zero if no gradient reaches it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<E>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<E>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), E::one()));
        let mut out = BTreeMap::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(g) = grads[i].take() else {
                if let Some(name) = &node.param {
                    out.entry(name.clone()).or_insert_with(|| Tensor::zeros(node.value.shape()));
                }
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let mut send = |var: Var, grad: Tensor<E>| {
                if self.nodes[var.0].requires_grad {
                    match &mut grads[var.0] {
                        Some(acc) => add_into(acc, &grad),
                        slot @ None => *slot = Some(grad),
                    }
                }
            };
            match &node.op {
                Op::Leaf => {
                    if let Some(name) = &node.param {
                        match out.get_mut(name) {
                            Some(acc) => add_into(acc, &g),
                            None => {
                                out.insert(name.clone(), g);
                            }
                        }
                    }
                }
                Op::Conv3d { input, kernel, bias } => {
                    let need_input = self.nodes[input.0].requires_grad;
                    let gr = conv::conv3d_backward(
                        self.value(*input),
                        self.value(*kernel),
                        self.value(*bias),
                        &g,
                        need_input,
                    )?;
                    if let Some(gi) = gr.input {
                        send(*input, gi);
                    }
                    send(*kernel, gr.kernel);
                    send(*bias, gr.bias);
                }
                Op::MaxPool { input, argmax, .. } => {
                    send(*input, pool::maxpool_backward(self.value(*input).shape(), argmax, &g));
                }
                Op::Dense { input, weight, bias } => {
                    let (gi, gw, gb) =
                        dense::dense_backward(self.value(*input), self.value(*weight), self.value(*bias), &g)?;
                    send(*input, gi);
                    send(*weight, gw);
                    send(*bias, gb);
                }
                Op::Relu(x) => send(*x, elementwise::relu_backward(self.value(*x), &g)),
                Op::Sigmoid(x) => {
                    let mut gx = elementwise::sigmoid_backward(&node.value, &g);
                    if self.fault == Some(Fault::SigmoidGradient) {
                        let k = E::from_f64_lossy(1.5);
                        gx.data_mut().iter_mut().for_each(|v| *v = *v * k);
                    }
                    send(*x, gx);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Mul(a, b) => {
                    let ga = ops::mul(&g, self.value(*b))?;
                    let gb = ops::mul(&g, self.value(*a))?;
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::BroadcastMul { x, mask } => {
                    let (gx, gm) = elementwise::broadcast_mul_backward(self.value(*x), self.value(*mask), &g);
                    send(*x, gx);
                    send(*mask, gm);
                }
                Op::Reduce { input, axes, mode, argmax } => {
                    let gi = reduce::reduce_backward(self.value(*input).shape(), axes, *mode, argmax.as_deref(), &g)?;
                    send(*input, gi);
                }
                Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    send(*x, g.reshape(&shape)?);
                }
                Op::Bce { predictions, labels } => {
                    let gp = loss::bce_loss_backward(self.value(*predictions), self.value(*labels), g.data()[0]);
                    send(*predictions, gp);
                }
            }
        }
        Ok(Gradients { grads: out })
    }
}

fn kind_of<E: Element>(node: &Node<E>) -> OpKind {
    match node.op {
        Op::Leaf if node.param.is_some() => OpKind::Parameter,
        Op::Leaf => OpKind::Constant,
        Op::Conv3d { .. } => OpKind::Conv3d,
        Op::MaxPool { .. } => OpKind::MaxPool,
        Op::Dense { .. } => OpKind::Dense,
        Op::Relu(_) => OpKind::Relu,
        Op::Sigmoid(_) => OpKind::Sigmoid,
        Op::Add(..) => OpKind::Add,
        Op::Mul(..) => OpKind::Mul,
        Op::BroadcastMul { .. } => OpKind::BroadcastMul,
        Op::Reduce { .. } => OpKind::Reduce,
        Op::Reshape(_) => OpKind::Reshape,
        Op::Bce { .. } => OpKind::BceLoss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_weighted_sum_is_input() {
        let mut tape = Tape::<f64>::new();
        let x = Tensor::new(vec![3], vec![1.5, -2.0, 4.0]).unwrap();
        let xv = tape.constant(x.clone());
        let w = tape.param("w", Tensor::new(vec![3], vec![0.3, 0.1, -0.7]).unwrap());
        let prod = tape.mul(w, xv).unwrap();
        let loss = tape.reduce(prod, &[0], ReduceMode::Sum, false).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("w").unwrap(), &x);
        assert_eq!(grads.len(), 1);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f32>::new();
        let w = tape.param("w", Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(w), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn maxpool_gradient_hits_one_element_per_window() {
        let mut tape = Tape::<f64>::new();
        let x = Tensor::from_fn(&[4, 4, 4, 1], |i| ((i[0] * 37 + i[1] * 11 + i[2] * 5) % 17) as f64);
        let xv = tape.param("x", x);
        let p = tape.maxpool(xv, (2, 2, 2)).unwrap();
        let loss = tape.reduce(p, &[0, 1, 2, 3], ReduceMode::Sum, false).unwrap();
        let g = tape.backward(loss).unwrap();
        let g = g.get("x").unwrap();
        assert_eq!(g.data().iter().filter(|&&v| v == 1.0).count(), 8);
        assert_eq!(g.data().iter().filter(|&&v| v != 0.0).count(), 8);
    }

    #[test]
    fn unreached_params_get_zero_gradients() {
        let mut tape = Tape::<f32>::new();
        let a = tape.param("a", Tensor::full(&[2], 1.0));
        let _unused = tape.param("b", Tensor::full(&[3], 1.0));
        let loss = tape.reduce(a, &[0], ReduceMode::Mean, false).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("b").unwrap(), &Tensor::zeros(&[3]));
        assert_eq!(g.get("a").unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn reused_value_accumulates() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param("a", Tensor::full(&[1], 3.0));
        let sq = tape.mul(a, a).unwrap();
        let g = tape.backward(sq).unwrap();
        assert_eq!(g.get("a").unwrap().data(), &[6.0]);
    }
}
