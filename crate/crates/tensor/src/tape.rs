//! Define-by-run gradient tape.
//!
//! Nodes are appended in evaluation order and only ever reference earlier
//! nodes, so the node list is already topologically sorted and cycles cannot
//! be expressed. `backward` walks it once in reverse.

use crate::conv::{self, ConvNeeds, ConvSpec};
use crate::graph::Ops;
use crate::ops::{self, Activation};
use crate::{Dims, Element, Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    Activation { x: Var, kind: Activation },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Down2(Var),
    Up2(Var),
    Concat(Var, Var),
    Slice { x: Var, start: usize },
    GlobalAvgPool(Var),
    ChannelAffine { x: Var, alpha: Var, beta: Var },
    BiasAdd { x: Var, bias: Var },
    MaskMul { x: Var, mask: Tensor<T> },
    Crop(Var),
    GradMap(Var),
    MeanAbs(Var),
    Sum(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Activation {
                kind: Activation::Relu,
                ..
            } => "relu",
            Op::Activation {
                kind: Activation::LeakyRelu(_),
                ..
            } => "leaky_relu",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Down2(_) => "down2",
            Op::Up2(_) => "up2",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::ChannelAffine { .. } => "channel_affine",
            Op::BiasAdd { .. } => "bias_add",
            Op::MaskMul { .. } => "mask_mul",
            Op::Crop(_) => "crop",
            Op::GradMap(_) => "grad_map",
            Op::MeanAbs(_) => "mean_abs",
            Op::Sum(_) => "sum",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } => [Some(x), Some(w), b].into_iter().flatten().collect(),
            Op::Activation { x, .. }
            | Op::Scale(x, _)
            | Op::Down2(x)
            | Op::Up2(x)
            | Op::Slice { x, .. }
            | Op::GlobalAvgPool(x)
            | Op::MaskMul { x, .. }
            | Op::Crop(x)
            | Op::GradMap(x)
            | Op::MeanAbs(x)
            | Op::Sum(x) => vec![x],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Concat(a, b) => vec![a, b],
            Op::ChannelAffine { x, alpha, beta } => vec![x, alpha, beta],
            Op::BiasAdd { x, bias } => vec![x, bias],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward pass for reverse-mode differentiation.
pub struct Tape<T: Element = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf; `requires_grad` decides whether backward reports its gradient.
    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn get(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Op names in recording order, leaves excluded.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Leaf))
            .map(|n| n.op.name())
            .collect()
    }

    /// Every recorded node as `(op name, value)`, leaves included.
    pub fn nodes(&self) -> impl Iterator<Item = (&'static str, &Tensor<T>)> {
        self.nodes.iter().map(|n| (n.op.name(), &n.value))
    }

    /// Activation kinds in recording order.
    pub fn activations(&self) -> Vec<Activation> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Activation { kind, .. } => Some(kind),
                _ => None,
            })
            .collect()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let inputs = op.inputs();
        debug_assert!(inputs.iter().all(|i| i.0 < self.nodes.len()));
        debug_assert!(
            !inputs.iter().all(|i| self.nodes[i.0].value.all_finite()) || value.all_finite(),
            "{} produced non-finite values from finite inputs",
            op.name()
        );
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Gradients of the scalar `loss` with respect to every leaf that
    /// requires them. Intermediate gradients are dropped once consumed.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ld = self.nodes[loss.0].value.dims();
        if ld != Dims::scalar() {
            return Err(TensorError::NotScalar(ld));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut leaves = Vec::new();

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            let Some(dy) = grads[id].take() else {
                continue;
            };
            if let Op::Leaf = node.op {
                leaves.push((id, dy));
                continue;
            }
            for (input, g) in self.vjp(node, &dy)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let mut out = vec![None; self.nodes.len()];
        for (id, g) in leaves {
            out[id] = Some(g);
        }
        Ok(Gradients { grads: out })
    }

    /// Vector-Jacobian product of one node: input contributions given `dy`.
    fn vjp(&self, node: &Node<T>, dy: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, spec } => {
                let needs = ConvNeeds {
                    input: rg(*x),
                    weight: rg(*w),
                    bias: b.is_some_and(rg),
                };
                let g = conv::conv2d_backward(val(*x), spec, val(*w), dy, needs)?;
                let mut out = Vec::new();
                if let Some(gx) = g.input {
                    out.push((*x, gx));
                }
                if let Some(gw) = g.weight {
                    out.push((*w, gw));
                }
                if let (Some(b), Some(gb)) = (b, g.bias) {
                    out.push((*b, gb));
                }
                out
            }
            Op::Activation { x, kind } => vec![(*x, ops::activation_backward(val(*x), dy, *kind))],
            Op::Add(a, b) => vec![(*a, dy.clone()), (*b, dy.clone())],
            Op::Sub(a, b) => vec![(*a, dy.clone()), (*b, ops::scale(dy, -T::one()))],
            Op::Mul(a, b) => vec![(*a, ops::mul(dy, val(*b))?), (*b, ops::mul(dy, val(*a))?)],
            Op::Scale(x, k) => vec![(*x, ops::scale(dy, T::of(*k)))],
            Op::Down2(x) => vec![(*x, ops::down2_backward(dy))],
            Op::Up2(x) => vec![(*x, ops::up2_backward(dy)?)],
            Op::Concat(a, b) => {
                let ca = val(*a).dims().c;
                let cb = val(*b).dims().c;
                vec![
                    (*a, ops::slice_channels(dy, 0, ca)?),
                    (*b, ops::slice_channels(dy, ca, cb)?),
                ]
            }
            Op::Slice { x, start } => vec![(*x, ops::embed_channels(dy, val(*x).dims(), *start))],
            Op::GlobalAvgPool(x) => vec![(*x, ops::global_avg_pool_backward(dy, val(*x).dims()))],
            Op::ChannelAffine { x, alpha, beta } => {
                let (dx, da, db) = ops::channel_affine_backward(val(*x), val(*alpha), val(*beta).dims(), dy);
                vec![(*x, dx), (*alpha, da), (*beta, db)]
            }
            Op::BiasAdd { x, bias } => vec![(*x, dy.clone()), (*bias, ops::bias_add_backward(dy))],
            Op::MaskMul { x, mask } => vec![(*x, ops::mask_mul(dy, mask)?)],
            Op::Crop(x) => vec![(*x, ops::crop_backward(dy, val(*x).dims()))],
            Op::GradMap(x) => vec![(*x, ops::grad_map_backward(dy, val(*x).dims()))],
            Op::MeanAbs(x) => vec![(*x, ops::mean_abs_backward(val(*x), dy.data()[0]))],
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).dims(), dy.data()[0]))],
        })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    /// `None` for non-leaves and leaves the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but substitutes zeros shaped like the leaf.
    pub fn get_or_zeros(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.get(v).dims()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Element> Ops<T> for Tape<T> {
    type Value = Var;

    fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    fn param(&mut self, t: &Tensor<T>) -> Var {
        self.leaf(t.clone(), true)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor<T> {
        self.get(*v)
    }

    fn conv2d(&mut self, x: &Var, spec: &ConvSpec, w: &Var, b: Option<&Var>) -> Result<Var> {
        let y = conv::conv2d(self.get(*x), spec, self.get(*w), b.map(|b| self.get(*b)))?;
        Ok(self.push(
            y,
            Op::Conv2d {
                x: *x,
                w: *w,
                b: b.copied(),
                spec: *spec,
            },
        ))
    }

    fn activation(&mut self, x: &Var, kind: Activation) -> Var {
        let y = ops::activation(self.get(*x), kind);
        self.push(y, Op::Activation { x: *x, kind })
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = ops::add(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::Add(*a, *b)))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = ops::sub(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::Sub(*a, *b)))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = ops::mul(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::Mul(*a, *b)))
    }

    fn scale(&mut self, x: &Var, k: f64) -> Var {
        let y = ops::scale(self.get(*x), T::of(k));
        self.push(y, Op::Scale(*x, k))
    }

    fn down2(&mut self, x: &Var) -> Result<Var> {
        let y = ops::down2(self.get(*x))?;
        Ok(self.push(y, Op::Down2(*x)))
    }

    fn up2(&mut self, x: &Var) -> Var {
        let y = ops::up2(self.get(*x));
        self.push(y, Op::Up2(*x))
    }

    fn concat_channels(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = ops::concat_channels(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::Concat(*a, *b)))
    }

    fn slice_channels(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let y = ops::slice_channels(self.get(*x), start, len)?;
        Ok(self.push(y, Op::Slice { x: *x, start }))
    }

    fn global_avg_pool(&mut self, x: &Var) -> Result<Var> {
        let y = ops::global_avg_pool(self.get(*x))?;
        Ok(self.push(y, Op::GlobalAvgPool(*x)))
    }

    fn channel_affine(&mut self, x: &Var, alpha: &Var, beta: &Var) -> Result<Var> {
        let y = ops::channel_affine(self.get(*x), self.get(*alpha), self.get(*beta))?;
        Ok(self.push(
            y,
            Op::ChannelAffine {
                x: *x,
                alpha: *alpha,
                beta: *beta,
            },
        ))
    }

    fn bias_add(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        let y = ops::bias_add(self.get(*x), self.get(*bias))?;
        Ok(self.push(y, Op::BiasAdd { x: *x, bias: *bias }))
    }

    fn mask_mul(&mut self, x: &Var, mask: &Tensor<T>) -> Result<Var> {
        let y = ops::mask_mul(self.get(*x), mask)?;
        Ok(self.push(
            y,
            Op::MaskMul {
                x: *x,
                mask: mask.clone(),
            },
        ))
    }

    fn crop(&mut self, x: &Var, h: usize, w: usize) -> Result<Var> {
        let y = ops::crop(self.get(*x), h, w)?;
        Ok(self.push(y, Op::Crop(*x)))
    }

    fn grad_map(&mut self, x: &Var) -> Var {
        let y = ops::grad_map(self.get(*x));
        self.push(y, Op::GradMap(*x))
    }

    fn mean_abs(&mut self, x: &Var) -> Var {
        let y = ops::mean_abs(self.get(*x));
        self.push(y, Op::MeanAbs(*x))
    }

    fn sum(&mut self, x: &Var) -> Var {
        let y = Tensor::scalar(self.get(*x).sum());
        self.push(y, Op::Sum(*x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_gradient_is_input() {
        let mut tape = Tape::<f64>::new();
        let xv = Tensor::from_fn([1, 2, 3, 3], |[_, c, y, x]| (c * 9 + y * 3 + x) as f64);
        let x = tape.constant(xv.clone());
        let w = tape.param(&Tensor::full([1, 2, 3, 3], 0.5));
        let p = tape.mul(&w, &x).unwrap();
        let loss = tape.sum(&p);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &xv);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn relu_gradient_at_negative_is_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(&Tensor::from_vec([1, 1, 1, 2], vec![-2.0, 3.0]).unwrap());
        let y = tape.relu(&x);
        let loss = tape.sum(&y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(&Tensor::ones([1, 1, 2, 2]));
        assert!(matches!(tape.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(&Tensor::full([1, 1, 1, 1], 3.0));
        let y = tape.mul(&x, &x).unwrap();
        let z = tape.add(&y, &x).unwrap();
        let loss = tape.sum(&z);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn op_names_skip_leaves() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(&Tensor::ones([1, 1, 2, 2]));
        let y = tape.leaky_relu(&x, 0.2);
        let _ = tape.relu(&y);
        assert_eq!(tape.op_names(), vec!["leaky_relu", "relu"]);
        assert_eq!(tape.activations(), vec![Activation::LeakyRelu(0.2), Activation::Relu]);
    }
}
