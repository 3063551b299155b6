//! Reverse-mode automatic differentiation over the engine's small op set.
//!
//! A [`Tape`] owns every value it records. Ops append a node and return a
//! [`Var`] handle; [`Tape::backward`] walks the nodes in reverse recording
//! order, which is a valid topological order because inputs are always
//! recorded before their consumers. A tape serves one training step and is
//! then dropped.

use crate::conv::{self, ConvParams, ConvSpec};
use crate::{Error, Real, Result, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sum(Var),
    Conv {
        x: Var,
        weight: Var,
        bias: Var,
        spec: ConvSpec,
    },
    L1(Var, Var),
    L2(Var, Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    backward_visits: usize,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            backward_visits: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Number of non-leaf ops processed by the last [`Tape::backward`].
    pub fn backward_visits(&self) -> usize {
        self.backward_visits
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor<T>, inputs: &[Var], op: Op, name: &str) -> Result<Var> {
        value.check_finite(name)?;
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.record(value, &[a, b], Op::Add(a, b), "add")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.record(value, &[a, b], Op::Mul(a, b), "mul")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).relu();
        self.record(value, &[x], Op::Relu(x), "relu")
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.record(value, &[x], Op::Sum(x), "sum")
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var, spec: &ConvSpec) -> Result<Var> {
        let value = {
            let p = ConvParams {
                weight: self.value(weight).clone(),
                bias: self.value(bias).clone(),
            };
            conv::forward(self.value(x), &p, spec)?
        };
        self.record(
            value,
            &[x, weight, bias],
            Op::Conv {
                x,
                weight,
                bias,
                spec: *spec,
            },
            "conv2d",
        )
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        p.expect_same_shape(t, "l1_loss")?;
        let n = T::from_usize(p.len()).expect("len");
        let total: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        self.record(
            Tensor::scalar(total / n),
            &[pred, target],
            Op::L1(pred, target),
            "l1_loss",
        )
    }

    /// Mean squared error.
    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        p.expect_same_shape(t, "l2_loss")?;
        let n = T::from_usize(p.len()).expect("len");
        let total: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        self.record(
            Tensor::scalar(total / n),
            &[pred, target],
            Op::L2(pred, target),
            "l2_loss",
        )
    }

    /// Seeds `loss` with gradient 1 and propagates to every node that
    /// requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != Shape::scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {}",
                self.value(loss).shape()
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backward_visits = 0;
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            if !matches!(op, Op::Leaf) {
                self.backward_visits += 1;
            }
            let contributions = self.local_grads(&op, &g)?;
            self.nodes[idx].grad = Some(g);
            for (v, grad) in contributions {
                self.accumulate(v, grad)?;
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, grad: Tensor<T>) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return Ok(());
        }
        match &mut node.grad {
            Some(existing) => existing.add_assign(&grad),
            slot @ None => {
                *slot = Some(grad);
                Ok(())
            }
        }
    }

    fn local_grads(&self, op: &Op, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        Ok(match *op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            Op::Mul(a, b) => vec![
                (a, g.zip_map(self.value(b), |g, y| g * y)?),
                (b, g.zip_map(self.value(a), |g, x| g * x)?),
            ],
            Op::Relu(x) => vec![(
                x,
                g.zip_map(self.value(x), |g, x| if x > T::zero() { g } else { T::zero() })?,
            )],
            Op::Sum(x) => {
                let s = g.item()?;
                vec![(x, Tensor::full(self.value(x).shape(), s))]
            }
            Op::Conv { x, weight, bias, spec } => {
                let p = ConvParams {
                    weight: self.value(weight).clone(),
                    bias: self.value(bias).clone(),
                };
                let grads = conv::backward(g, self.value(x), &p, &spec)?;
                vec![(x, grads.input), (weight, grads.weight), (bias, grads.bias)]
            }
            Op::L1(pred, target) => {
                let (p, t) = (self.value(pred), self.value(target));
                let scale = g.item()? / T::from_usize(p.len()).expect("len");
                let dp = p.zip_map(t, |a, b| {
                    let d = a - b;
                    if d > T::zero() {
                        scale
                    } else if d < T::zero() {
                        -scale
                    } else {
                        T::zero()
                    }
                })?;
                let dt = dp.map(|v| -v);
                vec![(pred, dp), (target, dt)]
            }
            Op::L2(pred, target) => {
                let (p, t) = (self.value(pred), self.value(target));
                let two = T::of_f64(2.0);
                let scale = g.item()? * two / T::from_usize(p.len()).expect("len");
                let dp = p.zip_map(t, |a, b| (a - b) * scale)?;
                let dt = dp.map(|v| -v);
                vec![(pred, dp), (target, dt)]
            }
        })
    }
}
