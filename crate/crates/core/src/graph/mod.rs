//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Forward passes push nodes onto a [`Tape`]; [`Tape::backward`] walks the
//! tape in reverse and accumulates gradients for every node that requires
//! them. The element type is generic over [`Scalar`] so the same model code
//! runs in `f32` for training and in `f64` for finite-difference gradient
//! checks.

mod ops_basic;
mod ops_nn;
mod ops_signal;

pub mod gradcheck;

pub use ops_nn::BnStats;

use ndarray::{ArrayD, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rustfft::FftNum;
use std::fmt::Debug;
use std::iter::Sum;

/// Element type bound: everything the tensor ops need, satisfied by
/// `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ScalarOperand + LinalgScalar + FftNum + Sum + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 conversion")
    }
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
}

/// Gradients keyed by tape node, produced by [`Tape::backward`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&ArrayD<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<ArrayD<T>> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

pub(crate) trait BackwardFn<T: Scalar> {
    /// Returns one gradient per parent, in parent order. `None` marks a
    /// parent that needs no gradient.
    fn run(self: Box<Self>, grad_out: &ArrayD<T>, tape: &Tape<T>) -> Vec<Option<ArrayD<T>>>;
}

struct Backward<F>(F);

impl<T, F> BackwardFn<T> for Backward<F>
where
    T: Scalar,
    F: FnOnce(&ArrayD<T>, &Tape<T>) -> Vec<Option<ArrayD<T>>>,
{
    fn run(self: Box<Self>, grad_out: &ArrayD<T>, tape: &Tape<T>) -> Vec<Option<ArrayD<T>>> {
        (self.0)(grad_out, tape)
    }
}

struct Node<T: Scalar> {
    value: ArrayD<T>,
    parents: Vec<usize>,
    backward: Option<Box<dyn BackwardFn<T>>>,
    requires_grad: bool,
}

/// A computation tape: values plus the recipe to backpropagate through them.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Value that never receives a gradient (inputs, masks, reference data).
    pub fn constant(&mut self, value: ArrayD<T>) -> Var {
        self.push(value, vec![], None, false)
    }

    /// Differentiable leaf (model parameters, probe inputs).
    pub fn leaf(&mut self, value: ArrayD<T>) -> Var {
        self.push(value, vec![], None, true)
    }

    pub fn value(&self, var: Var) -> &ArrayD<T> {
        &self.nodes[var.id].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.id].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, var: Var) -> T {
        let v = self.value(var);
        debug_assert_eq!(v.len(), 1, "scalar() on non-scalar node");
        v.iter().next().copied().unwrap()
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<T>,
        parents: Vec<usize>,
        backward: Option<Box<dyn BackwardFn<T>>>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward: if requires_grad { backward } else { None },
            requires_grad,
        });
        Var {
            id: self.nodes.len() - 1,
        }
    }

    /// True when any of the parents requires a gradient; ops use this to
    /// skip building backward closures on constant subgraphs.
    pub(crate) fn any_requires(&self, parents: &[Var]) -> bool {
        parents.iter().any(|p| self.nodes[p.id].requires_grad)
    }

    pub(crate) fn op(
        &mut self,
        value: ArrayD<T>,
        parents: &[Var],
        backward: impl FnOnce(&ArrayD<T>, &Tape<T>) -> Vec<Option<ArrayD<T>>> + 'static,
    ) -> Var {
        let requires = self.any_requires(parents);
        let ids = parents.iter().map(|p| p.id).collect();
        self.push(
            value,
            ids,
            if requires {
                Some(Box::new(Backward(backward)))
            } else {
                None
            },
            requires,
        )
    }

    /// Backpropagate from a scalar root. Consumes the backward closures, so
    /// it can be called once per tape.
    pub fn backward(&mut self, root: Var) -> Gradients<T> {
        assert_eq!(
            self.nodes[root.id].value.len(),
            1,
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<ArrayD<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.id] = Some(ArrayD::from_elem(
            self.nodes[root.id].value.raw_dim(),
            T::one(),
        ));

        for i in (0..=root.id).rev() {
            if grads[i].is_none() {
                continue;
            }
            let Some(bw) = self.nodes[i].backward.take() else {
                continue;
            };
            let grad_out = grads[i].take().unwrap();
            let parent_ids = self.nodes[i].parents.clone();
            let parent_grads = bw.run(&grad_out, self);
            debug_assert_eq!(parent_ids.len(), parent_grads.len());
            for (pid, pg) in parent_ids.into_iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), self.nodes[pid].value.shape());
                match &mut grads[pid] {
                    Some(acc) => *acc += &pg,
                    slot => *slot = Some(pg),
                }
            }
        }
        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn backward_through_shared_subgraph_accumulates() {
        let mut t: Tape<f64> = Tape::new();
        let x = t.leaf(arr1(&[2.0, 3.0]).into_dyn());
        let y = t.mul(x, x); // x^2
        let z = t.add(y, x); // x^2 + x
        let s = t.sum_all(z);
        let g = t.backward(s);
        let gx = g.get(x).unwrap();
        // d/dx (x^2 + x) = 2x + 1
        assert_eq!(gx[[0]], 5.0);
        assert_eq!(gx[[1]], 7.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t: Tape<f64> = Tape::new();
        let x = t.leaf(arr1(&[1.0]).into_dyn());
        let c = t.constant(arr1(&[4.0]).into_dyn());
        let y = t.mul(x, c);
        let s = t.sum_all(y);
        let g = t.backward(s);
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap()[[0]], 4.0);
    }

    #[test]
    fn constant_subgraphs_skip_backward_closures() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.constant(arr1(&[1.0, 2.0]).into_dyn());
        let b = t.constant(arr1(&[3.0, 4.0]).into_dyn());
        let c = t.mul(a, b);
        assert!(!t.requires_grad(c));
        assert!(t.nodes[c.id].backward.is_none());
    }
}
