//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Values on the tape are immutable snapshots; each node optionally carries
//! a vector-Jacobian closure that maps the output gradient back to the
//! parents. A tape is a single logical training context and must not be
//! driven from two threads at once.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Val(pub(crate) usize);

/// vjp(grad_out, parent_values, output_value) -> parent gradients, one per parent.
pub type Vjp<E> = Box<dyn Fn(&Tensor<E>, &[&Tensor<E>], &Tensor<E>) -> Vec<Tensor<E>>>;

struct Node<E: Elem> {
    value: Tensor<E>,
    parents: Vec<Val>,
    vjp: Option<Vjp<E>>,
}

pub struct Tape<E: Elem> {
    nodes: Vec<Node<E>>,
    grad_enabled: bool,
}

impl<E: Elem> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> Tape<E> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that stores forward values but records no backward closures;
    /// used for pure inference.
    pub fn no_grad() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf (input or parameter snapshot).
    pub fn leaf(&mut self, value: Tensor<E>) -> Val {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            vjp: None,
        });
        Val(self.nodes.len() - 1)
    }

    /// Record an operation result. `vjp` is dropped when gradients are off.
    pub fn push(&mut self, value: Tensor<E>, parents: Vec<Val>, vjp: Vjp<E>) -> Val {
        let vjp = if self.grad_enabled { Some(vjp) } else { None };
        self.nodes.push(Node {
            value,
            parents,
            vjp,
        });
        Val(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Val) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a scalar root. Returns per-node gradients.
    pub fn backward(&self, root: Val) -> Result<Grads<E>> {
        let root_t = &self.nodes[root.0].value;
        if root_t.len() != 1 {
            return Err(Error::Argument(format!(
                "backward root must be scalar, got dims {:?}",
                root_t.dims()
            )));
        }
        let mut grads: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones([1, 1, 1, 1]));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(vjp) = &node.vjp {
                let parent_vals: Vec<&Tensor<E>> =
                    node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
                let parent_grads = vjp(&g, &parent_vals, &node.value);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (p, pg) in node.parents.iter().zip(parent_grads) {
                    match &mut grads[p.0] {
                        Some(acc) => acc.add_assign(&pg)?,
                        slot => *slot = Some(pg),
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Grads { grads })
    }
}

/// Gradient set produced by [`Tape::backward`].
pub struct Grads<E: Elem> {
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Elem> Grads<E> {
    /// Gradient of the root w.r.t. `v`; None when `v` did not influence it.
    pub fn get(&self, v: Val) -> Option<&Tensor<E>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Val) -> Option<Tensor<E>> {
        self.grads[v.0].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // y = a*b + a  via hadamard + add on scalars; dy/da = b + 1, dy/db = a.
    #[test]
    fn tape_chain_rule() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::scalar(3.0));
        let b = t.leaf(Tensor::scalar(5.0));
        let ab = crate::ops::hadamard_t(&mut t, a, b).unwrap();
        let y = crate::ops::add_t(&mut t, ab, a).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(a).unwrap().data()[0], 6.0);
        assert_eq!(g.get(b).unwrap().data()[0], 3.0);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(t.backward(a).is_err());
    }

    #[test]
    fn no_grad_tape_records_values_only() {
        let mut t = Tape::<f32>::no_grad();
        let a = t.leaf(Tensor::scalar(2.0));
        let b = t.leaf(Tensor::scalar(4.0));
        let ab = crate::ops::hadamard_t(&mut t, a, b).unwrap();
        assert_eq!(t.value(ab).data()[0], 8.0);
    }
}
