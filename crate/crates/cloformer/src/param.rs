//! Named-parameter registry connecting layer structs to the tape.
//!
//! Each layer struct records its tensors as tape leaves through a
//! [`Registry`], which remembers the dotted parameter name of every leaf.
//! The optimizer, checkpointing, and parameter counting all walk the same
//! name space, so `stage1.block0.local.dw_v.weight` means the same tensor
//! everywhere.

use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Ordered (name, tape handle) list built during one forward recording.
#[derive(Default)]
pub struct Registry {
    entries: Vec<(String, Val)>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn add<E: Elem>(&mut self, tape: &mut Tape<E>, name: impl Into<String>, t: &Tensor<E>) -> Val {
        let v = tape.leaf(t.clone());
        self.entries.push((name.into(), v));
        v
    }

    pub fn entries(&self) -> &[(String, Val)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_preserves_order_and_names() {
        let mut tape = Tape::<f32>::new();
        let mut reg = Registry::new();
        let a = reg.add(&mut tape, "w.a", &Tensor::ones([1, 2, 1, 1]));
        let b = reg.add(&mut tape, "w.b", &Tensor::zeros([1, 3, 1, 1]));
        assert_eq!(reg.entries()[0], ("w.a".to_string(), a));
        assert_eq!(reg.entries()[1], ("w.b".to_string(), b));
    }
}
