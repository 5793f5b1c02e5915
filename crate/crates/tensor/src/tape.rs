use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::{Result, Tensor, TensorError};

/// Maps the gradient of a node's output to gradients of its parents, in parent
/// order. `None` means the parent receives no contribution.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Recording of a single forward computation.
///
/// Nodes are stored in recording order, which is also a topological order of the
/// computation graph. A tape is meant to be built for one forward pass, consumed
/// by one [`Tape::backward`], and dropped.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Trainable input: gradients flow into it and are reported by `backward`.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.insert(value, Vec::new(), true, None)
    }

    /// Input that takes no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.insert(value, Vec::new(), false, None)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(
        &self,
        value: Tensor,
        parents: Vec<usize>,
        requires_grad: bool,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            requires_grad,
            backward,
        });
        Var { tape: self, id }
    }

    /// Records the result of an operation. The backward closure is dropped when
    /// none of the parents requires a gradient.
    pub(crate) fn record(&self, value: Tensor, parents: &[Var<'_>], backward: BackwardFn) -> Var<'_> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        let ids = parents.iter().map(|p| p.id).collect();
        self.insert(value, ids, requires_grad, requires_grad.then_some(backward))
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        if !nodes[loss.id].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::full(loss_value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[id].as_ref() else {
                continue;
            };
            let parent_grads = backward(grad);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                match grads[pid].as_mut() {
                    Some(acc) => acc.axpy(1.0, &pg)?,
                    None => grads[pid] = Some(pg),
                }
            }
        }

        // Only nodes that take part in differentiation report a gradient.
        for (g, node) in grads.iter_mut().zip(nodes.iter()) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by one [`Tape::backward`] call, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. `None` for constants,
    /// detached values, and nodes the loss does not depend on.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t> {
        let value = (*self.value()).clone();
        self.tape.constant(value)
    }
}
