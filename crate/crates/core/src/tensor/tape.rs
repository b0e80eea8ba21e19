use std::any::Any;
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{Element, Tensor};
use crate::error::{usage_err, Result};

/// Handle of a recorded value: which tape, and its position on that tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

/// Vector-Jacobian product of one node. Receives the upstream gradient and
/// a mask of which inputs need a gradient; returns one entry per input.
pub(crate) type BackwardFn<E> = Box<dyn Fn(&[E], &[bool]) -> Vec<Option<Vec<E>>>>;

struct Node<E> {
    tag: &'static str,
    numel: usize,
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<E>>,
}

struct TapeInner<E> {
    id: u64,
    nodes: RefCell<Vec<Node<E>>>,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static ACTIVE: RefCell<Option<Rc<dyn Any>>> = const { RefCell::new(None) };
}

fn active<E: Element>() -> Option<Rc<TapeInner<E>>> {
    ACTIVE.with(|a| {
        a.borrow()
            .as_ref()
            .and_then(|rc| Rc::clone(rc).downcast::<TapeInner<E>>().ok())
    })
}

/// Scoped gradient tape for the current thread.
///
/// While a `Tape` is alive, operations whose inputs include a watched
/// tensor (or anything derived from one) are appended to it. Dropping the
/// tape ends the scope; tensors still carrying its node ids then behave as
/// constants.
pub struct Tape<E: Element> {
    inner: Rc<TapeInner<E>>,
}

impl<E: Element> Tape<E> {
    /// Opens a tape on this thread. Only one tape may be active at a time.
    pub fn new() -> Result<Self> {
        let inner = Rc::new(TapeInner::<E> {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        });
        ACTIVE.with(|a| {
            let mut slot = a.borrow_mut();
            if slot.is_some() {
                return Err(usage_err!("a gradient tape is already active on this thread"));
            }
            *slot = Some(Rc::clone(&inner) as Rc<dyn Any>);
            Ok(())
        })?;
        Ok(Self { inner })
    }

    /// Registers `t` as a differentiable leaf and returns the attached copy.
    pub fn watch(&self, t: &Tensor<E>) -> Tensor<E> {
        let mut nodes = self.inner.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            tag: "leaf",
            numel: t.numel(),
            inputs: Vec::new(),
            backward: None,
        });
        t.detach().with_node(Some(NodeId {
            tape: self.inner.id,
            index,
        }))
    }

    pub fn len(&self) -> usize {
        self.inner.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Operation tags in recording order.
    pub fn tags(&self) -> Vec<&'static str> {
        self.inner.nodes.borrow().iter().map(|n| n.tag).collect()
    }

    /// Reverse sweep from a scalar `loss`. The tape is left intact, so the
    /// sweep can be repeated.
    pub fn backward(&self, loss: &Tensor<E>) -> Result<Gradients<E>> {
        if loss.numel() != 1 {
            return Err(usage_err!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            ));
        }
        let root = match loss.node() {
            Some(id) if id.tape == self.inner.id => id.index,
            _ => return Err(usage_err!("loss is not attached to the active tape")),
        };
        let nodes = self.inner.nodes.borrow();
        let mut grads: Vec<Option<Vec<E>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root] = Some(vec![E::one()]);
        let mut leaves = HashMap::new();
        for idx in (0..=root).rev() {
            let node = &nodes[idx];
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let Some(backward) = node.backward.as_ref() else {
                leaves.insert(idx, g);
                continue;
            };
            let needs: Vec<bool> = node.inputs.iter().map(Option::is_some).collect();
            let input_grads = backward(&g, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.tag);
            for (slot, gi) in node.inputs.iter().zip(input_grads) {
                let (Some(src), Some(gi)) = (slot, gi) else {
                    continue;
                };
                debug_assert_eq!(gi.len(), nodes[*src].numel, "{}", node.tag);
                match &mut grads[*src] {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(gi) {
                            *a += v;
                        }
                    }
                    empty => *empty = Some(gi),
                }
            }
        }
        // Leaves the loss does not depend on get explicit zeros.
        for (idx, node) in nodes.iter().enumerate() {
            if node.backward.is_none() && !leaves.contains_key(&idx) {
                leaves.insert(idx, vec![E::zero(); node.numel]);
            }
        }
        Ok(Gradients {
            tape: self.inner.id,
            grads: leaves,
        })
    }
}

impl<E: Element> Drop for Tape<E> {
    fn drop(&mut self) {
        ACTIVE.with(|a| {
            let mut slot = a.borrow_mut();
            if let Some(rc) = slot.as_ref() {
                if Rc::ptr_eq(
                    &(Rc::clone(&self.inner) as Rc<dyn Any>),
                    rc,
                ) {
                    *slot = None;
                }
            }
        });
    }
}

/// Gradients of a scalar with respect to every watched leaf.
pub struct Gradients<E: Element> {
    tape: u64,
    grads: HashMap<usize, Vec<E>>,
}

impl<E: Element> Gradients<E> {
    /// Gradient for a watched leaf, shaped like it.
    pub fn get(&self, leaf: &Tensor<E>) -> Option<Tensor<E>> {
        let id = leaf.node()?;
        if id.tape != self.tape {
            return None;
        }
        self.grads
            .get(&id.index)
            .map(|g| Tensor::raw(leaf.shape().to_vec(), g.clone()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Appends an operation to the active tape if any input is attached to it.
/// `make` is only invoked when the node is actually recorded.
pub(crate) fn record<E: Element>(
    inputs: &[&Tensor<E>],
    tag: &'static str,
    numel: usize,
    make: impl FnOnce() -> BackwardFn<E>,
) -> Option<NodeId> {
    if inputs.iter().all(|t| t.node().is_none()) {
        return None;
    }
    let tape = active::<E>()?;
    let slots: Vec<Option<usize>> = inputs
        .iter()
        .map(|t| match t.node() {
            Some(id) if id.tape == tape.id => Some(id.index),
            _ => None,
        })
        .collect();
    if slots.iter().all(Option::is_none) {
        return None;
    }
    let mut nodes = tape.nodes.borrow_mut();
    let index = nodes.len();
    nodes.push(Node {
        tag,
        numel,
        inputs: slots,
        backward: Some(make()),
    });
    Some(NodeId {
        tape: tape.id,
        index,
    })
}
