use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::rc::Rc;

use num_traits::Float;
use rustfft::FftNum;

use crate::error::{Error, Result};

/// Scalar element type of the engine. Training runs in `f32`, gradient
/// checks in `f64`.
pub trait Real:
    Float
    + FftNum
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Gradient rule of an op: given the output gradient and which parents need
/// a gradient, return one contribution per parent.
pub(crate) type GradFn<F> = Box<dyn FnOnce(&[F], &[bool]) -> Vec<Option<Vec<F>>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Leaf,
    Live,
    Consumed,
}

struct Node<F: Real> {
    id: u64,
    op: &'static str,
    shape: Vec<usize>,
    data: RefCell<Vec<F>>,
    grad: RefCell<Option<Vec<F>>>,
    requires_grad: Cell<bool>,
    state: Cell<NodeState>,
    parents: Vec<Tensor<F>>,
    grad_fn: RefCell<Option<GradFn<F>>>,
}

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static FAULT_OP: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Scales the gradient produced by every node of the named op by 1.01 on the
/// current thread. Used by the gradient-check tooling to prove that a broken
/// rule is detected; pass `None` to clear.
pub fn inject_gradient_fault(op: Option<&str>) {
    FAULT_OP.with(|f| *f.borrow_mut() = op.map(str::to_owned));
}

fn fault_matches(op: &str) -> bool {
    FAULT_OP.with(|f| f.borrow().as_deref() == Some(op))
}

/// Reference-counted handle to a node of the computation graph.
///
/// Cloning is cheap and shares the node. Leaves created with
/// [`Tensor::param`] accumulate gradients across uses; interior nodes are
/// produced by ops and can be backpropagated through exactly once.
pub struct Tensor<F: Real> {
    node: Rc<Node<F>>,
}

impl<F: Real> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Self {
            node: Rc::clone(&self.node),
        }
    }
}

impl<F: Real> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("op", &self.node.op)
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

fn check_len(op: &'static str, shape: &[usize], len: usize) -> Result<()> {
    let n: usize = shape.iter().product();
    if shape.iter().any(|&d| d == 0) || n != len {
        return Err(Error::shape(
            op,
            format!("shape {shape:?} does not hold {len} elements"),
        ));
    }
    Ok(())
}

fn all_finite<F: Real>(v: &[F]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<F: Real> Tensor<F> {
    fn leaf(shape: Vec<usize>, data: Vec<F>, requires_grad: bool) -> Result<Self> {
        check_len("leaf", &shape, data.len())?;
        if !all_finite(&data) {
            return Err(Error::NonFinite {
                op: "leaf",
                phase: "forward",
            });
        }
        Ok(Self {
            node: Rc::new(Node {
                id: next_id(),
                op: "leaf",
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(requires_grad),
                state: Cell::new(NodeState::Leaf),
                parents: Vec::new(),
                grad_fn: RefCell::new(None),
            }),
        })
    }

    /// Trainable leaf.
    pub fn param(shape: &[usize], data: Vec<F>) -> Result<Self> {
        Self::leaf(shape.to_vec(), data, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(shape: &[usize], data: Vec<F>) -> Result<Self> {
        Self::leaf(shape.to_vec(), data, false)
    }

    pub fn scalar(v: F) -> Self {
        Self::leaf(vec![1], vec![v], false).expect("finite scalar")
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = shape.iter().product();
        Self::constant(shape, vec![F::zero(); n])
    }

    pub fn from_f64(shape: &[usize], data: &[f64], requires_grad: bool) -> Result<Self> {
        Self::leaf(
            shape.to_vec(),
            data.iter().map(|&v| F::lit(v)).collect(),
            requires_grad,
        )
    }

    /// Builds the result node of an op. When no parent needs a gradient the
    /// rule and the parent links are dropped immediately.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<F>,
        parents: Vec<Tensor<F>>,
        grad_fn: GradFn<F>,
    ) -> Result<Self> {
        check_len(op, &shape, data.len())?;
        if !all_finite(&data) {
            return Err(Error::NonFinite {
                op,
                phase: "forward",
            });
        }
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let (parents, grad_fn) = if requires_grad {
            (parents, Some(grad_fn))
        } else {
            (Vec::new(), None)
        };
        Ok(Self {
            node: Rc::new(Node {
                id: next_id(),
                op,
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(requires_grad),
                state: Cell::new(if requires_grad {
                    NodeState::Live
                } else {
                    NodeState::Leaf
                }),
                parents,
                grad_fn: RefCell::new(grad_fn),
            }),
        })
    }

    pub fn op_name(&self) -> &'static str {
        self.node.op
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn data(&self) -> Ref<'_, Vec<F>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.node.data.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.borrow().iter().map(|v| v.as_f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> F {
        self.node.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad.get()
    }

    pub fn is_leaf(&self) -> bool {
        self.node.state.get() == NodeState::Leaf
    }

    /// Toggles gradient tracking of a leaf; graphs built afterwards observe the
    /// new flag.
    pub fn set_requires_grad(&self, flag: bool) {
        debug_assert!(self.is_leaf());
        self.node.requires_grad.set(flag);
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Overwrites a leaf's values in place (optimizer updates, checkpoint loads).
    pub fn set_data(&self, values: &[F]) -> Result<()> {
        let mut d = self.node.data.borrow_mut();
        if d.len() != values.len() {
            return Err(Error::shape(
                "set_data",
                format!("expected {} values, got {}", d.len(), values.len()),
            ));
        }
        d.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [F])) {
        f(&mut self.node.data.borrow_mut());
    }

    /// Copy of the values as a new constant leaf, cutting the graph.
    pub fn detach(&self) -> Self {
        Self::leaf(self.node.shape.clone(), self.to_vec(), false).expect("detach of valid tensor")
    }

    pub fn ptr_eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.node, &other.node)
    }

    /// Reverse-mode sweep from this scalar. Gradients accumulate into every
    /// reachable leaf that requires one; interior nodes are consumed.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Graph(format!(
                "output must be scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Graph(
                "output does not depend on any tensor requiring grad".into(),
            ));
        }
        if self.node.state.get() == NodeState::Consumed {
            return Err(Error::Graph(
                "graph already consumed; re-run the forward pass".into(),
            ));
        }

        let mut order: Vec<Tensor<F>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        seen.insert(self.node.id);
        while let Some(t) = stack.pop() {
            if t.node.state.get() == NodeState::Consumed {
                return Err(Error::Graph(format!(
                    "stale graph: node '{}' was consumed by an earlier backward",
                    t.node.op
                )));
            }
            for p in &t.node.parents {
                if p.requires_grad() && seen.insert(p.node.id) {
                    stack.push(p.clone());
                }
            }
            order.push(t);
        }
        // Ids grow monotonically with creation, so descending id is a valid
        // reverse topological order.
        order.sort_unstable_by(|a, b| b.node.id.cmp(&a.node.id));

        *self.node.grad.borrow_mut() = Some(vec![F::one()]);
        for t in &order {
            let node = &t.node;
            if node.state.get() == NodeState::Leaf {
                continue;
            }
            let grad_fn = node.grad_fn.borrow_mut().take();
            node.state.set(NodeState::Consumed);
            let g = node.grad.borrow_mut().take();
            let (Some(grad_fn), Some(g)) = (grad_fn, g) else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(Tensor::requires_grad).collect();
            let mut contributions = grad_fn(&g, &needs);
            if fault_matches(node.op) {
                for c in contributions.iter_mut().flatten() {
                    for v in c.iter_mut() {
                        *v *= F::lit(1.01);
                    }
                }
            }
            for (p, c) in node.parents.iter().zip(contributions) {
                let Some(c) = c else { continue };
                if !all_finite(&c) {
                    return Err(Error::NonFinite {
                        op: node.op,
                        phase: "backward",
                    });
                }
                debug_assert_eq!(c.len(), p.numel(), "gradient size of {}", node.op);
                let mut pg = p.node.grad.borrow_mut();
                match pg.as_mut() {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&c) {
                            *a += *v;
                        }
                    }
                    None => *pg = Some(c),
                }
            }
        }
        Ok(())
    }
}
