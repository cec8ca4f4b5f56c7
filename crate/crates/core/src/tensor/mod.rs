//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted array. Every operation
//! whose inputs track gradients records a backward closure, so the tensors
//! reachable from a loss form a DAG that [`Tensor::backward`] walks in
//! reverse topological order. Gradients are only written back to leaves
//! (and to intermediates marked with [`Tensor::retain_grad`]); everything
//! else lives in a scratch map for the duration of one backward pass.
//!
//! Layout is row-major. Sequence tensors use `[batch, channels, time]`.

mod conv;
pub mod io;
mod norm;
mod ops;
mod reduce;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use conv::ConvSpec;
pub use norm::{BatchStats, NormMode, BN_EPS};
pub use reduce::STD_EPS;
pub(crate) use ops::sigmoid;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn = dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync;

struct Node {
    parents: Vec<Tensor>,
    backward: Box<BackwardFn>,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    retain_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    node: Option<Node>,
}

#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            retain_grad: false,
            grad: Mutex::new(None),
            node,
        }))
    }

    /// Builds a constant tensor. Fails if `data` does not fill `shape`
    /// or any extent is zero.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Contract(format!("zero extent in shape {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::shape("Tensor::new", shape, &[data.len()]));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// A leaf that accumulates gradients.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Ok(Self::new(shape, data)?.requiring_grad())
    }

    pub fn scalar(v: f64) -> Self {
        Self::build(vec![1], vec![v], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self::build(shape.to_vec(), vec![v; numel(shape)], false, None)
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let data = (0..numel(shape))
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self::build(shape.to_vec(), data, false, None)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape)).map(|_| rng.random_range(lo..hi)).collect();
        Self::build(shape.to_vec(), data, false, None)
    }

    /// Returns a leaf with the same values that tracks gradients.
    pub fn requiring_grad(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), true, None)
    }

    /// Returns a constant leaf with the same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Keeps this intermediate's gradient after [`Tensor::backward`].
    pub fn retain_grad(self) -> Self {
        match Arc::try_unwrap(self.0) {
            Ok(mut inner) => {
                inner.retain_grad = true;
                Tensor(Arc::new(inner))
            }
            Err(shared) => {
                let t = Tensor(shared);
                let mut out = t.reshape(&t.0.shape.clone()).expect("same shape");
                Arc::get_mut(&mut out.0).expect("fresh tensor").retain_grad = true;
                out
            }
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn item(&self) -> f64 {
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// The accumulated gradient, if any backward pass reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    pub fn same_node(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Records an operation. `backward` maps the upstream gradient of the
    /// output to one optional gradient per parent, in order.
    pub(crate) fn from_op<F>(shape: Vec<usize>, data: Vec<f64>, parents: Vec<Tensor>, backward: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        let tracked = parents.iter().any(|p| p.requires_grad());
        let node = tracked.then(|| Node {
            parents,
            backward: Box::new(backward),
        });
        Self::build(shape, data, tracked, node)
    }

    /// Backpropagates from a scalar loss, accumulating into leaf gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        self.backward_with(vec![1.0])
    }

    /// Backpropagates an explicit upstream gradient (vector-Jacobian product).
    pub fn backward_with(&self, seed: Vec<f64>) -> Result<()> {
        if seed.len() != self.numel() {
            return Err(Error::shape("backward_with", self.shape(), &[seed.len()]));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.0.id, seed);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.0.id) else {
                continue;
            };
            match &t.0.node {
                None => accumulate_into(&t.0.grad, &g),
                Some(node) => {
                    if t.0.retain_grad {
                        accumulate_into(&t.0.grad, &g);
                    }
                    let grads = (node.backward)(&g);
                    debug_assert_eq!(grads.len(), node.parents.len());
                    for (p, pg) in node.parents.iter().zip(grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        match pending.get_mut(&p.0.id) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(p.0.id, pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen = std::collections::HashSet::new();
        // (tensor, children expanded?)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.0.id) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !seen.contains(&p.0.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

fn accumulate_into(slot: &Mutex<Option<Vec<f64>>>, g: &[f64]) {
    let mut slot = slot.lock().expect("grad lock");
    match slot.as_mut() {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}
