use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{state_err, Result};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a [`GradTape`]. Copyable; only meaningful together
/// with the tape that produced it (the tape id is checked on every use).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Given the gradient flowing into a node, returns one gradient tensor per
/// parent, each shaped like that parent's value.
type GradFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    grad_fn: Option<GradFn>,
}

/// Records operations as they execute and replays them in reverse to compute
/// gradients of a scalar output with respect to every leaf.
///
/// Usage: create a tape per training step, register inputs via [`leaf`] /
/// [`constant`], build the computation through the tape's operation methods,
/// then call [`backward`] on the scalar loss.
///
/// [`leaf`]: GradTape::leaf
/// [`constant`]: GradTape::constant
/// [`backward`]: GradTape::backward
pub struct GradTape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> GradTape {
        GradTape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor whose gradient will be tracked (e.g. a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None)
    }

    /// Registers a tensor that needs no gradient (e.g. network input).
    /// Identical to a leaf on this tape; the name documents intent, and any
    /// gradient it receives is simply never read.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None)
    }

    /// Appends a node. `grad_fn` must return exactly one tensor per parent,
    /// shaped like that parent's value. Crate-internal: operation modules use
    /// this to register custom backward rules.
    pub(crate) fn push(
        &mut self,
        value: Tensor,
        parents: Vec<Var>,
        grad_fn: Option<GradFn>,
    ) -> Var {
        for p in &parents {
            debug_assert_eq!(p.tape, self.id, "parent from another tape");
            debug_assert!(p.index < self.nodes.len());
        }
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            parents,
            grad_fn,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn index_of(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return state_err(format!(
                "variable belongs to tape {} but was used with tape {}",
                v.tape, self.id
            ));
        }
        if v.index >= self.nodes.len() {
            return state_err(format!("variable index {} out of range", v.index));
        }
        Ok(v.index)
    }

    /// Value of a variable; panics if the variable is from another tape
    /// (use the fallible ops for error handling — this is an accessor).
    pub fn value(&self, v: Var) -> &Tensor {
        let i = self.index_of(v).expect("variable not on this tape");
        &self.nodes[i].value
    }

    /// Reverse pass from a single-element output. Nodes recorded after the
    /// output, and nodes the output does not depend on, receive zero.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let oi = self.index_of(output)?;
        let out_node = &self.nodes[oi];
        if out_node.value.numel() != 1 {
            return state_err(format!(
                "backward requires a single-element output, got shape {:?}",
                out_node.value.shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[oi] = Some(Tensor::ones(out_node.value.shape()));
        for i in (0..=oi).rev() {
            let g = match &grads[i] {
                Some(g) => g.clone(), // cheap: shared buffer
                None => continue,
            };
            let node = &self.nodes[i];
            let f = match &node.grad_fn {
                Some(f) => f,
                None => continue,
            };
            let parent_grads = f(&g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                debug_assert_eq!(pg.shape(), self.nodes[p.index].value.shape());
                grads[p.index] = Some(match grads[p.index].take() {
                    Some(acc) => acc.add(&pg).expect("gradient shape mismatch"),
                    None => pg,
                });
            }
        }
        Ok(Gradients {
            tape: self.id,
            by_index: grads,
        })
    }

    // ----- basic differentiable operations -----

    /// Elementwise sum of two equal-shape variables.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.index_of(a)?, self.index_of(b)?);
        let value = self.nodes[ai].value.add(&self.nodes[bi].value)?;
        Ok(self.push(
            value,
            vec![a, b],
            Some(Box::new(|g: &Tensor| vec![g.clone(), g.clone()])),
        ))
    }

    /// Elementwise product of two equal-shape variables.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.index_of(a)?, self.index_of(b)?);
        let av = self.nodes[ai].value.clone();
        let bv = self.nodes[bi].value.clone();
        let value = av.hadamard(&bv)?;
        Ok(self.push(
            value,
            vec![a, b],
            Some(Box::new(move |g: &Tensor| {
                vec![g.hadamard(&bv).unwrap(), g.hadamard(&av).unwrap()]
            })),
        ))
    }

    /// Scalar multiple of a variable.
    pub fn scale(&mut self, a: Var, s: f32) -> Result<Var> {
        let ai = self.index_of(a)?;
        let value = self.nodes[ai].value.scale(s);
        Ok(self.push(
            value,
            vec![a],
            Some(Box::new(move |g: &Tensor| vec![g.scale(s)])),
        ))
    }

    /// Shape relabel; gradient is the same relabel in reverse.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ai = self.index_of(a)?;
        let old_shape = self.nodes[ai].value.shape().to_vec();
        let value = self.nodes[ai].value.reshape(shape)?;
        Ok(self.push(
            value,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![g.reshape(&old_shape).unwrap()]
            })),
        ))
    }

    /// Axis reorder; gradient applies the inverse permutation.
    pub fn permute(&mut self, a: Var, order: &[usize]) -> Result<Var> {
        let ai = self.index_of(a)?;
        let value = self.nodes[ai].value.permute(order)?;
        let mut inverse = vec![0usize; order.len()];
        for (j, &ax) in order.iter().enumerate() {
            inverse[ax] = j;
        }
        Ok(self.push(
            value,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![g.permute(&inverse).unwrap()]
            })),
        ))
    }

    /// Sum of all elements as a single-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.index_of(a)?;
        let shape = self.nodes[ai].value.shape().to_vec();
        let value = Tensor::scalar(self.nodes[ai].value.sum_f64() as f32);
        Ok(self.push(
            value,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![Tensor::full(&shape, g.data()[0])]
            })),
        ))
    }

    /// Mean of all elements as a single-element tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ai = self.index_of(a)?;
        let n = self.nodes[ai].value.numel();
        let shape = self.nodes[ai].value.shape().to_vec();
        let value = Tensor::scalar((self.nodes[ai].value.sum_f64() / n as f64) as f32);
        Ok(self.push(
            value,
            vec![a],
            Some(Box::new(move |g: &Tensor| {
                vec![Tensor::full(&shape, g.data()[0] / n as f32)]
            })),
        ))
    }
}

/// Result of a reverse pass: one gradient per tape node (zeros when the
/// output did not depend on it).
pub struct Gradients {
    tape: u64,
    by_index: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, materializing zeros for untouched nodes.
    /// `value_shape` is taken from the tape at lookup time.
    pub fn get(&self, tape: &GradTape, v: Var) -> Result<Tensor> {
        if v.tape != self.tape || v.tape != tape.id {
            return state_err("gradient lookup with a variable from another tape");
        }
        let i = tape.index_of(v)?;
        Ok(match &self.by_index[i] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.nodes[i].value.shape()),
        })
    }
}
