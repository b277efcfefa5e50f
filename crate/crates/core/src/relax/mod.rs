//! Per-node bounds: intervals, activation relaxations and linear bound
//! propagation (forward and backward) over arbitrary computational graphs.

mod activation;
mod interval;
mod linear;

pub use activation::{relu_relaxation, tanh_relaxation, AlphaRule, Envelope, ReluRelaxation, TanhRelaxation};
pub use interval::{interval_propagate, interval_propagate_to};
pub use linear::{
    backward_bounds, backward_lin_prop, backward_preactivations, extend_backward_preactivations, forward_lin_prop, ForwardBounds,
    LinearBoundFn,
};
pub(crate) use linear::{refinable as refinable_neurons, tighten as tighten_bounds};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CompGraph, GraphError, NodeId, Operator};
use crate::lp::simplex::LpError;

/// Elementwise interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBound {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalBound {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, RelaxError> {
        if lo.len() != hi.len() {
            return Err(RelaxError::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(RelaxError::InvalidInterval { lo: lo[i], hi: hi[i] });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: Vec<f64>) -> Self {
        Self { lo: v.clone(), hi: v }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn mid(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// `min a . z` over the box.
    pub fn min_linear(&self, a: &[f64]) -> f64 {
        a.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&c, (&l, &h))| if c >= 0.0 { c * l } else { c * h })
            .sum()
    }
}

/// Bounds for a set of nodes, keyed by id.
pub type BoundMap = BTreeMap<NodeId, IntervalBound>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("no preactivation bounds for node {0}")]
    MissingPreactivation(NodeId),
    #[error("no input set for node {0}")]
    MissingInput(NodeId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Preactivation interval for activation node `act`, looked up by its
/// argument node. Arguments that are themselves sources use their set's box.
pub(crate) fn preactivation<'a>(
    g: &CompGraph,
    act: NodeId,
    preact: &'a BoundMap,
    sets: &'a crate::sets::InputSets,
) -> Result<&'a IntervalBound, RelaxError> {
    let p = g.preds(act)[0];
    if let Some(s) = sets.get(&p) {
        return Ok(&s.bbox);
    }
    preact.get(&p).ok_or(RelaxError::MissingPreactivation(p))
}

/// Linear envelope of an activation node's neuron `j` on `[lo, hi]`.
pub(crate) fn envelope(op: &Operator, lo: f64, hi: f64, alpha: AlphaRule) -> Result<Envelope, RelaxError> {
    match op {
        Operator::Relu => Ok(relu_relaxation(lo, hi, alpha)?.envelope()),
        Operator::Tanh => Ok(tanh_relaxation(lo, hi)?.envelope()),
        _ => unreachable!("envelope requested for non-activation operator"),
    }
}
