//! Input sets for source nodes: a bounding box, optionally cut by halfspaces.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::lp::simplex::{LinearProgram, LpStatus, Sense, Simplex, SimplexOptions};
use crate::relax::{IntervalBound, RelaxError};

/// `normal . z >= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// `{ z in bbox | normal_i . z >= offset_i for all i }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSet {
    pub bbox: IntervalBound,
    pub halfspaces: Vec<Halfspace>,
}

/// Sets for the source nodes of a propagation, keyed by node.
pub type InputSets = BTreeMap<NodeId, InputSet>;

impl From<IntervalBound> for InputSet {
    fn from(bbox: IntervalBound) -> Self {
        Self { bbox, halfspaces: Vec::new() }
    }
}

impl InputSet {
    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.bbox.contains(z, tol)
            && self
                .halfspaces
                .iter()
                .all(|h| h.normal.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() >= h.offset - tol)
    }

    fn program(&self) -> LinearProgram {
        let n = self.dim();
        let mut lp = LinearProgram::new(n);
        lp.lower.clone_from(&self.bbox.lo);
        lp.upper.clone_from(&self.bbox.hi);
        for h in &self.halfspaces {
            let coeffs = h.normal.iter().copied().enumerate().filter(|(_, a)| *a != 0.0).collect();
            lp.add_row(coeffs, Sense::Ge, h.offset);
        }
        lp
    }

    /// `min a . z` over the set.
    pub fn min_linear(&self, a: &[f64]) -> Result<f64, RelaxError> {
        Ok(self.min_linear_many(std::slice::from_ref(&a.to_vec()))?[0])
    }

    /// `min a_k . z` for several objectives, sharing one factorization when
    /// the set has halfspaces. An empty set yields `+inf`.
    pub fn min_linear_many(&self, objectives: &[Vec<f64>]) -> Result<Vec<f64>, RelaxError> {
        if self.halfspaces.is_empty() {
            return Ok(objectives.iter().map(|a| self.bbox.min_linear(a)).collect());
        }
        let mut simplex = Simplex::new(&self.program(), SimplexOptions::default())?;
        if simplex.is_infeasible() {
            return Ok(vec![f64::INFINITY; objectives.len()]);
        }
        objectives
            .iter()
            .map(|a| {
                if a.iter().all(|&v| v == 0.0) {
                    return Ok(0.0);
                }
                let sol = simplex.minimize(a)?;
                match sol.status {
                    LpStatus::Optimal => Ok(sol.bound),
                    // the box bounds every variable, so only infeasibility remains
                    _ => Ok(f64::INFINITY),
                }
            })
            .collect()
    }
}

/// Column layout of the concatenated source variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceLayout {
    pub blocks: Vec<(NodeId, Range<usize>)>,
    pub width: usize,
}

impl SourceLayout {
    pub fn new(sets: &InputSets, sources: impl IntoIterator<Item = NodeId>) -> Self {
        let mut blocks = Vec::new();
        let mut width = 0;
        for s in sources {
            let d = sets[&s].dim();
            blocks.push((s, width..width + d));
            width += d;
        }
        Self { blocks, width }
    }

    pub fn block(&self, id: NodeId) -> Option<Range<usize>> {
        self.blocks.iter().find(|(n, _)| *n == id).map(|(_, r)| r.clone())
    }

    /// `min a . z` over the product of the source sets.
    pub fn min_linear(&self, sets: &InputSets, a: &[f64]) -> Result<f64, RelaxError> {
        self.blocks.iter().try_fold(0.0, |acc, (n, r)| Ok(acc + sets[n].min_linear(&a[r.clone()])?))
    }
}
