//! The verification LP over a (sub)graph and its solution.
//!
//! [`build_lp`] emits one variable block per node and rows tagged by the
//! node that owns them. Before solving, [`PreparedLp`] substitutes every
//! variable pinned by an equality row of its own node (affine maps, sums,
//! concatenations, stable ReLUs), so the simplex only sees input variables,
//! unstable ReLU outputs and tanh outputs.

mod bnb;
pub mod simplex;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

pub use bnb::{branch_and_bound, enumerate_patterns, BnbNode, BnbOptions, BnbResult, PhaseFix};
use simplex::{LinearProgram, LinearRow, LpError, LpSolution, LpStatus, Sense, Simplex, SimplexOptions};

use crate::graph::{extract_subgraph, CompGraph, NodeId, Operator, SubgraphSpec};
use crate::relax::{
    interval_propagate_to, preactivation, relu_relaxation, tanh_relaxation, AlphaRule, BoundMap, RelaxError,
    ReluRelaxation,
};
use crate::sets::InputSets;

/// Objectives handled by one worker when solving many directions.
const CHUNK: usize = 8;
/// Relative gap between primal value and dual bound that triggers a cold re-solve.
const DUAL_GAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("input node {0} has no finite bound in some direction")]
    UnboundedInput(NodeId),
    #[error("direction has {got} entries, node has dimension {expected}")]
    DirectionSize { expected: usize, got: usize },
    #[error("LP finished with status {0:?}")]
    Status(LpStatus),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Solver(#[from] LpError),
}

impl From<crate::graph::GraphError> for VerifyError {
    fn from(e: crate::graph::GraphError) -> Self {
        VerifyError::Relax(e.into())
    }
}

/// A constraint row owned by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedRow {
    pub node: NodeId,
    pub row: LinearRow,
}

/// An unstable ReLU neuron: `y = relu(x)` with `lo < 0 < hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNeuron {
    pub node: NodeId,
    pub index: usize,
    pub x: usize,
    pub y: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationLP {
    pub num_vars: usize,
    pub blocks: BTreeMap<NodeId, Range<usize>>,
    pub rows: Vec<TaggedRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Minimized objective; nonzero only on the output block.
    pub objective: Vec<f64>,
    pub output: NodeId,
    /// Preds of each member node, for the separability audit.
    pub pre: BTreeMap<NodeId, Vec<NodeId>>,
    pub unstable: Vec<ReluNeuron>,
}

impl VerificationLP {
    pub fn block(&self, n: NodeId) -> Range<usize> {
        self.blocks[&n].clone()
    }

    /// Indices of rows touching a variable outside their node's own block
    /// and its predecessors' blocks.
    pub fn separability_violations(&self) -> Vec<usize> {
        let owner: Vec<NodeId> = {
            let mut o = vec![NodeId(usize::MAX); self.num_vars];
            for (n, r) in &self.blocks {
                for v in r.clone() {
                    o[v] = *n;
                }
            }
            o
        };
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, tr)| {
                let pre = self.pre.get(&tr.node).map(Vec::as_slice).unwrap_or(&[]);
                tr.row.coeffs.iter().any(|&(v, _)| owner[v] != tr.node && !pre.contains(&owner[v]))
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Set the objective to `c . z_output`.
    pub fn set_direction(&mut self, c: &[f64]) -> Result<(), VerifyError> {
        self.objective = self.direction_objective(c)?;
        Ok(())
    }

    fn direction_objective(&self, c: &[f64]) -> Result<Vec<f64>, VerifyError> {
        let r = self.block(self.output);
        if c.len() != r.len() {
            return Err(VerifyError::DirectionSize { expected: r.len(), got: c.len() });
        }
        let mut obj = vec![0.0; self.num_vars];
        obj[r].copy_from_slice(c);
        Ok(obj)
    }

    /// The LP as a plain program over its original variables.
    pub fn to_program(&self) -> LinearProgram {
        LinearProgram {
            num_vars: self.num_vars,
            objective: self.objective.clone(),
            rows: self.rows.iter().map(|t| t.row.clone()).collect(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation_at(&self, x: &[f64]) -> f64 {
        self.to_program().max_violation(x)
    }

    /// Plain-text dump: one line per variable, then one per row.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (n, r) in &self.blocks {
            for (j, v) in r.clone().enumerate() {
                let _ = writeln!(s, "var {v} {n}[{j}] [{}, {}]", self.lower[v], self.upper[v]);
            }
        }
        for (i, tr) in self.rows.iter().enumerate() {
            let lhs: Vec<String> = tr.row.coeffs.iter().map(|(v, a)| format!("{a}*x{v}")).collect();
            let op = match tr.row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, "row {i} {} {} {op} {}", tr.node, lhs.join(" + "), tr.row.rhs);
        }
        let obj: Vec<String> =
            self.objective.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(v, a)| format!("{a}*x{v}")).collect();
        let _ = writeln!(s, "min {}", obj.join(" + "));
        s
    }
}

/// Assemble the LP bounding the subgraph's output from its boundary sets.
///
/// ReLU neurons contribute the triangle rows (`y >= 0`, `y >= x`, upper
/// chord) when unstable and exact linear rows when stable; tanh neurons
/// contribute their two lines and the output range `[tanh l, tanh u]` as
/// variable bounds.
pub fn build_lp(
    g: &CompGraph,
    sub: &SubgraphSpec,
    sets: &InputSets,
    preact: &BoundMap,
    c: &[f64],
) -> Result<VerificationLP, VerifyError> {
    let mut blocks = BTreeMap::new();
    let mut n_vars = 0;
    for &n in g.order() {
        if sub.boundary.contains(&n) || sub.member_nodes.contains(&n) {
            blocks.insert(n, n_vars..n_vars + g.dim(n));
            n_vars += g.dim(n);
        }
    }
    let mut lp = VerificationLP {
        num_vars: n_vars,
        blocks,
        rows: Vec::new(),
        lower: vec![f64::NEG_INFINITY; n_vars],
        upper: vec![f64::INFINITY; n_vars],
        objective: vec![0.0; n_vars],
        output: sub.output_node,
        pre: BTreeMap::new(),
        unstable: Vec::new(),
    };

    for &s in &sub.boundary {
        let set = sets.get(&s).ok_or(RelaxError::MissingInput(s))?;
        if set.dim() != g.dim(s) {
            return Err(RelaxError::DimensionMismatch { expected: g.dim(s), got: set.dim() }.into());
        }
        let r = lp.block(s);
        for (j, v) in r.clone().enumerate() {
            let (l, h) = (set.bbox.lo[j], set.bbox.hi[j]);
            if !l.is_finite() || !h.is_finite() {
                return Err(VerifyError::UnboundedInput(s));
            }
            lp.lower[v] = l;
            lp.upper[v] = h;
        }
        for hs in &set.halfspaces {
            let coeffs = hs.normal.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (r.start + j, *a)).collect();
            push(&mut lp.rows, s, coeffs, Sense::Ge, hs.offset);
        }
    }

    for n in sub.ordered_members(g) {
        let preds = g.preds(n);
        lp.pre.insert(n, preds.to_vec());
        let out = lp.block(n);
        match g.op(n) {
            Operator::Input => return Err(RelaxError::MissingInput(n).into()),
            Operator::Affine { weight, bias } => {
                let inputs: Vec<usize> = preds.iter().flat_map(|&p| lp.block(p)).collect();
                for (i, (row, b)) in weight.iter().zip(bias).enumerate() {
                    let mut coeffs = vec![(out.start + i, 1.0)];
                    coeffs.extend(inputs.iter().zip(row).filter(|(_, w)| **w != 0.0).map(|(&v, &w)| (v, -w)));
                    push(&mut lp.rows, n, coeffs, Sense::Eq, *b);
                }
            }
            Operator::Add => {
                for j in 0..out.len() {
                    let mut coeffs = vec![(out.start + j, 1.0)];
                    coeffs.extend(preds.iter().map(|&p| (lp.blocks[&p].start + j, -1.0)));
                    push(&mut lp.rows, n, coeffs, Sense::Eq, 0.0);
                }
            }
            Operator::Concat => {
                let inputs: Vec<usize> = preds.iter().flat_map(|&p| lp.block(p)).collect();
                for (j, v) in inputs.into_iter().enumerate() {
                    push(&mut lp.rows, n, vec![(out.start + j, 1.0), (v, -1.0)], Sense::Eq, 0.0);
                }
            }
            Operator::Relu => {
                let ib = preactivation(g, n, preact, sets)?;
                let x0 = lp.blocks[&preds[0]].start;
                for j in 0..out.len() {
                    let (x, y) = (x0 + j, out.start + j);
                    match relu_relaxation(ib.lo[j], ib.hi[j], AlphaRule::Zero)? {
                        ReluRelaxation::Identity => push(&mut lp.rows, n, vec![(y, 1.0), (x, -1.0)], Sense::Eq, 0.0),
                        ReluRelaxation::Zero => push(&mut lp.rows, n, vec![(y, 1.0)], Sense::Eq, 0.0),
                        ReluRelaxation::Unstable { upper_slope, upper_intercept, .. } => {
                            // implied by the rows below; keeps every reduced column bounded
                            lp.lower[y] = 0.0;
                            lp.upper[y] = ib.hi[j];
                            push(&mut lp.rows, n, vec![(y, 1.0)], Sense::Ge, 0.0);
                            push(&mut lp.rows, n, vec![(y, 1.0), (x, -1.0)], Sense::Ge, 0.0);
                            let coeffs = if upper_slope == 0.0 { vec![(y, 1.0)] } else { vec![(y, 1.0), (x, -upper_slope)] };
                            push(&mut lp.rows, n, coeffs, Sense::Le, upper_intercept);
                            lp.unstable.push(ReluNeuron { node: n, index: j, x, y, lo: ib.lo[j], hi: ib.hi[j] });
                        }
                    }
                }
            }
            Operator::Tanh => {
                let ib = preactivation(g, n, preact, sets)?;
                let x0 = lp.blocks[&preds[0]].start;
                for j in 0..out.len() {
                    let (x, y) = (x0 + j, out.start + j);
                    let t = tanh_relaxation(ib.lo[j], ib.hi[j])?;
                    lp.lower[y] = ib.lo[j].tanh();
                    lp.upper[y] = ib.hi[j].tanh();
                    let line = |s: f64| if s == 0.0 { vec![(y, 1.0)] } else { vec![(y, 1.0), (x, -s)] };
                    push(&mut lp.rows, n, line(t.lower_slope), Sense::Ge, t.lower_intercept);
                    push(&mut lp.rows, n, line(t.upper_slope), Sense::Le, t.upper_intercept);
                }
            }
        }
    }
    lp.set_direction(c)?;
    Ok(lp)
}

/// A verification LP after substituting equality-defined variables, with
/// phase 1 already done. Many objectives can be minimized in turn.
#[derive(Debug, Clone)]
pub struct PreparedLp {
    /// Column count of the reduced program.
    pub cols: usize,
    /// `x_v = exprs[v] . cols + consts[v]` for every original variable.
    exprs: Arc<Vec<Vec<f64>>>,
    consts: Arc<Vec<f64>>,
    base: LinearProgram,
    feasible: bool,
    simplex: Option<Simplex>,
    output: Range<usize>,
}

impl PreparedLp {
    pub fn new(lp: &VerificationLP) -> Result<Self, VerifyError> {
        Self::with_rows(lp, &[])
    }

    /// Prepare `lp` with additional rows over its original variables.
    pub fn with_rows(lp: &VerificationLP, extra: &[TaggedRow]) -> Result<Self, VerifyError> {
        Self::reduce(lp).branch(extra)
    }

    /// A copy of this problem (without its solver state) with extra rows
    /// over the original variables, ready to solve.
    pub fn branch(&self, extra: &[TaggedRow]) -> Result<Self, VerifyError> {
        let mut base = self.base.clone();
        let mut feasible = self.feasible;
        for tr in extra {
            feasible &= self.push_reduced(&mut base, &tr.row);
        }
        let simplex = if feasible { Some(Simplex::new(&base, SimplexOptions::default())?) } else { None };
        Ok(Self {
            cols: self.cols,
            exprs: Arc::clone(&self.exprs),
            consts: Arc::clone(&self.consts),
            base,
            feasible,
            simplex,
            output: self.output.clone(),
        })
    }

    /// Substitute equality-defined variables; no solver state yet.
    pub(crate) fn reduce(lp: &VerificationLP) -> Self {
        let n = lp.num_vars;
        let owner: Vec<NodeId> = {
            let mut o = vec![NodeId(0); n];
            for (node, r) in &lp.blocks {
                for v in r.clone() {
                    o[v] = *node;
                }
            }
            o
        };
        // which equality rows define which variable
        let mut defined_by: Vec<Option<usize>> = vec![None; n];
        let mut defining = vec![false; lp.rows.len()];
        for (i, tr) in lp.rows.iter().enumerate() {
            if tr.row.sense != Sense::Eq {
                continue;
            }
            let own: Vec<usize> = tr.row.coeffs.iter().filter(|(v, _)| owner[*v] == tr.node).map(|(v, _)| *v).collect();
            if let [v] = own[..] {
                if defined_by[v].is_none() && lp.lower[v] == f64::NEG_INFINITY && lp.upper[v] == f64::INFINITY {
                    defined_by[v] = Some(i);
                    defining[i] = true;
                }
            }
        }
        let free: Vec<usize> = (0..n).filter(|&v| defined_by[v].is_none()).collect();
        let cols = free.len();
        let mut exprs = vec![Vec::new(); n];
        let mut consts = vec![0.0; n];
        for (c, &v) in free.iter().enumerate() {
            let mut e = vec![0.0; cols];
            e[c] = 1.0;
            exprs[v] = e;
        }
        for (i, tr) in lp.rows.iter().enumerate() {
            if !defining[i] {
                continue;
            }
            let (target, a) = *tr.row.coeffs.iter().find(|(v, _)| defined_by[*v] == Some(i)).expect("defining row");
            let mut e = vec![0.0; cols];
            let mut k = tr.row.rhs;
            for &(v, b) in &tr.row.coeffs {
                if v == target {
                    continue;
                }
                debug_assert!(!exprs[v].is_empty(), "substitution follows row order");
                for (ei, xi) in e.iter_mut().zip(&exprs[v]) {
                    *ei -= b * xi;
                }
                k -= b * consts[v];
            }
            e.iter_mut().for_each(|x| *x /= a);
            exprs[target] = e;
            consts[target] = k / a;
        }

        let mut base = LinearProgram::new(cols);
        for (c, &v) in free.iter().enumerate() {
            base.lower[c] = lp.lower[v];
            base.upper[c] = lp.upper[v];
        }
        let mut p = PreparedLp {
            cols,
            exprs: Arc::new(exprs),
            consts: Arc::new(consts),
            base: LinearProgram::new(0),
            feasible: true,
            simplex: None,
            output: lp.block(lp.output),
        };
        for (i, tr) in lp.rows.iter().enumerate() {
            if !defining[i] {
                p.feasible &= p.push_reduced(&mut base, &tr.row);
            }
        }
        p.base = base;
        p
    }

    /// Substitute and append a row; single-column rows become bounds.
    /// Returns false if the row is a violated constant.
    fn push_reduced(&self, lp: &mut LinearProgram, row: &LinearRow) -> bool {
        let mut e = vec![0.0; self.cols];
        let mut k = row.rhs;
        for &(v, a) in &row.coeffs {
            for (ei, xi) in e.iter_mut().zip(&self.exprs[v]) {
                *ei += a * xi;
            }
            k -= a * self.consts[v];
        }
        let nz: Vec<(usize, f64)> = e.into_iter().enumerate().filter(|(_, a)| *a != 0.0).collect();
        match nz[..] {
            [] => {
                let tol = 1e-9 * (1.0 + k.abs());
                match row.sense {
                    Sense::Le => k >= -tol,
                    Sense::Ge => k <= tol,
                    Sense::Eq => k.abs() <= tol,
                }
            }
            [(c, a)] => {
                let b = k / a;
                let sense = if a > 0.0 { row.sense } else { flip(row.sense) };
                if matches!(sense, Sense::Ge | Sense::Eq) {
                    lp.lower[c] = lp.lower[c].max(b);
                }
                if matches!(sense, Sense::Le | Sense::Eq) {
                    lp.upper[c] = lp.upper[c].min(b);
                }
                if lp.lower[c] > lp.upper[c] {
                    // keep the program well formed; rounding can cross a point bound
                    if lp.lower[c] - lp.upper[c] <= 1e-9 * (1.0 + b.abs()) {
                        let m = 0.5 * (lp.lower[c] + lp.upper[c]);
                        lp.lower[c] = m;
                        lp.upper[c] = m;
                    } else {
                        return false;
                    }
                }
                true
            }
            _ => {
                lp.add_row(nz, row.sense, k);
                true
            }
        }
    }

    pub fn is_infeasible(&self) -> bool {
        self.simplex.as_ref().map_or(true, Simplex::is_infeasible)
    }

    /// Reduced objective and constant for a full-length objective.
    fn reduce_objective(&self, objective: &[f64]) -> (Vec<f64>, f64) {
        let mut e = vec![0.0; self.cols];
        let mut k = 0.0;
        for (v, &a) in objective.iter().enumerate() {
            if a != 0.0 {
                for (ei, xi) in e.iter_mut().zip(&self.exprs[v]) {
                    *ei += a * xi;
                }
                k += a * self.consts[v];
            }
        }
        (e, k)
    }

    /// Minimize a full-length objective. The returned `x` holds the
    /// reduced column values; see [`PreparedLp::value`].
    pub fn minimize(&mut self, objective: &[f64]) -> Result<LpSolution, VerifyError> {
        let (e, k) = self.reduce_objective(objective);
        let Some(simplex) = self.simplex.as_mut() else {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                bound: f64::NAN,
                x: Vec::new(),
                pivots: 0,
            });
        };
        let mut sol = simplex.minimize(&e)?;
        sol.objective += k;
        sol.bound += k;
        Ok(sol)
    }

    /// Minimize `c . z_output`.
    pub fn minimize_direction(&mut self, c: &[f64]) -> Result<LpSolution, VerifyError> {
        let mut obj = vec![0.0; self.exprs.len()];
        if c.len() != self.output.len() {
            return Err(VerifyError::DirectionSize { expected: self.output.len(), got: c.len() });
        }
        obj[self.output.clone()].copy_from_slice(c);
        self.minimize(&obj)
    }

    /// Original variable `v` at a reduced solution.
    pub fn value(&self, cols: &[f64], v: usize) -> f64 {
        self.exprs[v].iter().zip(cols).map(|(a, x)| a * x).sum::<f64>() + self.consts[v]
    }

    /// All original variables at a reduced solution.
    pub fn expand(&self, cols: &[f64]) -> Vec<f64> {
        (0..self.exprs.len()).map(|v| self.value(cols, v)).collect()
    }

    /// Lower bounds for many directions on the output block, solved in
    /// parallel chunks, each from its own copy of the phase-1 basis.
    pub fn minimize_directions(&self, dirs: &[Vec<f64>]) -> Vec<Result<f64, VerifyError>> {
        let reduced: Vec<Result<(Vec<f64>, f64), VerifyError>> = dirs
            .iter()
            .map(|c| {
                if c.len() != self.output.len() {
                    return Err(VerifyError::DirectionSize { expected: self.output.len(), got: c.len() });
                }
                let mut obj = vec![0.0; self.exprs.len()];
                obj[self.output.clone()].copy_from_slice(c);
                Ok(self.reduce_objective(&obj))
            })
            .collect();
        let Some(simplex) = self.simplex.as_ref() else {
            return dirs.iter().map(|_| Err(VerifyError::Status(LpStatus::Infeasible))).collect();
        };
        reduced
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let mut sx = simplex.clone();
                chunk
                    .iter()
                    .map(|r| {
                        let (e, k) = r.as_ref().map_err(Clone::clone)?;
                        let sol = sx.minimize(e)?;
                        if sol.status != LpStatus::Optimal {
                            return Err(VerifyError::Status(sol.status));
                        }
                        let mut bound = sol.bound;
                        if !(bound >= sol.objective - DUAL_GAP * (1.0 + sol.objective.abs())) {
                            // the warm basis drifted; retry from the phase-1 basis
                            let again = simplex.clone().minimize(e)?;
                            if again.status == LpStatus::Optimal {
                                bound = bound.max(again.bound);
                            }
                        }
                        Ok(bound + k)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

fn push(rows: &mut Vec<TaggedRow>, node: NodeId, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
    rows.push(TaggedRow { node, row: LinearRow { coeffs, sense, rhs } });
}

fn flip(s: Sense) -> Sense {
    match s {
        Sense::Le => Sense::Ge,
        Sense::Ge => Sense::Le,
        Sense::Eq => Sense::Eq,
    }
}

/// Solve the LP as built, with the original variables in `x`.
pub fn solve_lp(lp: &VerificationLP) -> Result<LpSolution, VerifyError> {
    let mut p = PreparedLp::new(lp)?;
    let mut sol = p.minimize(&lp.objective)?;
    if sol.status == LpStatus::Optimal {
        sol.x = p.expand(&sol.x);
    }
    Ok(sol)
}

/// Where the LP propagator takes its preactivation bounds from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreactSource {
    /// Solve the LP itself, layer by layer.
    #[default]
    SelfBootstrap,
    Interval,
}

/// LP-computed preactivation bounds for every activation feeding `target`.
///
/// Each preactivation node is bounded by the LP over its own ancestors,
/// using the bounds already found for earlier layers. Neurons stable under
/// interval bounds are not refined. A neuron whose LP fails keeps its
/// interval bound.
pub fn lp_preactivations(g: &CompGraph, target: NodeId, sets: &InputSets) -> Result<BoundMap, VerifyError> {
    let mut pre = BoundMap::new();
    extend_lp_preactivations(g, target, sets, &mut pre)?;
    Ok(pre)
}

/// As [`lp_preactivations`], keeping and reusing whatever `pre` already
/// holds (bounds for the same source sets).
pub fn extend_lp_preactivations(
    g: &CompGraph,
    target: NodeId,
    sets: &InputSets,
    pre: &mut BoundMap,
) -> Result<(), VerifyError> {
    let ibp = interval_propagate_to(g, sets, target)?;
    let stops: BTreeSet<NodeId> = sets.keys().copied().collect();
    for n in g.order() {
        if !ibp.contains_key(n) || !g.op(*n).is_activation() {
            continue;
        }
        let p = g.preds(*n)[0];
        if sets.contains_key(&p) || pre.contains_key(&p) {
            continue;
        }
        let mut ib = ibp[&p].clone();
        let wanted = crate::relax::refinable_neurons(g, p, &ib);
        if !wanted.is_empty() {
            let sub = extract_subgraph(g, &stops, p)?;
            let d = g.dim(p);
            let lp = build_lp(g, &sub, sets, pre, &vec![0.0; d])?;
            let prepared = PreparedLp::new(&lp)?;
            let mut dirs = Vec::with_capacity(2 * wanted.len());
            for &j in &wanted {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                dirs.push(e.clone());
                e[j] = -1.0;
                dirs.push(e);
            }
            let vals: Vec<f64> = prepared
                .minimize_directions(&dirs)
                .into_iter()
                .map(|r| {
                    r.unwrap_or_else(|e| {
                        log::warn!("preactivation LP for {p} failed ({e}); keeping interval bound");
                        f64::NEG_INFINITY
                    })
                })
                .collect();
            crate::relax::tighten_bounds(&mut ib, &wanted, &vals);
        }
        pre.insert(p, ib);
    }
    Ok(())
}

/// Interval-only preactivation bounds for every activation feeding `target`.
pub fn interval_preactivations(g: &CompGraph, target: NodeId, sets: &InputSets) -> Result<BoundMap, VerifyError> {
    let ibp = interval_propagate_to(g, sets, target)?;
    Ok(ibp
        .into_iter()
        .filter(|(n, _)| !sets.contains_key(n) && g.succs(*n).iter().any(|&s| g.op(s).is_activation()))
        .collect())
}

/// LP lower bounds on `d . z_target` for each direction.
pub fn lp_bounds(
    g: &CompGraph,
    target: NodeId,
    dirs: &[Vec<f64>],
    sets: &InputSets,
    preact: &BoundMap,
) -> Result<Vec<Result<f64, VerifyError>>, VerifyError> {
    if let Some(s) = sets.get(&target) {
        return Ok(s.min_linear_many(dirs)?.into_iter().map(Ok).collect());
    }
    let stops: BTreeSet<NodeId> = sets.keys().copied().collect();
    let sub = extract_subgraph(g, &stops, target)?;
    let lp = build_lp(g, &sub, sets, preact, &vec![0.0; g.dim(target)])?;
    let prepared = PreparedLp::new(&lp)?;
    Ok(prepared.minimize_directions(dirs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::relax::IntervalBound;
    use crate::sets::{Halfspace, InputSet};

    fn single(lo: Vec<f64>, hi: Vec<f64>, id: NodeId) -> InputSets {
        [(id, InputSet::from(IntervalBound::new(lo, hi).unwrap()))].into()
    }

    fn lp_for(g: &CompGraph, sets: &InputSets, c: &[f64]) -> VerificationLP {
        let stops = sets.keys().copied().collect();
        let sub = extract_subgraph(g, &stops, g.output()).unwrap();
        let pre = lp_preactivations(g, g.output(), sets).unwrap();
        build_lp(g, &sub, sets, &pre, c).unwrap()
    }

    #[test]
    fn single_relu_triangle() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.relu(x);
        let g = b.finish(y).unwrap();
        let sets = single(vec![-1.0], vec![1.0], x);
        let lp = lp_for(&g, &sets, &[1.0]);
        assert_eq!(lp.rows.len(), 3);
        assert!(lp.separability_violations().is_empty());
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective.abs() < 1e-12);
        let lp = lp_for(&g, &sets, &[-1.0]);
        assert!((solve_lp(&lp).unwrap().objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_chain_matches_box_support() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let h = b.affine(&[x], vec![vec![1.0, -2.0], vec![0.5, 0.5]], vec![1.0, 0.0]);
        let y = b.affine(&[h], vec![vec![1.0, 1.0]], vec![0.0]);
        let g = b.finish(y).unwrap();
        let sets = single(vec![-1.0, -1.0], vec![1.0, 1.0], x);
        // y = 1.5 x1 - 1.5 x2 + 1
        let sol = solve_lp(&lp_for(&g, &sets, &[1.0])).unwrap();
        assert!((sol.objective - (1.0 - 3.0)).abs() < 1e-12);
        let lp = lp_for(&g, &sets, &[1.0]);
        assert!(lp.max_violation_at(&sol.x) < 1e-8);
    }

    #[test]
    fn unbounded_input_rejected() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.affine(&[x], vec![vec![1.0]], vec![0.0]);
        let g = b.finish(y).unwrap();
        let sets: InputSets = [(x, InputSet { bbox: IntervalBound { lo: vec![0.0], hi: vec![f64::INFINITY] }, halfspaces: vec![] })].into();
        let sub = extract_subgraph(&g, &[x].into(), y).unwrap();
        assert_eq!(build_lp(&g, &sub, &sets, &BoundMap::new(), &[1.0]), Err(VerifyError::UnboundedInput(x)));
    }

    #[test]
    fn polytope_input() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let y = b.affine(&[x], vec![vec![1.0, 1.0]], vec![0.0]);
        let g = b.finish(y).unwrap();
        let mut set = InputSet::from(IntervalBound::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        set.halfspaces.push(Halfspace { normal: vec![1.0, 1.0], offset: 0.5 });
        let sets: InputSets = [(x, set)].into();
        let v = lp_bounds(&g, y, &[vec![1.0], vec![-1.0]], &sets, &BoundMap::new()).unwrap();
        assert!((v[0].clone().unwrap() - 0.5).abs() < 1e-12);
        assert!((v[1].clone().unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn dump_lists_rows() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.relu(x);
        let g = b.finish(y).unwrap();
        let lp = lp_for(&g, &single(vec![-1.0], vec![2.0], x), &[1.0]);
        let text = lp.dump();
        assert_eq!(text.lines().filter(|l| l.starts_with("row")).count(), 3);
        assert!(text.contains("min 1*x1"));
    }
}
