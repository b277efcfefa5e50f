//! Computational-graph IR for neural networks.
//!
//! A [`CompGraph`] is a validated DAG of operators. The same representation
//! carries a single step of a neural-network dynamical system and its
//! unrolled multi-step composition (see [`unroll`]).
//!
//! Node ids are dense indices `0..len`. Topological sorting returns a
//! permutation of the ids and never renames nodes.

mod builder;
mod eval;
mod extract;
pub mod json;
mod unroll;

pub use json::{Network, NetworkFileError};
pub use builder::GraphBuilder;
pub use eval::{evaluate, evaluate_all};
pub use extract::{extract_subgraph, SubgraphSpec};
pub use unroll::{unroll, Unrolled};

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node inside a [`CompGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z{}", self.0)
    }
}

/// Errors raised while building or transforming a graph.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,

    #[error("node ids must be unique and dense in 0..{len}; offending id {id}")]
    InvalidNodeId { id: usize, len: usize },

    #[error("cycle detected involving node {0}")]
    CycleDetected(NodeId),

    #[error("node {node}: expected {expected} input(s), found {found}")]
    ArityMismatch {
        node: NodeId,
        expected: String,
        found: usize,
    },

    #[error("node {node}: dimension mismatch ({detail})")]
    DimensionMismatch { node: NodeId, detail: String },

    #[error("edge {src} -> {dst} (slot {slot}) references a missing node or slot")]
    DanglingEdge { src: NodeId, dst: NodeId, slot: usize },

    #[error("output node {0} is not reachable from the requested inputs")]
    UnreachableOutput(NodeId),

    #[error("input list is invalid: {0}")]
    InvalidInputs(String),

    #[error("state dimension mismatch: output has dim {output}, state input has dim {state}")]
    StateDimMismatch { output: usize, state: usize },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Node operator. Affine maps act on the concatenation of all their inputs
/// in slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operator {
    Input,
    Affine { weight: Vec<Vec<f64>>, bias: Vec<f64> },
    Relu,
    Tanh,
    Add,
    Concat,
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Input => "input",
            Operator::Affine { .. } => "affine",
            Operator::Relu => "relu",
            Operator::Tanh => "tanh",
            Operator::Add => "add",
            Operator::Concat => "concat",
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, Operator::Relu | Operator::Tanh)
    }

    /// Whether the node output is an affine function of its inputs.
    pub fn is_linear(&self) -> bool {
        matches!(self, Operator::Affine { .. } | Operator::Add | Operator::Concat)
    }
}

/// A node together with its operator and output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub op: Operator,
    pub dim: usize,
}

/// Directed edge: `src` feeds argument `slot` of `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub slot: usize,
}

/// Validated, immutable computational graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CompGraph {
    nodes: Vec<Node>,
    preds: Vec<Vec<NodeId>>,
    succs: Vec<Vec<NodeId>>,
    inputs: Vec<NodeId>,
    output: NodeId,
    order: Vec<NodeId>,
}

/// Validate the pieces of a graph and assemble a [`CompGraph`].
pub fn build_graph(
    nodes: Vec<(NodeId, Operator, usize)>,
    edges: Vec<Edge>,
    inputs: Vec<NodeId>,
    output: NodeId,
) -> Result<CompGraph> {
    if nodes.is_empty() {
        return Err(GraphError::Empty);
    }
    let len = nodes.len();
    let mut slots: Vec<Option<Node>> = vec![None; len];
    for (id, op, dim) in nodes {
        if id.0 >= len || slots[id.0].is_some() {
            return Err(GraphError::InvalidNodeId { id: id.0, len });
        }
        slots[id.0] = Some(Node { id, op, dim });
    }
    let nodes: Vec<Node> = slots.into_iter().map(|n| n.expect("dense ids")).collect();

    let mut slotted: Vec<Vec<Option<NodeId>>> = vec![Vec::new(); len];
    for e in &edges {
        if e.src.0 >= len || e.dst.0 >= len {
            return Err(GraphError::DanglingEdge { src: e.src, dst: e.dst, slot: e.slot });
        }
        let row = &mut slotted[e.dst.0];
        if row.len() <= e.slot {
            row.resize(e.slot + 1, None);
        }
        if row[e.slot].is_some() {
            return Err(GraphError::DanglingEdge { src: e.src, dst: e.dst, slot: e.slot });
        }
        row[e.slot] = Some(e.src);
    }
    let mut preds = Vec::with_capacity(len);
    for (i, row) in slotted.into_iter().enumerate() {
        let mut p = Vec::with_capacity(row.len());
        for (slot, src) in row.into_iter().enumerate() {
            match src {
                Some(s) => p.push(s),
                None => {
                    return Err(GraphError::DanglingEdge { src: NodeId(i), dst: NodeId(i), slot })
                }
            }
        }
        preds.push(p);
    }

    let mut succs = vec![Vec::new(); len];
    for (dst, p) in preds.iter().enumerate() {
        for &src in p {
            succs[src.0].push(NodeId(dst));
        }
    }

    for node in &nodes {
        check_node(node, &preds[node.id.0], &nodes)?;
    }

    let mut seen = BTreeSet::new();
    for &i in &inputs {
        if i.0 >= len || !matches!(nodes[i.0].op, Operator::Input) || !seen.insert(i) {
            return Err(GraphError::InvalidInputs(format!("{i} is not a distinct input node")));
        }
    }
    let declared: usize = nodes.iter().filter(|n| matches!(n.op, Operator::Input)).count();
    if declared != inputs.len() {
        return Err(GraphError::InvalidInputs(format!(
            "{declared} input nodes present but {} listed",
            inputs.len()
        )));
    }
    if output.0 >= len {
        return Err(GraphError::InvalidNodeId { id: output.0, len });
    }

    let order = kahn_order(&preds, &succs)?;

    let g = CompGraph { nodes, preds, succs, inputs, output, order };
    if !g.ancestors(output).iter().any(|n| g.inputs.contains(n)) {
        return Err(GraphError::UnreachableOutput(output));
    }
    Ok(g)
}

fn check_node(node: &Node, preds: &[NodeId], nodes: &[Node]) -> Result<()> {
    let id = node.id;
    let arity = preds.len();
    let in_dims: Vec<usize> = preds.iter().map(|p| nodes[p.0].dim).collect();
    let arity_err = |expected: &str| GraphError::ArityMismatch {
        node: id,
        expected: expected.to_string(),
        found: arity,
    };
    let dim_err = |detail: String| GraphError::DimensionMismatch { node: id, detail };
    if node.dim == 0 {
        return Err(dim_err("zero-dimensional node".into()));
    }
    match &node.op {
        Operator::Input => {
            if arity != 0 {
                return Err(arity_err("0"));
            }
        }
        Operator::Affine { weight, bias } => {
            if arity == 0 {
                return Err(arity_err(">= 1"));
            }
            let cols: usize = in_dims.iter().sum();
            if weight.len() != node.dim || bias.len() != node.dim {
                return Err(dim_err(format!(
                    "W has {} rows and b has {} entries, node dim {}",
                    weight.len(),
                    bias.len(),
                    node.dim
                )));
            }
            if let Some(r) = weight.iter().position(|row| row.len() != cols) {
                return Err(dim_err(format!(
                    "W row {r} has {} columns, total input dim is {cols}",
                    weight[r].len()
                )));
            }
        }
        Operator::Relu | Operator::Tanh => {
            if arity != 1 {
                return Err(arity_err("1"));
            }
            if in_dims[0] != node.dim {
                return Err(dim_err(format!("elementwise op: input {} vs output {}", in_dims[0], node.dim)));
            }
        }
        Operator::Add => {
            if arity < 2 {
                return Err(arity_err(">= 2"));
            }
            if in_dims.iter().any(|&d| d != node.dim) {
                return Err(dim_err(format!("add inputs {in_dims:?} vs output {}", node.dim)));
            }
        }
        Operator::Concat => {
            if arity == 0 {
                return Err(arity_err(">= 1"));
            }
            let total: usize = in_dims.iter().sum();
            if total != node.dim {
                return Err(dim_err(format!("concat of {in_dims:?} has dim {total}, declared {}", node.dim)));
            }
        }
    }
    Ok(())
}

/// Kahn's algorithm with a min-heap so ties resolve by ascending id.
fn kahn_order(preds: &[Vec<NodeId>], succs: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let len = preds.len();
    let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..len).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(len);
    while let Some(Reverse(i)) = heap.pop() {
        order.push(NodeId(i));
        for s in &succs[i] {
            indeg[s.0] -= 1;
            if indeg[s.0] == 0 {
                heap.push(Reverse(s.0));
            }
        }
    }
    if order.len() != len {
        let stuck = (0..len).find(|&i| indeg[i] > 0).unwrap_or(0);
        return Err(GraphError::CycleDetected(NodeId(stuck)));
    }
    Ok(order)
}

/// Deterministic topological order; ties are broken by ascending id.
pub fn topological_order(g: &CompGraph) -> Vec<NodeId> {
    g.order.clone()
}

impl CompGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn op(&self, id: NodeId) -> &Operator {
        &self.nodes[id.0].op
    }

    pub fn dim(&self, id: NodeId) -> usize {
        self.nodes[id.0].dim
    }

    /// Arguments of `id` in slot order.
    pub fn preds(&self, id: NodeId) -> &[NodeId] {
        &self.preds[id.0]
    }

    pub fn succs(&self, id: NodeId) -> &[NodeId] {
        &self.succs[id.0]
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    /// Cached topological order.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (dst, p) in self.preds.iter().enumerate() {
            for (slot, &src) in p.iter().enumerate() {
                out.push(Edge { src, dst: NodeId(dst), slot });
            }
        }
        out
    }

    /// Total dimension of all input nodes.
    pub fn input_dim(&self) -> usize {
        self.inputs.iter().map(|&i| self.dim(i)).sum()
    }

    /// `id` and every node it depends on.
    pub fn ancestors(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.preds(n).iter().copied());
            }
        }
        seen
    }

    /// Return a copy of this graph with a different output node.
    pub fn with_output(&self, output: NodeId) -> Result<CompGraph> {
        if output.0 >= self.len() {
            return Err(GraphError::InvalidNodeId { id: output.0, len: self.len() });
        }
        let mut g = self.clone();
        g.output = output;
        if !g.ancestors(output).iter().any(|n| g.inputs.contains(n)) {
            return Err(GraphError::UnreachableOutput(output));
        }
        Ok(g)
    }

    /// Activation nodes (ReLU/Tanh) in topological order.
    pub fn activation_nodes(&self) -> Vec<NodeId> {
        self.order.iter().copied().filter(|&n| self.op(n).is_activation()).collect()
    }

    /// Deconstruct into the parts accepted by [`build_graph`].
    pub fn to_parts(&self) -> (Vec<(NodeId, Operator, usize)>, Vec<Edge>, Vec<NodeId>, NodeId) {
        let nodes = self.nodes.iter().map(|n| (n.id, n.op.clone(), n.dim)).collect();
        (nodes, self.edges(), self.inputs.clone(), self.output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity2() -> Operator {
        Operator::Affine { weight: vec![vec![1.0, 0.0], vec![0.0, 1.0]], bias: vec![0.0, 0.0] }
    }

    #[test]
    fn single_affine_identity() {
        let g = build_graph(
            vec![(NodeId(0), Operator::Input, 2), (NodeId(1), identity2(), 2)],
            vec![Edge { src: NodeId(0), dst: NodeId(1), slot: 0 }],
            vec![NodeId(0)],
            NodeId(1),
        )
        .unwrap();
        assert_eq!(g.dim(g.output()), 2);
        assert_eq!(evaluate(&g, &[vec![3.0, -1.0]]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let err = build_graph(
            vec![
                (NodeId(0), Operator::Input, 2),
                (NodeId(1), Operator::Add, 2),
                (NodeId(2), Operator::Add, 2),
            ],
            vec![
                Edge { src: NodeId(0), dst: NodeId(1), slot: 0 },
                Edge { src: NodeId(2), dst: NodeId(1), slot: 1 },
                Edge { src: NodeId(0), dst: NodeId(2), slot: 0 },
                Edge { src: NodeId(1), dst: NodeId(2), slot: 1 },
            ],
            vec![NodeId(0)],
            NodeId(2),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::CycleDetected(_)));
    }

    #[test]
    fn arity_and_dims_checked() {
        let err = build_graph(
            vec![(NodeId(0), Operator::Input, 2), (NodeId(1), Operator::Add, 2)],
            vec![Edge { src: NodeId(0), dst: NodeId(1), slot: 0 }],
            vec![NodeId(0)],
            NodeId(1),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::ArityMismatch { .. }));

        let err = build_graph(
            vec![(NodeId(0), Operator::Input, 3), (NodeId(1), identity2(), 2)],
            vec![Edge { src: NodeId(0), dst: NodeId(1), slot: 0 }],
            vec![NodeId(0)],
            NodeId(1),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DimensionMismatch { .. }));

        let err = build_graph(
            vec![(NodeId(0), Operator::Input, 2), (NodeId(1), Operator::Relu, 2)],
            vec![Edge { src: NodeId(7), dst: NodeId(1), slot: 0 }],
            vec![NodeId(0)],
            NodeId(1),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DanglingEdge { .. }));
    }

    #[test]
    fn chain_and_diamond_orders() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let h = b.relu(x);
        let y = b.tanh(h);
        let g = b.finish(y).unwrap();
        assert_eq!(topological_order(&g), vec![x, h, y]);

        // diamond: x -> {a, b} -> c, ids assigned so that b < a would be tempting
        let g = build_graph(
            vec![
                (NodeId(0), Operator::Input, 1),
                (NodeId(1), Operator::Relu, 1),
                (NodeId(2), Operator::Tanh, 1),
                (NodeId(3), Operator::Add, 1),
            ],
            vec![
                Edge { src: NodeId(0), dst: NodeId(2), slot: 0 },
                Edge { src: NodeId(0), dst: NodeId(1), slot: 0 },
                Edge { src: NodeId(2), dst: NodeId(3), slot: 0 },
                Edge { src: NodeId(1), dst: NodeId(3), slot: 1 },
            ],
            vec![NodeId(0)],
            NodeId(3),
        )
        .unwrap();
        assert_eq!(topological_order(&g), vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
    }
}
