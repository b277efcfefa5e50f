use super::{build_graph, CompGraph, Edge, NodeId, Operator, Result};

/// Incremental constructor for [`CompGraph`]s.
///
/// Ids are handed out in creation order, so a builder-produced graph is
/// already topologically numbered.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<(NodeId, Operator, usize)>,
    edges: Vec<Edge>,
    inputs: Vec<NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn dim_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].2
    }

    fn push(&mut self, op: Operator, dim: usize, args: &[NodeId]) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push((id, op, dim));
        for (slot, &src) in args.iter().enumerate() {
            self.edges.push(Edge { src, dst: id, slot });
        }
        id
    }

    pub fn input(&mut self, dim: usize) -> NodeId {
        let id = self.push(Operator::Input, dim, &[]);
        self.inputs.push(id);
        id
    }

    /// Affine map over the concatenation of `args`.
    pub fn affine(&mut self, args: &[NodeId], weight: Vec<Vec<f64>>, bias: Vec<f64>) -> NodeId {
        let dim = bias.len();
        self.push(Operator::Affine { weight, bias }, dim, args)
    }

    pub fn relu(&mut self, arg: NodeId) -> NodeId {
        let dim = self.dim_of(arg);
        self.push(Operator::Relu, dim, &[arg])
    }

    pub fn tanh(&mut self, arg: NodeId) -> NodeId {
        let dim = self.dim_of(arg);
        self.push(Operator::Tanh, dim, &[arg])
    }

    pub fn add(&mut self, args: &[NodeId]) -> NodeId {
        let dim = args.first().map(|&a| self.dim_of(a)).unwrap_or(0);
        self.push(Operator::Add, dim, args)
    }

    pub fn concat(&mut self, args: &[NodeId]) -> NodeId {
        let dim = args.iter().map(|&a| self.dim_of(a)).sum();
        self.push(Operator::Concat, dim, args)
    }

    pub fn finish(self, output: NodeId) -> Result<CompGraph> {
        build_graph(self.nodes, self.edges, self.inputs, output)
    }
}
