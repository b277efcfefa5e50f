use std::collections::{BTreeSet, VecDeque};

use super::{CompGraph, GraphError, NodeId, Result};

/// Nodes whose constraints belong to the subproblem bounding `output_node`
/// from `input_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphSpec {
    pub input_nodes: BTreeSet<NodeId>,
    pub output_node: NodeId,
    /// Visited dependent nodes, including `output_node`.
    pub member_nodes: BTreeSet<NodeId>,
    /// Members of `input_nodes` actually reached by the search.
    pub boundary: BTreeSet<NodeId>,
}

impl SubgraphSpec {
    /// Members in topological order of `g`.
    pub fn ordered_members(&self, g: &CompGraph) -> Vec<NodeId> {
        g.order().iter().copied().filter(|n| self.member_nodes.contains(n)).collect()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.member_nodes.contains(&id)
    }
}

/// Breadth-first constraint extraction from `output_node` back towards the
/// inputs, stopping at any node in `input_nodes`.
///
/// Concretized intermediate nodes can be passed as stop nodes; nothing
/// upstream of them is visited unless it is reachable along another path.
pub fn extract_subgraph(
    g: &CompGraph,
    input_nodes: &BTreeSet<NodeId>,
    output_node: NodeId,
) -> Result<SubgraphSpec> {
    if output_node.0 >= g.len() {
        return Err(GraphError::InvalidNodeId { id: output_node.0, len: g.len() });
    }
    if let Some(bad) = input_nodes.iter().find(|n| n.0 >= g.len()) {
        return Err(GraphError::InvalidNodeId { id: bad.0, len: g.len() });
    }

    let mut explored = vec![false; g.len()];
    let mut members = BTreeSet::new();
    let mut boundary = BTreeSet::new();
    let mut queue = VecDeque::new();
    queue.push_back(output_node);
    explored[output_node.0] = true;
    while let Some(zi) = queue.pop_front() {
        members.insert(zi);
        for &zj in g.preds(zi) {
            if input_nodes.contains(&zj) {
                boundary.insert(zj);
            } else if !explored[zj.0] {
                queue.push_back(zj);
                explored[zj.0] = true;
            }
        }
    }

    if boundary.is_empty() {
        return Err(GraphError::UnreachableOutput(output_node));
    }
    Ok(SubgraphSpec {
        input_nodes: input_nodes.clone(),
        output_node,
        member_nodes: members,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn chain() -> (CompGraph, [NodeId; 4]) {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let a = b.affine(&[x], vec![vec![2.0]], vec![0.0]);
        let r = b.relu(a);
        let y = b.affine(&[r], vec![vec![1.0]], vec![1.0]);
        (b.finish(y).unwrap(), [x, a, r, y])
    }

    #[test]
    fn full_chain() {
        let (g, [x, a, r, y]) = chain();
        let s = extract_subgraph(&g, &[x].into(), y).unwrap();
        assert_eq!(s.member_nodes, [a, r, y].into());
        assert_eq!(s.boundary, [x].into());
    }

    #[test]
    fn concretized_node_stops_search() {
        let (g, [_, _, r, y]) = chain();
        let s = extract_subgraph(&g, &[r].into(), y).unwrap();
        assert_eq!(s.member_nodes, [y].into());
    }

    #[test]
    fn unreachable_output() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let w = b.input(1);
        let y = b.relu(x);
        let g = b.finish(y).unwrap();
        assert_eq!(
            extract_subgraph(&g, &[w].into(), y).unwrap_err(),
            GraphError::UnreachableOutput(y)
        );
    }
}
