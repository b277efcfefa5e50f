use super::{build_graph, CompGraph, Edge, GraphError, NodeId, Result};

/// A T-step composition of a one-step graph plus the bookkeeping needed to
/// find each intermediate state inside it.
#[derive(Debug, Clone)]
pub struct Unrolled {
    pub graph: CompGraph,
    /// `state_nodes[t]` is the node holding `x_t`, for `t = 0..=T`.
    pub state_nodes: Vec<NodeId>,
    /// `disturbance_nodes[t]` are the input nodes of step `t` (`w_t`), in the
    /// one-step graph's input order.
    pub disturbance_nodes: Vec<Vec<NodeId>>,
    /// `node_maps[t][j]` is the unrolled id of one-step node `j` in copy `t`.
    pub node_maps: Vec<Vec<NodeId>>,
}

impl Unrolled {
    pub fn steps(&self) -> usize {
        self.state_nodes.len() - 1
    }
}

/// Compose the one-step graph `f` with itself `steps` times.
///
/// `f.inputs()[0]` is the state input; any further inputs form the
/// disturbance block. Copy `t` receives copy `t - 1`'s output as its state
/// input and gets fresh disturbance input nodes. Copy 0 keeps `f`'s ids, so
/// `unroll(f, 1)` reproduces `f` exactly.
pub fn unroll(f: &CompGraph, steps: usize) -> Result<Unrolled> {
    if steps == 0 {
        return Err(GraphError::InvalidInputs("unroll needs at least one step".into()));
    }
    let state = *f.inputs().first().ok_or_else(|| GraphError::InvalidInputs("no state input".into()))?;
    let (out_dim, state_dim) = (f.dim(f.output()), f.dim(state));
    if out_dim != state_dim {
        return Err(GraphError::StateDimMismatch { output: out_dim, state: state_dim });
    }

    let (base_nodes, base_edges, base_inputs, base_output) = f.to_parts();
    let n = base_nodes.len();
    let mut nodes = base_nodes.clone();
    let mut edges = base_edges.clone();
    let mut inputs = base_inputs.clone();
    let mut node_maps = vec![(0..n).map(NodeId).collect::<Vec<_>>()];
    let mut state_nodes = vec![state, base_output];
    let mut disturbance_nodes = vec![base_inputs[1..].to_vec()];

    for _ in 1..steps {
        let prev_out = *state_nodes.last().expect("nonempty");
        let mut map = vec![NodeId(usize::MAX); n];
        map[state.0] = prev_out;
        for (id, op, dim) in &base_nodes {
            if *id == state {
                continue;
            }
            let new_id = NodeId(nodes.len());
            map[id.0] = new_id;
            nodes.push((new_id, op.clone(), *dim));
        }
        for e in &base_edges {
            edges.push(Edge { src: map[e.src.0], dst: map[e.dst.0], slot: e.slot });
        }
        let dist: Vec<NodeId> = base_inputs[1..].iter().map(|i| map[i.0]).collect();
        inputs.extend(dist.iter().copied());
        disturbance_nodes.push(dist);
        state_nodes.push(map[base_output.0]);
        node_maps.push(map);
    }

    let output = *state_nodes.last().expect("nonempty");
    let graph = build_graph(nodes, edges, inputs, output)?;
    Ok(Unrolled { graph, state_nodes, disturbance_nodes, node_maps })
}
