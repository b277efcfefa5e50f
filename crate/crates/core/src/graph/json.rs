//! JSON network file format.
//!
//! ```json
//! {"inputs": [0, 1], "output": 5, "state_dim": 2, "disturbance_dim": 1,
//!  "nodes": [{"id": 0, "op": "input", "dim": 2, "inputs": []}, ...]}
//! ```
//!
//! Affine nodes carry `"W"` (row-major) and `"b"`. Input 0 is the state;
//! remaining inputs form the disturbance block. Floats are written in
//! shortest round-trip form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_graph, CompGraph, Edge, GraphError, NodeId, Operator};

#[derive(Debug, Error)]
pub enum NetworkFileError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed network JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("node {id}: {msg}")]
    Node { id: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("declared state_dim {declared} but state input has dim {actual}")]
    StateDim { declared: usize, actual: usize },
    #[error("declared disturbance_dim {declared} but disturbance inputs total {actual}")]
    DisturbanceDim { declared: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    op: String,
    dim: usize,
    #[serde(default)]
    inputs: Vec<usize>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    weight: Option<Vec<Vec<f64>>>,
    #[serde(rename = "b", default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkRecord {
    inputs: Vec<usize>,
    output: usize,
    state_dim: usize,
    disturbance_dim: usize,
    nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// A one-step NNDS graph together with its state/disturbance split.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub graph: CompGraph,
    pub state_dim: usize,
    pub disturbance_dim: usize,
    /// Free-form provenance (fixture generator parameters and the like).
    pub meta: Option<serde_json::Value>,
}

impl Network {
    /// Wrap a graph whose first input is the state and whose remaining
    /// inputs are disturbances.
    pub fn from_graph(graph: CompGraph) -> Result<Self, NetworkFileError> {
        let inputs = graph.inputs();
        let state_dim = inputs.first().map(|&i| graph.dim(i)).unwrap_or(0);
        let disturbance_dim = inputs.iter().skip(1).map(|&i| graph.dim(i)).sum();
        let out = graph.dim(graph.output());
        if out != state_dim {
            return Err(GraphError::StateDimMismatch { output: out, state: state_dim }.into());
        }
        Ok(Self { graph, state_dim, disturbance_dim, meta: None })
    }

    pub fn disturbance_inputs(&self) -> &[NodeId] {
        &self.graph.inputs()[1..]
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkFileError> {
        let rec: NetworkRecord = serde_json::from_str(text)?;
        let mut nodes = Vec::with_capacity(rec.nodes.len());
        let mut edges = Vec::new();
        for n in &rec.nodes {
            let op = match n.op.as_str() {
                "input" => Operator::Input,
                "relu" => Operator::Relu,
                "tanh" => Operator::Tanh,
                "add" => Operator::Add,
                "concat" => Operator::Concat,
                "affine" => {
                    let (Some(w), Some(b)) = (n.weight.clone(), n.bias.clone()) else {
                        return Err(NetworkFileError::Node { id: n.id, msg: "affine node needs W and b".into() });
                    };
                    Operator::Affine { weight: w, bias: b }
                }
                other => {
                    return Err(NetworkFileError::Node { id: n.id, msg: format!("unknown op {other:?}") })
                }
            };
            nodes.push((NodeId(n.id), op, n.dim));
            for (slot, &src) in n.inputs.iter().enumerate() {
                edges.push(Edge { src: NodeId(src), dst: NodeId(n.id), slot });
            }
        }
        let graph = build_graph(
            nodes,
            edges,
            rec.inputs.iter().map(|&i| NodeId(i)).collect(),
            NodeId(rec.output),
        )?;
        let mut net = Network::from_graph(graph)?;
        if net.state_dim != rec.state_dim {
            return Err(NetworkFileError::StateDim { declared: rec.state_dim, actual: net.state_dim });
        }
        if net.disturbance_dim != rec.disturbance_dim {
            return Err(NetworkFileError::DisturbanceDim {
                declared: rec.disturbance_dim,
                actual: net.disturbance_dim,
            });
        }
        net.meta = rec.meta;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        let g = &self.graph;
        let nodes = g
            .nodes()
            .iter()
            .map(|n| {
                let (weight, bias) = match &n.op {
                    Operator::Affine { weight, bias } => (Some(weight.clone()), Some(bias.clone())),
                    _ => (None, None),
                };
                NodeRecord {
                    id: n.id.0,
                    op: n.op.name().to_string(),
                    dim: n.dim,
                    inputs: g.preds(n.id).iter().map(|p| p.0).collect(),
                    weight,
                    bias,
                }
            })
            .collect();
        let rec = NetworkRecord {
            inputs: g.inputs().iter().map(|i| i.0).collect(),
            output: g.output().0,
            state_dim: self.state_dim,
            disturbance_dim: self.disturbance_dim,
            nodes,
            meta: self.meta.clone(),
        };
        serde_json::to_string(&rec).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| NetworkFileError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkFileError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|source| NetworkFileError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{"inputs":[0,1],"output":3,"state_dim":2,"disturbance_dim":1,
        "nodes":[{"id":0,"op":"input","dim":2},{"id":1,"op":"input","dim":1},
        {"id":2,"op":"affine","dim":2,"inputs":[0,1],"W":[[1,0,1],[0,1,0.1]],"b":[0,0.5]},
        {"id":3,"op":"relu","dim":2,"inputs":[2]}]}"#;

    #[test]
    fn parse_and_roundtrip() {
        let net = Network::from_json(TINY).unwrap();
        assert_eq!(net.state_dim, 2);
        assert_eq!(net.disturbance_dim, 1);
        let again = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(again, net);
        assert_eq!(again.to_json(), net.to_json());
    }

    #[test]
    fn declared_dims_are_checked() {
        let bad = TINY.replace("\"disturbance_dim\":1", "\"disturbance_dim\":3");
        assert!(matches!(Network::from_json(&bad), Err(NetworkFileError::DisturbanceDim { .. })));
        let bad = TINY.replace("\"op\":\"relu\"", "\"op\":\"gelu\"");
        assert!(matches!(Network::from_json(&bad), Err(NetworkFileError::Node { .. })));
    }

    #[test]
    fn float_roundtrip_is_exact() {
        let text = TINY.replace("0.1]", "0.30000000000000004]");
        let net = Network::from_json(&text).unwrap();
        let back = Network::from_json(&net.to_json()).unwrap();
        match back.graph.op(NodeId(2)) {
            Operator::Affine { weight, .. } => assert_eq!(weight[1][2], 0.30000000000000004),
            _ => unreachable!(),
        }
    }
}
