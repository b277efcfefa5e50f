use super::{CompGraph, GraphError, NodeId, Operator, Result};

/// Exact forward pass; returns the output node's value.
///
/// `inputs` holds one vector per input node, in `g.inputs()` order.
pub fn evaluate(g: &CompGraph, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut values = evaluate_all(g, inputs)?;
    Ok(values.swap_remove(g.output().0))
}

/// Forward pass returning the value of every node, indexed by id.
///
/// Nodes that do not lie upstream of anything reachable still get evaluated;
/// the cost is linear in the graph size either way.
pub fn evaluate_all(g: &CompGraph, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if inputs.len() != g.inputs().len() {
        return Err(GraphError::InvalidInputs(format!(
            "expected {} input vectors, got {}",
            g.inputs().len(),
            inputs.len()
        )));
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); g.len()];
    for (&id, v) in g.inputs().iter().zip(inputs) {
        if v.len() != g.dim(id) {
            return Err(GraphError::DimensionMismatch {
                node: id,
                detail: format!("input value has dim {}, node expects {}", v.len(), g.dim(id)),
            });
        }
        values[id.0] = v.clone();
    }
    for &id in g.order() {
        if let Some(v) = apply(g, id, &values) {
            values[id.0] = v;
        }
    }
    Ok(values)
}

fn apply(g: &CompGraph, id: NodeId, values: &[Vec<f64>]) -> Option<Vec<f64>> {
    let preds = g.preds(id);
    let out = match g.op(id) {
        Operator::Input => return None,
        Operator::Affine { weight, bias } => {
            let x: Vec<f64> = preds.iter().flat_map(|p| values[p.0].iter().copied()).collect();
            affine_apply(weight, bias, &x)
        }
        Operator::Relu => values[preds[0].0].iter().map(|&v| v.max(0.0)).collect(),
        Operator::Tanh => values[preds[0].0].iter().map(|&v| v.tanh()).collect(),
        Operator::Add => {
            let mut acc = values[preds[0].0].clone();
            for p in &preds[1..] {
                for (a, &v) in acc.iter_mut().zip(&values[p.0]) {
                    *a += v;
                }
            }
            acc
        }
        Operator::Concat => preds.iter().flat_map(|p| values[p.0].iter().copied()).collect(),
    };
    Some(out)
}

/// `W x + b` with a fixed summation order: ascending column index, bias last.
pub(crate) fn affine_apply(weight: &[Vec<f64>], bias: &[f64], x: &[f64]) -> Vec<f64> {
    weight
        .iter()
        .zip(bias)
        .map(|(row, &b)| {
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            acc + b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use crate::graph::GraphBuilder;

    use super::*;

    #[test]
    fn relu_and_tanh_nodes() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let r = b.relu(x);
        let g = b.finish(r).unwrap();
        assert_eq!(evaluate(&g, &[vec![-1.0, 2.0]]).unwrap(), vec![0.0, 2.0]);

        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let t = b.tanh(x);
        let g = b.finish(t).unwrap();
        assert_eq!(evaluate(&g, &[vec![0.0]]).unwrap(), vec![0.0]);
    }

    #[test]
    fn wrong_input_dim() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let r = b.relu(x);
        let g = b.finish(r).unwrap();
        assert!(matches!(
            evaluate(&g, &[vec![1.0]]),
            Err(GraphError::DimensionMismatch { .. })
        ));
    }
}
