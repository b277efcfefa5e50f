use crate::graph::{CompGraph, NodeId, Operator};
use crate::sets::InputSets;

use super::{BoundMap, IntervalBound, RelaxError};

/// Nodes that must be computed to bound `target` from the source sets, in
/// topological order. Source nodes are excluded.
pub(crate) fn region(g: &CompGraph, sets: &InputSets, target: NodeId) -> Result<Vec<NodeId>, RelaxError> {
    if sets.contains_key(&target) {
        return Ok(Vec::new());
    }
    let stops = sets.keys().copied().collect();
    let sub = match crate::graph::extract_subgraph(g, &stops, target) {
        Ok(s) => s,
        Err(e) => {
            // a missing set is the more useful diagnosis
            let anc = g.ancestors(target);
            if let Some(&i) = g.inputs().iter().find(|i| anc.contains(i) && !sets.contains_key(i)) {
                return Err(RelaxError::MissingInput(i));
            }
            return Err(e.into());
        }
    };
    let members = sub.ordered_members(g);
    if let Some(&i) = members.iter().find(|&&n| matches!(g.op(n), Operator::Input)) {
        return Err(RelaxError::MissingInput(i));
    }
    for (n, s) in sets {
        if sub.boundary.contains(n) && s.dim() != g.dim(*n) {
            return Err(RelaxError::DimensionMismatch { expected: g.dim(*n), got: s.dim() });
        }
    }
    Ok(members)
}

fn gather<'a>(g: &CompGraph, n: NodeId, b: &'a BoundMap) -> impl Iterator<Item = &'a IntervalBound> + 'a {
    g.preds(n).to_vec().into_iter().map(move |p| &b[&p])
}

/// Interval bounds of every node needed for `g.output()`.
pub fn interval_propagate(g: &CompGraph, sets: &InputSets) -> Result<BoundMap, RelaxError> {
    interval_propagate_to(g, sets, g.output())
}

/// Interval bounds of `target` and every node it depends on (stopping at
/// source nodes, whose bounds are their sets' boxes).
pub fn interval_propagate_to(g: &CompGraph, sets: &InputSets, target: NodeId) -> Result<BoundMap, RelaxError> {
    let members = region(g, sets, target)?;
    let mut b = BoundMap::new();
    for (n, s) in sets {
        b.insert(*n, s.bbox.clone());
    }
    for n in members {
        let out = match g.op(n) {
            Operator::Input => unreachable!("region excludes unbound inputs"),
            Operator::Affine { weight, bias } => {
                let (mut mid, mut rad) = (Vec::new(), Vec::new());
                for ib in gather(g, n, &b) {
                    mid.extend(ib.lo.iter().zip(&ib.hi).map(|(l, h)| 0.5 * (l + h)));
                    rad.extend(ib.lo.iter().zip(&ib.hi).map(|(l, h)| 0.5 * (h - l)));
                }
                let (mut lo, mut hi) = (Vec::with_capacity(bias.len()), Vec::with_capacity(bias.len()));
                for (row, &bj) in weight.iter().zip(bias) {
                    let c: f64 = row.iter().zip(&mid).map(|(w, m)| w * m).sum::<f64>() + bj;
                    let r: f64 = row.iter().zip(&rad).map(|(w, r)| w.abs() * r).sum();
                    lo.push(c - r);
                    hi.push(c + r);
                }
                IntervalBound { lo, hi }
            }
            Operator::Relu => {
                let x = &b[&g.preds(n)[0]];
                IntervalBound {
                    lo: x.lo.iter().map(|v| v.max(0.0)).collect(),
                    hi: x.hi.iter().map(|v| v.max(0.0)).collect(),
                }
            }
            Operator::Tanh => {
                let x = &b[&g.preds(n)[0]];
                IntervalBound {
                    lo: x.lo.iter().map(|v| v.tanh()).collect(),
                    hi: x.hi.iter().map(|v| v.tanh()).collect(),
                }
            }
            Operator::Add => {
                let d = g.dim(n);
                let (mut lo, mut hi) = (vec![0.0; d], vec![0.0; d]);
                for ib in gather(g, n, &b) {
                    for j in 0..d {
                        lo[j] += ib.lo[j];
                        hi[j] += ib.hi[j];
                    }
                }
                IntervalBound { lo, hi }
            }
            Operator::Concat => {
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for ib in gather(g, n, &b) {
                    lo.extend_from_slice(&ib.lo);
                    hi.extend_from_slice(&ib.hi);
                }
                IntervalBound { lo, hi }
            }
        };
        b.insert(n, out);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::sets::InputSet;

    fn boxed(id: NodeId, lo: Vec<f64>, hi: Vec<f64>) -> InputSets {
        [(id, InputSet::from(IntervalBound::new(lo, hi).unwrap()))].into()
    }

    #[test]
    fn affine_difference() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let y = b.affine(&[x], vec![vec![1.0, -1.0]], vec![0.0]);
        let g = b.finish(y).unwrap();
        let out = interval_propagate(&g, &boxed(x, vec![0.0, 0.0], vec![1.0, 1.0])).unwrap();
        assert_eq!(out[&y], IntervalBound { lo: vec![-1.0], hi: vec![1.0] });
    }

    #[test]
    fn relu_clamps() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.relu(x);
        let g = b.finish(y).unwrap();
        let out = interval_propagate(&g, &boxed(x, vec![-1.0], vec![2.0])).unwrap();
        assert_eq!(out[&y], IntervalBound { lo: vec![0.0], hi: vec![2.0] });
    }

    #[test]
    fn missing_input_reported() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let w = b.input(1);
        let y = b.add(&[x, w]);
        let g = b.finish(y).unwrap();
        let err = interval_propagate(&g, &boxed(x, vec![0.0], vec![1.0])).unwrap_err();
        assert_eq!(err, RelaxError::MissingInput(w));
    }

    #[test]
    fn concretized_node_stops_propagation() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let h = b.affine(&[x], vec![vec![3.0]], vec![0.0]);
        let y = b.relu(h);
        let g = b.finish(y).unwrap();
        // only h has a set; x is never visited
        let out = interval_propagate(&g, &boxed(h, vec![-1.0], vec![0.5])).unwrap();
        assert_eq!(out[&y].hi, vec![0.5]);
        assert!(!out.contains_key(&x));
    }
}
