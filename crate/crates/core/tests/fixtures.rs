//! Committed fixtures: forward agreement with the exporter and LP structure.

use std::collections::BTreeSet;

use nnreach::graph::{evaluate, extract_subgraph, unroll};
use nnreach::lp::{build_lp, lp_preactivations};
use nnreach::sets::{InputSet, InputSets};
use nnreach::systems::{builtin_fixture, BUILTIN_NAMES};

fn points(v: &serde_json::Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).expect("list of points")
}

#[test]
fn forward_pass_matches_exporter() {
    for name in BUILTIN_NAMES {
        let (_, net) = builtin_fixture(name).unwrap();
        let Some(check) = net.meta.as_ref().and_then(|m| m.get("check")) else { continue };
        let xs = points(&check["x"]);
        let ys = points(&check["y"]);
        let ws = check.get("w").map(points);
        assert!(!xs.is_empty(), "{name}: empty check");
        for (k, (x, y)) in xs.iter().zip(&ys).enumerate() {
            let mut inputs = vec![x.clone()];
            if let Some(ws) = &ws {
                inputs.push(ws[k].clone());
            }
            let got = evaluate(&net.graph, &inputs).unwrap();
            let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in got.iter().zip(y) {
                assert!((a - b).abs() <= 1e-6 * scale, "{name} point {k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn unrolled_lps_are_separable() {
    for name in BUILTIN_NAMES {
        let (fx, net) = builtin_fixture(name).unwrap();
        let horizon = fx.horizon.min(3);
        let u = unroll(&net.graph, horizon).unwrap();
        let mut sets: InputSets = [(u.state_nodes[0], InputSet::from(fx.x0.clone()))].into();
        if let Some(w) = &fx.w {
            for d in u.disturbance_nodes.iter().flatten() {
                sets.insert(*d, InputSet::from(w.clone()));
            }
        }
        let target = u.state_nodes[horizon];
        let pre = lp_preactivations(&u.graph, target, &sets).unwrap();
        let stops: BTreeSet<_> = sets.keys().copied().collect();
        let sub = extract_subgraph(&u.graph, &stops, target).unwrap();
        let lp = build_lp(&u.graph, &sub, &sets, &pre, &vec![0.0; u.graph.dim(target)]).unwrap();
        assert!(lp.separability_violations().is_empty(), "{name}");
    }
}
