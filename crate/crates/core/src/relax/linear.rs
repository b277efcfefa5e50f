//! Linear bound propagation.
//!
//! The backward pass carries a batch of linear functionals from a target
//! node towards the sources, replacing every activation by the line of its
//! envelope that keeps the functional a lower bound (lower line for positive
//! coefficients, upper line for negative ones). The forward pass carries
//! affine lower/upper functions of the concatenated source variables.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::graph::{CompGraph, NodeId, Operator};
use crate::sets::{InputSets, SourceLayout};

use super::interval::{interval_propagate_to, region};
use super::{envelope, preactivation, AlphaRule, BoundMap, Envelope, IntervalBound, RelaxError};

/// Directions handled by one worker in a batched backward pass.
const CHUNK: usize = 16;
const DEGENERATE_WIDTH: f64 = 1e-12;

fn envelopes(
    g: &CompGraph,
    members: &[NodeId],
    sets: &InputSets,
    preact: &BoundMap,
    alpha: AlphaRule,
) -> Result<BTreeMap<NodeId, Vec<Envelope>>, RelaxError> {
    let mut out = BTreeMap::new();
    for &n in members {
        let op = g.op(n);
        if !op.is_activation() {
            continue;
        }
        let ib = preactivation(g, n, preact, sets)?;
        if ib.dim() != g.dim(n) {
            return Err(RelaxError::DimensionMismatch { expected: g.dim(n), got: ib.dim() });
        }
        let env = ib.lo.iter().zip(&ib.hi).map(|(&l, &h)| envelope(op, l, h, alpha)).collect::<Result<_, _>>()?;
        out.insert(n, env);
    }
    Ok(out)
}

/// Lower bounds on `d . z_target` for every row `d` of `dirs`.
pub fn backward_bounds(
    g: &CompGraph,
    target: NodeId,
    dirs: &[Vec<f64>],
    sets: &InputSets,
    preact: &BoundMap,
    alpha: AlphaRule,
) -> Result<Vec<f64>, RelaxError> {
    let dim = g.dim(target);
    if let Some(d) = dirs.iter().find(|d| d.len() != dim) {
        return Err(RelaxError::DimensionMismatch { expected: dim, got: d.len() });
    }
    if let Some(s) = sets.get(&target) {
        return s.min_linear_many(dirs);
    }
    let members = region(g, sets, target)?;
    let envs = envelopes(g, &members, sets, preact, alpha)?;
    if dirs.len() <= CHUNK {
        return backward_chunk(g, target, &members, &envs, dirs, sets);
    }
    let parts: Vec<Vec<f64>> = dirs
        .par_chunks(CHUNK)
        .map(|c| backward_chunk(g, target, &members, &envs, c, sets))
        .collect::<Result<_, _>>()?;
    Ok(parts.concat())
}

fn backward_chunk(
    g: &CompGraph,
    target: NodeId,
    members: &[NodeId],
    envs: &BTreeMap<NodeId, Vec<Envelope>>,
    dirs: &[Vec<f64>],
    sets: &InputSets,
) -> Result<Vec<f64>, RelaxError> {
    let k = dirs.len();
    let mut constant = vec![0.0; k];
    // row-major k x dim coefficient blocks
    let mut lambda: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    lambda.insert(target, dirs.concat());

    for &n in members.iter().rev() {
        let Some(lam) = lambda.remove(&n) else { continue };
        let m = g.dim(n);
        let preds = g.preds(n);
        match g.op(n) {
            Operator::Input => unreachable!("region excludes unbound inputs"),
            Operator::Affine { weight, bias } => {
                for r in 0..k {
                    let row = &lam[r * m..(r + 1) * m];
                    constant[r] += row.iter().zip(bias).map(|(l, b)| l * b).sum::<f64>();
                }
                let mut off = 0;
                for &p in preds {
                    let dp = g.dim(p);
                    let buf = lambda.entry(p).or_insert_with(|| vec![0.0; k * dp]);
                    for r in 0..k {
                        let out = &mut buf[r * dp..(r + 1) * dp];
                        for (i, &l) in lam[r * m..(r + 1) * m].iter().enumerate() {
                            if l == 0.0 {
                                continue;
                            }
                            for (o, w) in out.iter_mut().zip(&weight[i][off..off + dp]) {
                                *o += l * w;
                            }
                        }
                    }
                    off += dp;
                }
            }
            Operator::Relu | Operator::Tanh => {
                let env = &envs[&n];
                let buf = lambda.entry(preds[0]).or_insert_with(|| vec![0.0; k * m]);
                for r in 0..k {
                    for j in 0..m {
                        let l = lam[r * m + j];
                        if l == 0.0 {
                            continue;
                        }
                        let (slope, icpt) = if l > 0.0 { env[j].lower } else { env[j].upper };
                        buf[r * m + j] += l * slope;
                        constant[r] += l * icpt;
                    }
                }
            }
            Operator::Add => {
                for &p in preds {
                    let buf = lambda.entry(p).or_insert_with(|| vec![0.0; k * m]);
                    for (o, l) in buf.iter_mut().zip(&lam) {
                        *o += l;
                    }
                }
            }
            Operator::Concat => {
                let mut off = 0;
                for &p in preds {
                    let dp = g.dim(p);
                    let buf = lambda.entry(p).or_insert_with(|| vec![0.0; k * dp]);
                    for r in 0..k {
                        for j in 0..dp {
                            buf[r * dp + j] += lam[r * m + off + j];
                        }
                    }
                    off += dp;
                }
            }
        }
    }

    // whatever is left sits on source nodes
    for (s, lam) in lambda {
        let set = sets.get(&s).ok_or(RelaxError::MissingInput(s))?;
        let d = set.dim();
        let objs: Vec<Vec<f64>> = (0..k).map(|r| lam[r * d..(r + 1) * d].to_vec()).collect();
        for (c, v) in constant.iter_mut().zip(set.min_linear_many(&objs)?) {
            *c += v;
        }
    }
    Ok(constant)
}

/// Lower bound on `c . z_out` for the graph's output node.
pub fn backward_lin_prop(
    g: &CompGraph,
    c: &[f64],
    sets: &InputSets,
    preact: &BoundMap,
    alpha: AlphaRule,
) -> Result<f64, RelaxError> {
    Ok(backward_bounds(g, g.output(), &[c.to_vec()], sets, preact, alpha)?[0])
}

/// Preactivation bounds for every activation feeding `target`, computed
/// layer by layer with the backward pass itself and intersected with the
/// interval bounds. ReLU neurons already stable under intervals are not
/// refined, since their relaxation is exact either way.
pub fn backward_preactivations(
    g: &CompGraph,
    target: NodeId,
    sets: &InputSets,
    alpha: AlphaRule,
) -> Result<BoundMap, RelaxError> {
    let mut pre = BoundMap::new();
    extend_backward_preactivations(g, target, sets, alpha, &mut pre)?;
    Ok(pre)
}

/// As [`backward_preactivations`], keeping and reusing whatever `pre`
/// already holds (bounds for the same source sets).
pub fn extend_backward_preactivations(
    g: &CompGraph,
    target: NodeId,
    sets: &InputSets,
    alpha: AlphaRule,
    pre: &mut BoundMap,
) -> Result<(), RelaxError> {
    let ibp = interval_propagate_to(g, sets, target)?;
    let members = region(g, sets, target)?;
    for &a in &members {
        if !g.op(a).is_activation() {
            continue;
        }
        let p = g.preds(a)[0];
        if sets.contains_key(&p) || pre.contains_key(&p) {
            continue;
        }
        let mut ib = ibp[&p].clone();
        let wanted = refinable(g, p, &ib);
        if !wanted.is_empty() {
            let d = g.dim(p);
            let mut dirs = Vec::with_capacity(2 * wanted.len());
            for &j in &wanted {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                dirs.push(e.clone());
                e[j] = -1.0;
                dirs.push(e);
            }
            let vals = backward_bounds(g, p, &dirs, sets, pre, alpha)?;
            tighten(&mut ib, &wanted, &vals);
        }
        pre.insert(p, ib);
    }
    Ok(())
}

/// Neurons of preactivation node `p` whose bounds are worth refining.
pub(crate) fn refinable(g: &CompGraph, p: NodeId, ib: &IntervalBound) -> Vec<usize> {
    let feeds_tanh = g.succs(p).iter().any(|&s| matches!(g.op(s), Operator::Tanh));
    (0..ib.dim())
        .filter(|&j| {
            let (l, h) = (ib.lo[j], ib.hi[j]);
            if feeds_tanh {
                h - l > DEGENERATE_WIDTH
            } else {
                l < 0.0 && h > 0.0
            }
        })
        .collect()
}

/// Intersect `ib` with `(lower, -upper)` pairs laid out as in
/// [`backward_preactivations`].
pub(crate) fn tighten(ib: &mut IntervalBound, wanted: &[usize], vals: &[f64]) {
    for (i, &j) in wanted.iter().enumerate() {
        let lo = ib.lo[j].max(vals[2 * i]);
        let hi = ib.hi[j].min(-vals[2 * i + 1]);
        // rounding can cross the bounds of a near-point interval
        ib.lo[j] = lo.min(hi);
        ib.hi[j] = hi.max(lo);
    }
}

/// Affine lower and upper bounds of a node in the concatenated source
/// variables: `lower_a z + lower_b <= node <= upper_a z + upper_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBoundFn {
    pub lower_a: Vec<Vec<f64>>,
    pub lower_b: Vec<f64>,
    pub upper_a: Vec<Vec<f64>>,
    pub upper_b: Vec<f64>,
}

impl LinearBoundFn {
    fn identity(dim: usize, offset: usize, width: usize) -> Self {
        let a: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                let mut r = vec![0.0; width];
                r[offset + i] = 1.0;
                r
            })
            .collect();
        Self { lower_a: a.clone(), lower_b: vec![0.0; dim], upper_a: a, upper_b: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower_b.len()
    }

    pub fn lower_at(&self, z: &[f64]) -> Vec<f64> {
        self.lower_a.iter().zip(&self.lower_b).map(|(r, b)| dot(r, z) + b).collect()
    }

    pub fn upper_at(&self, z: &[f64]) -> Vec<f64> {
        self.upper_a.iter().zip(&self.upper_b).map(|(r, b)| dot(r, z) + b).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Result of a forward pass: bounding functions for every computed node.
#[derive(Debug, Clone)]
pub struct ForwardBounds {
    pub layout: SourceLayout,
    pub fns: BTreeMap<NodeId, LinearBoundFn>,
}

impl ForwardBounds {
    /// Interval of `node` obtained by minimizing/maximizing its bounding
    /// functions over the source sets.
    pub fn concretize(&self, node: NodeId, sets: &InputSets) -> Result<IntervalBound, RelaxError> {
        let f = &self.fns[&node];
        let mut lo = Vec::with_capacity(f.dim());
        let mut hi = Vec::with_capacity(f.dim());
        for j in 0..f.dim() {
            lo.push(self.layout.min_linear(sets, &f.lower_a[j])? + f.lower_b[j]);
            let neg: Vec<f64> = f.upper_a[j].iter().map(|v| -v).collect();
            hi.push(f.upper_b[j] - self.layout.min_linear(sets, &neg)?);
        }
        Ok(IntervalBound { lo, hi })
    }

    /// Lower bound on `c . node`.
    pub fn lower_support(&self, node: NodeId, c: &[f64], sets: &InputSets) -> Result<f64, RelaxError> {
        let f = &self.fns[&node];
        let mut a = vec![0.0; self.layout.width];
        let mut b = 0.0;
        for (j, &cj) in c.iter().enumerate() {
            if cj >= 0.0 {
                axpy(&mut a, cj, &f.lower_a[j]);
                b += cj * f.lower_b[j];
            } else {
                axpy(&mut a, cj, &f.upper_a[j]);
                b += cj * f.upper_b[j];
            }
        }
        Ok(self.layout.min_linear(sets, &a)? + b)
    }
}

/// Forward affine bounds for every node `g.output()` depends on.
///
/// Activations are relaxed on the interval obtained by concretizing the
/// incoming bounding functions; all relaxation slopes are nonnegative, so
/// lower lines compose with lower functions and upper with upper.
pub fn forward_lin_prop(g: &CompGraph, sets: &InputSets, alpha: AlphaRule) -> Result<ForwardBounds, RelaxError> {
    let target = g.output();
    let members = region(g, sets, target)?;
    let mut sources: Vec<NodeId> = members
        .iter()
        .flat_map(|&n| g.preds(n).iter().copied())
        .filter(|p| sets.contains_key(p))
        .collect();
    if sets.contains_key(&target) {
        sources.push(target);
    }
    sources.sort();
    sources.dedup();
    let layout = SourceLayout::new(sets, sources);
    let width = layout.width;
    let mut fns: BTreeMap<NodeId, LinearBoundFn> = BTreeMap::new();
    for (s, r) in &layout.blocks {
        fns.insert(*s, LinearBoundFn::identity(r.len(), r.start, width));
    }
    let mut fb = ForwardBounds { layout, fns };

    for n in members {
        let preds = g.preds(n);
        let out = match g.op(n) {
            Operator::Input => unreachable!("region excludes unbound inputs"),
            Operator::Affine { weight, bias } => {
                let m = bias.len();
                let mut f = LinearBoundFn {
                    lower_a: vec![vec![0.0; width]; m],
                    lower_b: bias.clone(),
                    upper_a: vec![vec![0.0; width]; m],
                    upper_b: bias.clone(),
                };
                let mut off = 0;
                for &p in preds {
                    let fp = &fb.fns[&p];
                    for i in 0..m {
                        for j in 0..fp.dim() {
                            let w = weight[i][off + j];
                            if w > 0.0 {
                                axpy(&mut f.lower_a[i], w, &fp.lower_a[j]);
                                f.lower_b[i] += w * fp.lower_b[j];
                                axpy(&mut f.upper_a[i], w, &fp.upper_a[j]);
                                f.upper_b[i] += w * fp.upper_b[j];
                            } else if w < 0.0 {
                                axpy(&mut f.lower_a[i], w, &fp.upper_a[j]);
                                f.lower_b[i] += w * fp.upper_b[j];
                                axpy(&mut f.upper_a[i], w, &fp.lower_a[j]);
                                f.upper_b[i] += w * fp.lower_b[j];
                            }
                        }
                    }
                    off += fp.dim();
                }
                f
            }
            op @ (Operator::Relu | Operator::Tanh) => {
                let p = preds[0];
                let ib = fb.concretize(p, sets)?;
                let fp = &fb.fns[&p];
                let mut f = fp.clone();
                for j in 0..fp.dim() {
                    let e = envelope(op, ib.lo[j], ib.hi[j].max(ib.lo[j]), alpha)?;
                    debug_assert!(e.lower.0 >= 0.0 && e.upper.0 >= 0.0);
                    f.lower_a[j].iter_mut().for_each(|v| *v *= e.lower.0);
                    f.lower_b[j] = e.lower.0 * fp.lower_b[j] + e.lower.1;
                    f.upper_a[j].iter_mut().for_each(|v| *v *= e.upper.0);
                    f.upper_b[j] = e.upper.0 * fp.upper_b[j] + e.upper.1;
                }
                f
            }
            Operator::Add => {
                let mut f = fb.fns[&preds[0]].clone();
                for &p in &preds[1..] {
                    let fp = &fb.fns[&p];
                    for j in 0..f.dim() {
                        axpy(&mut f.lower_a[j], 1.0, &fp.lower_a[j]);
                        axpy(&mut f.upper_a[j], 1.0, &fp.upper_a[j]);
                        f.lower_b[j] += fp.lower_b[j];
                        f.upper_b[j] += fp.upper_b[j];
                    }
                }
                f
            }
            Operator::Concat => {
                let mut f = LinearBoundFn { lower_a: vec![], lower_b: vec![], upper_a: vec![], upper_b: vec![] };
                for &p in preds {
                    let fp = &fb.fns[&p];
                    f.lower_a.extend(fp.lower_a.iter().cloned());
                    f.lower_b.extend_from_slice(&fp.lower_b);
                    f.upper_a.extend(fp.upper_a.iter().cloned());
                    f.upper_b.extend_from_slice(&fp.upper_b);
                }
                f
            }
        };
        fb.fns.insert(n, out);
    }
    Ok(fb)
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
    fn backward_exact_on_affine() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let h = b.affine(&[x], vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![0.3, -0.2]);
        let y = b.affine(&[h], vec![vec![0.5, -1.0]], vec![1.0]);
        let g = b.finish(y).unwrap();
        let sets = boxed(x, vec![-1.0, 0.0], vec![1.0, 2.0]);
        // y = 0.5(x1 + 2x2 + 0.3) - (-x1 + 0.5x2 - 0.2) + 1 = 1.5x1 + 0.5x2 + 1.35
        let v = backward_lin_prop(&g, &[1.0], &sets, &BoundMap::new(), AlphaRule::Adaptive).unwrap();
        assert!((v - (-1.5 + 1.35)).abs() < 1e-12);
        let v = backward_lin_prop(&g, &[-1.0], &sets, &BoundMap::new(), AlphaRule::Adaptive).unwrap();
        assert!((v + (1.5 + 1.0 + 1.35)).abs() < 1e-12);
    }

    #[test]
    fn single_relu_alpha_zero() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.relu(x);
        let g = b.finish(y).unwrap();
        let sets = boxed(x, vec![-1.0], vec![1.0]);
        let v = backward_lin_prop(&g, &[1.0], &sets, &BoundMap::new(), AlphaRule::Zero).unwrap();
        assert_eq!(v, 0.0);
        let v = backward_lin_prop(&g, &[1.0], &sets, &BoundMap::new(), AlphaRule::One).unwrap();
        assert_eq!(v, -1.0);
    }

    #[test]
    fn missing_preactivation() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let h = b.affine(&[x], vec![vec![1.0]], vec![0.0]);
        let y = b.relu(h);
        let g = b.finish(y).unwrap();
        let sets = boxed(x, vec![-1.0], vec![1.0]);
        let err = backward_lin_prop(&g, &[1.0], &sets, &BoundMap::new(), AlphaRule::Zero).unwrap_err();
        assert_eq!(err, RelaxError::MissingPreactivation(h));
        let pre = backward_preactivations(&g, y, &sets, AlphaRule::Zero).unwrap();
        assert_eq!(pre[&h], IntervalBound { lo: vec![-1.0], hi: vec![1.0] });
    }

    #[test]
    fn forward_exact_on_affine() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let w = b.input(1);
        let y = b.affine(&[x, w], vec![vec![1.0, -2.0, 1.0]], vec![0.5]);
        let g = b.finish(y).unwrap();
        let mut sets = boxed(x, vec![0.0, 0.0], vec![1.0, 1.0]);
        sets.insert(w, InputSet::from(IntervalBound::new(vec![-0.1], vec![0.1]).unwrap()));
        let fb = forward_lin_prop(&g, &sets, AlphaRule::Adaptive).unwrap();
        let f = &fb.fns[&y];
        assert_eq!(f.lower_a, vec![vec![1.0, -2.0, 1.0]]);
        assert_eq!(f.lower_a, f.upper_a);
        let ib = fb.concretize(y, &sets).unwrap();
        assert!((ib.lo[0] - (-1.6)).abs() < 1e-12 && (ib.hi[0] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn forward_relu_contains_samples() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let h = b.affine(&[x], vec![vec![1.0, 1.0], vec![1.0, -1.0]], vec![0.0, 0.1]);
        let r = b.relu(h);
        let y = b.affine(&[r], vec![vec![1.0, -1.0]], vec![0.0]);
        let g = b.finish(y).unwrap();
        let sets = boxed(x, vec![-1.0, -1.0], vec![1.0, 1.0]);
        let fb = forward_lin_prop(&g, &sets, AlphaRule::Adaptive).unwrap();
        let ib = fb.concretize(y, &sets).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let z = [-1.0 + 0.1 * i as f64, -1.0 + 0.1 * j as f64];
                let v = crate::graph::evaluate(&g, &[z.to_vec()]).unwrap()[0];
                assert!(v >= ib.lo[0] - 1e-12 && v <= ib.hi[0] + 1e-12);
                let f = &fb.fns[&y];
                assert!(f.lower_at(&z)[0] <= v + 1e-12 && v <= f.upper_at(&z)[0] + 1e-12);
            }
        }
    }
}
