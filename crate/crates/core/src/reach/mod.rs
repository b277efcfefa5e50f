//! Propagators, template polytopes and the two reachability frameworks.
//!
//! A propagator bounds `c_i . z` for every template direction `c_i` at a
//! target node, given sets for the graph's source nodes. The recursive
//! framework applies it to the one-step graph and feeds each polytope back
//! in as the next state set; the one-shot framework applies it to the
//! unrolled graph with the initial set and every disturbance set.

mod template;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use template::{PolytopeApprox, Template, TemplatePreset};

use crate::graph::{extract_subgraph, unroll, CompGraph, GraphError, NodeId};
use crate::lp::{
    branch_and_bound, build_lp, extend_lp_preactivations, interval_preactivations, lp_bounds, BnbOptions, PreactSource,
    VerifyError,
};
use crate::relax::{
    backward_bounds, extend_backward_preactivations, forward_lin_prop, interval_propagate_to, AlphaRule, BoundMap,
    IntervalBound, RelaxError,
};
use crate::sets::{InputSet, InputSets};

/// Slack used when deciding polytope containment from support values.
pub const CONTAINMENT_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("template has dimension {got}, state has {expected}")]
    TemplateDim { expected: usize, got: usize },
    #[error("results use different templates or horizons")]
    TemplateMismatch,
    #[error("disturbance set has dimension {got}, network expects {expected}")]
    DisturbanceDim { expected: usize, got: usize },
    #[error("initial set has dimension {got}, state has {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("polytope is unbounded in some direction")]
    Unbounded,
    #[error("malformed reach result: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Interval,
    ForwardLin,
    BackwardLin,
    Lp,
    Bnb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagator {
    pub method: Method,
    #[serde(default)]
    pub alpha: AlphaRule,
    #[serde(default)]
    pub preact: PreactSource,
    #[serde(default = "default_time_limit")]
    pub bnb_time_limit_s: f64,
    #[serde(default = "default_max_nodes")]
    pub bnb_max_nodes: usize,
}

fn default_time_limit() -> f64 {
    60.0
}

fn default_max_nodes() -> usize {
    200_000
}

impl Propagator {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            alpha: AlphaRule::default(),
            preact: PreactSource::default(),
            bnb_time_limit_s: default_time_limit(),
            bnb_max_nodes: default_max_nodes(),
        }
    }

    /// Whether the method solves a problem with separable constraints, so
    /// that one-shot results are never looser than recursive ones.
    pub fn separable(&self) -> bool {
        matches!(self.method, Method::BackwardLin | Method::Lp | Method::Bnb)
    }

    fn bnb_options(&self) -> BnbOptions {
        BnbOptions {
            time_limit: std::time::Duration::from_secs_f64(self.bnb_time_limit_s),
            max_nodes: self.bnb_max_nodes,
            ..BnbOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    #[serde(rename = "ok")]
    Ok,
    /// Some direction fell back to its interval bound or stopped early.
    #[serde(rename = "solver-incomplete")]
    SolverIncomplete,
}

impl StepStatus {
    fn worst(self, other: Self) -> Self {
        if self == StepStatus::Ok {
            other
        } else {
            self
        }
    }
}

/// Bound `c_i . z_out` for every template direction.
pub fn propagate(
    p: &Propagator,
    g: &CompGraph,
    sets: &InputSets,
    template: &Template,
) -> Result<(PolytopeApprox, StepStatus), ReachError> {
    propagate_to(p, g, g.output(), sets, template, &mut BoundMap::new())
}

/// As [`propagate`] for an arbitrary target node. `cache` holds
/// preactivation bounds computed for the same source sets and is extended.
pub fn propagate_to(
    p: &Propagator,
    g: &CompGraph,
    target: NodeId,
    sets: &InputSets,
    template: &Template,
    cache: &mut BoundMap,
) -> Result<(PolytopeApprox, StepStatus), ReachError> {
    if template.dim() != g.dim(target) {
        return Err(ReachError::TemplateDim { expected: g.dim(target), got: template.dim() });
    }
    let dirs = &template.directions;
    if let Some(s) = sets.get(&target) {
        let support = s.min_linear_many(dirs)?;
        return Ok((PolytopeApprox { template: template.clone(), support }, StepStatus::Ok));
    }
    let ibp = interval_propagate_to(g, sets, target)?;
    let fallback: Vec<f64> = dirs.iter().map(|c| ibp[&target].min_linear(c)).collect();
    let results = match method_bounds(p, g, target, sets, dirs, cache) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{:?} propagation to {target} failed ({e}); using interval bounds", p.method);
            let support = fallback;
            return Ok((PolytopeApprox { template: template.clone(), support }, StepStatus::SolverIncomplete));
        }
    };
    let mut status = StepStatus::Ok;
    let support = results
        .into_iter()
        .zip(fallback)
        .map(|(r, fb)| match r {
            Ok((v, st)) => {
                status = status.worst(st);
                v
            }
            Err(e) => {
                log::warn!("direction fell back to interval bound: {e}");
                status = StepStatus::SolverIncomplete;
                fb
            }
        })
        .collect();
    Ok((PolytopeApprox { template: template.clone(), support }, status))
}

type DirResult = Result<(f64, StepStatus), ReachError>;

fn ok_all(v: Vec<f64>) -> Vec<DirResult> {
    v.into_iter().map(|x| Ok((x, StepStatus::Ok))).collect()
}

fn method_bounds(
    p: &Propagator,
    g: &CompGraph,
    target: NodeId,
    sets: &InputSets,
    dirs: &[Vec<f64>],
    cache: &mut BoundMap,
) -> Result<Vec<DirResult>, ReachError> {
    Ok(match p.method {
        Method::Interval => {
            let ibp = interval_propagate_to(g, sets, target)?;
            ok_all(dirs.iter().map(|c| ibp[&target].min_linear(c)).collect())
        }
        Method::ForwardLin => {
            let fb = forward_lin_prop(&g.with_output(target)?, sets, p.alpha)?;
            dirs.iter().map(|c| Ok((fb.lower_support(target, c, sets)?, StepStatus::Ok))).collect()
        }
        Method::BackwardLin => {
            match p.preact {
                PreactSource::SelfBootstrap => extend_backward_preactivations(g, target, sets, p.alpha, cache)?,
                PreactSource::Interval => cache.extend(interval_preactivations(g, target, sets)?),
            }
            ok_all(backward_bounds(g, target, dirs, sets, cache, p.alpha)?)
        }
        Method::Lp => {
            lp_preacts(p, g, target, sets, cache)?;
            lp_bounds(g, target, dirs, sets, cache)?
                .into_iter()
                .map(|r| r.map(|v| (v, StepStatus::Ok)).map_err(ReachError::from))
                .collect()
        }
        Method::Bnb => {
            lp_preacts(p, g, target, sets, cache)?;
            let stops = sets.keys().copied().collect();
            let sub = extract_subgraph(g, &stops, target)?;
            let base = build_lp(g, &sub, sets, cache, &vec![0.0; g.dim(target)])?;
            let opts = p.bnb_options();
            dirs.par_iter()
                .map(|c| {
                    let mut lp = base.clone();
                    lp.set_direction(c)?;
                    let r = branch_and_bound(&lp, &lp.unstable, &opts)?;
                    let st = if r.complete { StepStatus::Ok } else { StepStatus::SolverIncomplete };
                    Ok((r.bound, st))
                })
                .collect()
        }
    })
}

fn lp_preacts(
    p: &Propagator,
    g: &CompGraph,
    target: NodeId,
    sets: &InputSets,
    cache: &mut BoundMap,
) -> Result<(), ReachError> {
    match p.preact {
        PreactSource::SelfBootstrap => extend_lp_preactivations(g, target, sets, cache)?,
        PreactSource::Interval => cache.extend(interval_preactivations(g, target, sets)?),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Framework {
    Recursive,
    OneShot,
}

impl Framework {
    pub fn name(self) -> &'static str {
        match self {
            Framework::Recursive => "recursive",
            Framework::OneShot => "one-shot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachStep {
    pub t: usize,
    pub polytope: PolytopeApprox,
    pub wall_ms: f64,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachResult {
    pub framework: Framework,
    pub steps: Vec<ReachStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    directions: Vec<Vec<f64>>,
    support: Vec<f64>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    wall_ms: f64,
    status: StepStatus,
}

impl ReachResult {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    /// Bounding-box widths per step.
    pub fn widths(&self) -> Result<Vec<Vec<f64>>, ReachError> {
        self.steps.iter().map(|s| s.polytope.widths()).collect()
    }

    pub fn to_json(&self) -> Result<String, ReachError> {
        let recs = self
            .steps
            .iter()
            .map(|s| {
                let b = s.polytope.bounding_box()?;
                Ok(StepRecord {
                    t: s.t,
                    directions: s.polytope.template.directions.clone(),
                    support: s.polytope.support.clone(),
                    box_lo: b.lo,
                    box_hi: b.hi,
                    wall_ms: s.wall_ms,
                    status: s.status,
                })
            })
            .collect::<Result<Vec<_>, ReachError>>()?;
        Ok(serde_json::to_string_pretty(&recs)?)
    }

    pub fn from_json(text: &str, framework: Framework) -> Result<Self, ReachError> {
        let recs: Vec<StepRecord> = serde_json::from_str(text)?;
        let steps = recs
            .into_iter()
            .map(|r| ReachStep {
                t: r.t,
                polytope: PolytopeApprox { template: Template { directions: r.directions }, support: r.support },
                wall_ms: r.wall_ms,
                status: r.status,
            })
            .collect();
        Ok(Self { framework, steps })
    }
}

/// Split a disturbance box across the given input nodes, in order.
fn disturbance_sets(
    g: &CompGraph,
    nodes: &[NodeId],
    w: Option<&IntervalBound>,
    sets: &mut InputSets,
) -> Result<(), ReachError> {
    let need: usize = nodes.iter().map(|&n| g.dim(n)).sum();
    let got = w.map_or(0, IntervalBound::dim);
    if need != got {
        return Err(ReachError::DisturbanceDim { expected: need, got });
    }
    let mut off = 0;
    for &n in nodes {
        let w = w.expect("nonzero disturbance dimension");
        let d = g.dim(n);
        let b = IntervalBound::new(w.lo[off..off + d].to_vec(), w.hi[off..off + d].to_vec())?;
        sets.insert(n, b.into());
        off += d;
    }
    Ok(())
}

fn check_problem(f: &CompGraph, x0: &IntervalBound, horizon: usize, template: &Template) -> Result<NodeId, ReachError> {
    if horizon == 0 {
        return Err(ReachError::Horizon);
    }
    let state = *f.inputs().first().ok_or(GraphError::InvalidInputs("no state input".into()))?;
    let n = f.dim(state);
    if f.dim(f.output()) != n {
        return Err(GraphError::StateDimMismatch { output: f.dim(f.output()), state: n }.into());
    }
    if x0.dim() != n {
        return Err(ReachError::StateDim { expected: n, got: x0.dim() });
    }
    if template.dim() != n {
        return Err(ReachError::TemplateDim { expected: n, got: template.dim() });
    }
    Ok(state)
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// `R_{t+1} = P(R_t x W; f)` for `t < horizon`, starting from `R_0 = X0`.
pub fn recursive_reach(
    p: &Propagator,
    f: &CompGraph,
    x0: &IntervalBound,
    w: Option<&IntervalBound>,
    horizon: usize,
    template: &Template,
) -> Result<ReachResult, ReachError> {
    let state = check_problem(f, x0, horizon, template)?;
    let mut steps = vec![ReachStep {
        t: 0,
        polytope: PolytopeApprox::from_box(template, x0),
        wall_ms: 0.0,
        status: StepStatus::Ok,
    }];
    let mut state_set = InputSet::from(x0.clone());
    for t in 1..=horizon {
        let clock = Instant::now();
        let mut sets: InputSets = [(state, state_set)].into();
        disturbance_sets(f, &f.inputs()[1..], w, &mut sets)?;
        let (poly, status) = propagate(p, f, &sets, template)?;
        state_set = poly.to_input_set()?;
        log::info!("recursive step {t}: {:.1} ms", elapsed_ms(clock));
        steps.push(ReachStep { t, polytope: poly, wall_ms: elapsed_ms(clock), status });
    }
    Ok(ReachResult { framework: Framework::Recursive, steps })
}

/// `R_t = P(X0 x W^t; f^(t))` for `t = 1..=horizon`, all on one unrolled
/// graph so preactivation bounds of earlier copies are shared.
pub fn one_shot_reach(
    p: &Propagator,
    f: &CompGraph,
    x0: &IntervalBound,
    w: Option<&IntervalBound>,
    horizon: usize,
    template: &Template,
) -> Result<ReachResult, ReachError> {
    check_problem(f, x0, horizon, template)?;
    let u = unroll(f, horizon)?;
    let mut sets: InputSets = [(u.state_nodes[0], InputSet::from(x0.clone()))].into();
    for nodes in &u.disturbance_nodes {
        disturbance_sets(&u.graph, nodes, w, &mut sets)?;
    }
    let mut steps = vec![ReachStep {
        t: 0,
        polytope: PolytopeApprox::from_box(template, x0),
        wall_ms: 0.0,
        status: StepStatus::Ok,
    }];
    let mut cache = BoundMap::new();
    for t in 1..=horizon {
        let clock = Instant::now();
        let (poly, status) = propagate_to(p, &u.graph, u.state_nodes[t], &sets, template, &mut cache)?;
        log::info!("one-shot step {t}: {:.1} ms", elapsed_ms(clock));
        steps.push(ReachStep { t, polytope: poly, wall_ms: elapsed_ms(clock), status });
    }
    Ok(ReachResult { framework: Framework::OneShot, steps })
}

/// Per-step comparison of two results on the same template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepComparison {
    pub t: usize,
    /// `support(a)_i - support(b)_i`; nonnegative means `a` is tighter.
    pub gaps: Vec<f64>,
    pub a_in_b: bool,
    pub b_in_a: bool,
}

impl StepComparison {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Support gaps and containment verdicts, step by step.
pub fn compare_tightness(a: &ReachResult, b: &ReachResult) -> Result<Vec<StepComparison>, ReachError> {
    if a.steps.len() != b.steps.len() {
        return Err(ReachError::TemplateMismatch);
    }
    a.steps
        .iter()
        .zip(&b.steps)
        .map(|(sa, sb)| {
            if sa.polytope.template != sb.polytope.template {
                return Err(ReachError::TemplateMismatch);
            }
            let gaps: Vec<f64> = sa.polytope.support.iter().zip(&sb.polytope.support).map(|(x, y)| x - y).collect();
            Ok(StepComparison {
                t: sa.t,
                a_in_b: gaps.iter().all(|&g| g >= -CONTAINMENT_TOL),
                b_in_a: gaps.iter().all(|&g| g <= CONTAINMENT_TOL),
                gaps,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    Unknown,
}

/// `Safe` at step `t` when the polytope misses every avoid box.
pub fn check_avoid(result: &ReachResult, avoid: &[IntervalBound]) -> Result<Vec<Verdict>, ReachError> {
    result
        .steps
        .iter()
        .map(|s| {
            let bb = s.polytope.bounding_box()?;
            for a in avoid {
                if a.dim() != bb.dim() {
                    return Err(ReachError::StateDim { expected: bb.dim(), got: a.dim() });
                }
                let disjoint = (0..bb.dim()).any(|i| a.hi[i] < bb.lo[i] || a.lo[i] > bb.hi[i]);
                if !disjoint && s.polytope.intersects(a)? {
                    return Ok(Verdict::Unknown);
                }
            }
            Ok(Verdict::Safe)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    const ALL: [Method; 5] = [Method::Interval, Method::ForwardLin, Method::BackwardLin, Method::Lp, Method::Bnb];

    fn scalar_gain(k: f64) -> CompGraph {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let y = b.affine(&[x], vec![vec![k]], vec![0.0]);
        b.finish(y).unwrap()
    }

    fn unit(lo: f64, hi: f64) -> IntervalBound {
        IntervalBound::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn identity_reproduces_box() {
        let mut b = GraphBuilder::new();
        let x = b.input(2);
        let y = b.affine(&[x], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let g = b.finish(y).unwrap();
        let x0 = IntervalBound::new(vec![-1.0, 0.5], vec![2.0, 0.75]).unwrap();
        let sets: InputSets = [(x, InputSet::from(x0.clone()))].into();
        for m in ALL {
            let (poly, st) = propagate(&Propagator::new(m), &g, &sets, &Template::boxed(2)).unwrap();
            assert_eq!(st, StepStatus::Ok);
            assert_eq!(poly.bounding_box().unwrap(), x0, "{m:?}");
        }
    }

    #[test]
    fn negation() {
        let g = scalar_gain(-1.0);
        let sets: InputSets = [(g.inputs()[0], InputSet::from(unit(0.0, 1.0)))].into();
        let (poly, _) = propagate(&Propagator::new(Method::Lp), &g, &sets, &Template::boxed(1)).unwrap();
        assert_eq!(poly.bounding_box().unwrap(), unit(-1.0, 0.0));
    }

    #[test]
    fn doubling_both_frameworks() {
        let g = scalar_gain(2.0);
        for m in ALL {
            let p = Propagator::new(m);
            for r in [
                recursive_reach(&p, &g, &unit(-1.0, 1.0), None, 3, &Template::boxed(1)).unwrap(),
                one_shot_reach(&p, &g, &unit(-1.0, 1.0), None, 3, &Template::boxed(1)).unwrap(),
            ] {
                let boxes: Vec<_> = r.steps.iter().map(|s| s.polytope.bounding_box().unwrap()).collect();
                assert_eq!(boxes, vec![unit(-1.0, 1.0), unit(-2.0, 2.0), unit(-4.0, 4.0), unit(-8.0, 8.0)]);
            }
        }
    }

    #[test]
    fn json_roundtrip_and_compare() {
        let g = scalar_gain(0.5);
        let r = recursive_reach(&Propagator::new(Method::Lp), &g, &unit(0.0, 1.0), None, 2, &Template::boxed(1)).unwrap();
        let back = ReachResult::from_json(&r.to_json().unwrap(), Framework::Recursive).unwrap();
        assert_eq!(back, r);
        let cmp = compare_tightness(&r, &back).unwrap();
        assert!(cmp.iter().all(|c| c.a_in_b && c.b_in_a && c.max_gap() == 0.0));
        let other = recursive_reach(&Propagator::new(Method::Lp), &g, &unit(0.0, 1.0), None, 2, &Template::octagon(1));
        assert!(other.is_ok());
        let two = recursive_reach(
            &Propagator::new(Method::Lp),
            &g,
            &unit(0.0, 1.0),
            None,
            2,
            &Template::custom(vec![vec![1.0], vec![-1.0], vec![2.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(compare_tightness(&r, &two), Err(ReachError::TemplateMismatch)));
    }

    #[test]
    fn avoid_verdicts() {
        let g = scalar_gain(1.0);
        let r = recursive_reach(&Propagator::new(Method::Lp), &g, &unit(0.0, 1.0), None, 1, &Template::boxed(1)).unwrap();
        assert_eq!(check_avoid(&r, &[unit(2.0, 3.0)]).unwrap(), vec![Verdict::Safe; 2]);
        assert_eq!(check_avoid(&r, &[unit(-5.0, 5.0)]).unwrap(), vec![Verdict::Unknown; 2]);
    }

    #[test]
    fn missing_disturbance_set() {
        let mut b = GraphBuilder::new();
        let x = b.input(1);
        let w = b.input(1);
        let y = b.add(&[x, w]);
        let g = b.finish(y).unwrap();
        let err = recursive_reach(&Propagator::new(Method::Lp), &g, &unit(0.0, 1.0), None, 1, &Template::boxed(1));
        assert!(matches!(err, Err(ReachError::DisturbanceDim { expected: 1, got: 0 })));
    }
}
