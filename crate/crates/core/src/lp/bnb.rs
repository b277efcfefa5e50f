//! Best-first branch and bound over ReLU phases.
//!
//! Each node fixes some unstable neurons to a phase. Active adds `y = x`,
//! `x >= 0`; inactive adds `y = 0`, `x <= 0`. The node with the smallest
//! bound is expanded first, so when its LP optimum already satisfies every
//! ReLU exactly it is the global minimum of the exact problem.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::simplex::{LinearRow, LpStatus, Sense};
use super::{PreparedLp, ReluNeuron, TaggedRow, VerificationLP, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseFix {
    Free,
    Active,
    Inactive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub phases: Vec<PhaseFix>,
    /// LP bound of this node, never below its parent's.
    pub bound: f64,
    pub depth: usize,
    /// Free neuron to split next; `None` when the LP point is exact.
    branch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    pub time_limit: Duration,
    pub max_nodes: usize,
    /// Relative slack for `y = max(x, 0)` at an LP point.
    pub exact_tol: f64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { time_limit: Duration::from_secs(60), max_nodes: 200_000, exact_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    /// Global minimum if `complete`, otherwise a valid lower bound.
    pub bound: f64,
    pub complete: bool,
    pub root_bound: f64,
    pub nodes: usize,
}

struct Open(BnbNode, usize);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // reversed: BinaryHeap pops the smallest bound, oldest first
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then(other.1.cmp(&self.1))
    }
}

fn fix_rows(unstable: &[ReluNeuron], phases: &[PhaseFix]) -> Vec<TaggedRow> {
    let mut rows = Vec::new();
    for (n, p) in unstable.iter().zip(phases) {
        let mut add = |coeffs, sense, rhs| rows.push(TaggedRow { node: n.node, row: LinearRow { coeffs, sense, rhs } });
        match p {
            PhaseFix::Free => {}
            PhaseFix::Active => {
                add(vec![(n.y, 1.0), (n.x, -1.0)], Sense::Eq, 0.0);
                add(vec![(n.x, 1.0)], Sense::Ge, 0.0);
            }
            PhaseFix::Inactive => {
                add(vec![(n.y, 1.0)], Sense::Eq, 0.0);
                add(vec![(n.x, 1.0)], Sense::Le, 0.0);
            }
        }
    }
    rows
}

/// LP value under the given phases, plus the widest violated free neuron.
fn evaluate(
    root: &PreparedLp,
    lp: &VerificationLP,
    unstable: &[ReluNeuron],
    phases: &[PhaseFix],
    tol: f64,
) -> Result<Option<(f64, Option<usize>)>, VerifyError> {
    let mut p = root.branch(&fix_rows(unstable, phases))?;
    let sol = p.minimize(&lp.objective)?;
    match sol.status {
        LpStatus::Infeasible => return Ok(None),
        LpStatus::Unbounded => return Err(VerifyError::Status(LpStatus::Unbounded)),
        LpStatus::Optimal => {}
    }
    let mut pick: Option<(usize, f64)> = None;
    for (i, n) in unstable.iter().enumerate() {
        if phases[i] != PhaseFix::Free {
            continue;
        }
        let (x, y) = (p.value(&sol.x, n.x), p.value(&sol.x, n.y));
        if y - x.max(0.0) > tol * (1.0 + x.abs()) {
            let w = n.hi - n.lo;
            if pick.map_or(true, |(_, best)| w > best) {
                pick = Some((i, w));
            }
        }
    }
    Ok(Some((sol.bound, pick.map(|(i, _)| i))))
}

/// Minimize the LP's objective over the exact ReLU semantics of the
/// listed unstable neurons.
pub fn branch_and_bound(
    lp: &VerificationLP,
    unstable: &[ReluNeuron],
    opts: &BnbOptions,
) -> Result<BnbResult, VerifyError> {
    let start = Instant::now();
    let root_lp = PreparedLp::reduce(lp);
    let k = unstable.len();
    let root_phases = vec![PhaseFix::Free; k];
    let Some((root_bound, branch)) = evaluate(&root_lp, lp, unstable, &root_phases, opts.exact_tol)? else {
        return Ok(BnbResult { bound: f64::INFINITY, complete: true, root_bound: f64::INFINITY, nodes: 1 });
    };
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    let mut nodes = 1;
    heap.push(Open(BnbNode { phases: root_phases, bound: root_bound, depth: 0, branch }, seq));

    while let Some(Open(node, _)) = heap.pop() {
        let Some(split) = node.branch else {
            return Ok(BnbResult { bound: node.bound, complete: true, root_bound, nodes });
        };
        if start.elapsed() >= opts.time_limit || nodes >= opts.max_nodes {
            log::info!("branch and bound stopped after {nodes} nodes; bound {}", node.bound);
            return Ok(BnbResult { bound: node.bound, complete: false, root_bound, nodes });
        }
        for phase in [PhaseFix::Active, PhaseFix::Inactive] {
            let mut phases = node.phases.clone();
            phases[split] = phase;
            nodes += 1;
            if let Some((v, branch)) = evaluate(&root_lp, lp, unstable, &phases, opts.exact_tol)? {
                seq += 1;
                let child = BnbNode { phases, bound: v.max(node.bound), depth: node.depth + 1, branch };
                heap.push(Open(child, seq));
            }
        }
    }
    // every leaf infeasible: the exact problem has no feasible point
    Ok(BnbResult { bound: f64::INFINITY, complete: true, root_bound, nodes })
}

/// Minimum over all `2^k` phase patterns, each solved as one LP.
pub fn enumerate_patterns(lp: &VerificationLP, unstable: &[ReluNeuron]) -> Result<f64, VerifyError> {
    let root = PreparedLp::reduce(lp);
    let k = unstable.len();
    assert!(k < 24, "pattern enumeration over {k} neurons");
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << k) {
        let phases: Vec<PhaseFix> =
            (0..k).map(|i| if mask >> i & 1 == 1 { PhaseFix::Active } else { PhaseFix::Inactive }).collect();
        if let Some((v, _)) = evaluate(&root, lp, unstable, &phases, f64::INFINITY)? {
            best = best.min(v);
        }
    }
    Ok(best)
}
