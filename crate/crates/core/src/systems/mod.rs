//! Benchmark systems, random instances, trajectory sampling and the
//! soundness audit.

mod fixtures;
mod search;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixtures::{builtin_fixture, builtin_manifest, Manifest, ScenarioFixture, BUILTIN_NAMES};
pub use search::{counterexample_search, Counterexample, ShapeSpace};

use crate::graph::{evaluate, CompGraph, GraphBuilder, GraphError, NetworkFileError};
use crate::reach::{ReachError, ReachResult};
use crate::relax::IntervalBound;

#[derive(Debug, Error)]
pub enum SystemsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Network(#[from] NetworkFileError),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("result covers {result} steps, trajectories {batch}")]
    Horizon { result: usize, batch: usize },
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no counterexample among {tried} seeds")]
    SearchExhausted { tried: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// A random feedforward one-step system `x' = f(x, w)`.
///
/// `widths` lists the affine layer widths; an output layer of width `n_x`
/// is appended unless the last width already is `n_x`. Activations sit
/// between consecutive affine layers. Weights and biases are drawn from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn random_nnds(seed: u64, n_x: usize, n_w: usize, widths: &[usize], activation: Activation) -> CompGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = widths.to_vec();
    if layers.last() != Some(&n_x) {
        layers.push(n_x);
    }
    let mut b = GraphBuilder::new();
    let x = b.input(n_x);
    let mut args = vec![x];
    if n_w > 0 {
        args.push(b.input(n_w));
    }
    let mut fan_in = n_x + n_w;
    let mut h = None;
    for (k, &width) in layers.iter().enumerate() {
        let s = 1.0 / (fan_in as f64).sqrt();
        let weight: Vec<Vec<f64>> =
            (0..width).map(|_| (0..fan_in).map(|_| rng.gen_range(-s..=s)).collect()).collect();
        let bias = (0..width).map(|_| rng.gen_range(-s..=s)).collect();
        let z = b.affine(&args, weight, bias);
        h = Some(z);
        if k + 1 < layers.len() {
            let a = match activation {
                Activation::Relu => b.relu(z),
                Activation::Tanh => b.tanh(z),
            };
            args = vec![a];
        }
        fan_in = width;
    }
    b.finish(h.expect("at least one layer")).expect("generated graph is valid")
}

/// Sampled trajectories `x_{0:T}` with the disturbances that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    /// `states[k][t]` is `x_t` of trajectory `k`.
    pub states: Vec<Vec<Vec<f64>>>,
    /// `disturbances[k][t]` is `w_t` (empty without a disturbance block).
    pub disturbances: Vec<Vec<Vec<f64>>>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.states.first().map_or(0, |s| s.len() - 1)
    }

    /// Per-step componentwise hull of the sampled states.
    pub fn empirical_boxes(&self) -> Vec<IntervalBound> {
        (0..=self.horizon())
            .map(|t| {
                let n = self.states[0][t].len();
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![f64::NEG_INFINITY; n];
                for traj in &self.states {
                    for i in 0..n {
                        lo[i] = lo[i].min(traj[t][i]);
                        hi[i] = hi[i].max(traj[t][i]);
                    }
                }
                IntervalBound { lo, hi }
            })
            .collect()
    }

    /// Rows `t,x1,...,xn`, trajectory after trajectory.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), SystemsError> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.states.first().map_or(0, |s| s[0].len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for traj in &self.states {
            for (t, x) in traj.iter().enumerate() {
                let mut rec = vec![t.to_string()];
                rec.extend(x.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, b: &IntervalBound) -> Vec<f64> {
    b.lo.iter().zip(&b.hi).map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l }).collect()
}

/// Split a flat disturbance vector into one vector per disturbance input.
pub(crate) fn step_inputs(f: &CompGraph, x: &[f64], w: &[f64]) -> Vec<Vec<f64>> {
    let mut inputs = vec![x.to_vec()];
    let mut off = 0;
    for &d in &f.inputs()[1..] {
        let k = f.dim(d);
        inputs.push(w[off..off + k].to_vec());
        off += k;
    }
    inputs
}

/// `n` trajectories with `x_0 ~ U(X0)` and `w_t ~ U(W)`, evaluated exactly.
/// Trajectory `k` draws from its own ChaCha stream, so the batch does not
/// depend on the thread count.
pub fn sample_trajectories(
    f: &CompGraph,
    x0: &IntervalBound,
    w: Option<&IntervalBound>,
    horizon: usize,
    n: usize,
    seed: u64,
) -> Result<TrajectoryBatch, SystemsError> {
    let n_x = f.dim(f.inputs()[0]);
    let n_w: usize = f.inputs()[1..].iter().map(|&i| f.dim(i)).sum();
    if x0.dim() != n_x {
        return Err(SystemsError::Dimension { what: "initial set", expected: n_x, got: x0.dim() });
    }
    let w_dim = w.map_or(0, IntervalBound::dim);
    if w_dim != n_w {
        return Err(SystemsError::Dimension { what: "disturbance set", expected: n_w, got: w_dim });
    }
    let runs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut xs = vec![uniform(&mut rng, x0)];
            let mut ws = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let wt = w.map_or_else(Vec::new, |w| uniform(&mut rng, w));
                let next = evaluate(f, &step_inputs(f, &xs[t], &wt))?;
                xs.push(next);
                ws.push(wt);
            }
            Ok((xs, ws))
        })
        .collect::<Result<_, GraphError>>()?;
    let (states, disturbances) = runs.into_iter().unzip();
    Ok(TrajectoryBatch { states, disturbances })
}

/// Worst template violation `max_i (J_i - c_i . x_t)` over the batch, per
/// step. The result is sound on the batch when every entry is `<= 1e-9`.
pub fn soundness_audit(result: &ReachResult, batch: &TrajectoryBatch) -> Result<Vec<f64>, SystemsError> {
    if result.steps.len() > batch.horizon() + 1 {
        return Err(SystemsError::Horizon { result: result.horizon(), batch: batch.horizon() });
    }
    result
        .steps
        .iter()
        .map(|s| {
            let n = s.polytope.dim();
            batch.states.iter().try_fold(f64::NEG_INFINITY, |acc, traj| {
                let x = &traj[s.t];
                if x.len() != n {
                    return Err(SystemsError::Dimension { what: "state", expected: n, got: x.len() });
                }
                Ok(acc.max(s.polytope.violation(x)))
            })
        })
        .collect()
}
