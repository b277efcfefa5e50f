//! Oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use nnreach::graph::{evaluate, CompGraph};
use nnreach::lp::simplex::{LinearProgram, Sense};
use nnreach::reach::ReachResult;
use nnreach::relax::IntervalBound;
use nnreach::systems::{random_nnds, sample_trajectories, soundness_audit, Activation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SOUND_TOL: f64 = 1e-9;
pub const ORDER_TOL: f64 = 1e-7;

/// A random system with its sets, as used by the property suites.
#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub graph: CompGraph,
    pub x0: IntervalBound,
    pub w: Option<IntervalBound>,
    pub horizon: usize,
    pub activation: Activation,
}

pub fn random_box(rng: &mut ChaCha8Rng, n: usize, radius: (f64, f64)) -> IntervalBound {
    let (lo, hi) = (0..n)
        .map(|_| {
            let c = rng.gen_range(-1.0..=1.0);
            let r = rng.gen_range(radius.0..=radius.1);
            (c - r, c + r)
        })
        .unzip();
    IntervalBound { lo, hi }
}

/// `n_x <= max_x`, one or two hidden layers of width `<= max_width`,
/// ReLU or tanh, optional scalar disturbance, `T <= max_t`.
pub fn random_case(seed: u64, max_x: usize, max_width: usize, max_t: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let n_x = rng.gen_range(1..=max_x);
    let n_w = if rng.gen_bool(0.5) { 1 } else { 0 };
    let layers = rng.gen_range(1..=2);
    let mut widths: Vec<usize> = (0..layers).map(|_| rng.gen_range(2..=max_width)).collect();
    widths.push(n_x);
    let activation = if rng.gen_bool(0.5) { Activation::Relu } else { Activation::Tanh };
    let graph = random_nnds(seed, n_x, n_w, &widths, activation);
    let x0 = random_box(&mut rng, n_x, (0.05, 0.5));
    let w = (n_w > 0).then(|| IntervalBound { lo: vec![-0.05], hi: vec![0.05] });
    let horizon = rng.gen_range(1..=max_t);
    Case { seed, graph, x0, w, horizon, activation }
}

/// Worst per-step trajectory violation of `r` over `n` samples.
pub fn audit(case_graph: &CompGraph, x0: &IntervalBound, w: Option<&IntervalBound>, r: &ReachResult, n: usize, seed: u64) -> f64 {
    let batch = sample_trajectories(case_graph, x0, w, r.horizon(), n, seed).expect("sampling");
    soundness_audit(r, &batch).expect("audit").into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest `c . g(x)` over random points and corners of a box.
pub fn sampled_min(g: &CompGraph, x0: &IntervalBound, c: &[f64], n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x0.dim();
    let mut best = f64::INFINITY;
    let mut eval = |x: Vec<f64>| {
        let y = evaluate(g, &[x]).expect("evaluate");
        best = best.min(c.iter().zip(&y).map(|(a, b)| a * b).sum());
    };
    if d <= 10 {
        for mask in 0..1u32 << d {
            eval((0..d).map(|i| if mask >> i & 1 == 1 { x0.hi[i] } else { x0.lo[i] }).collect());
        }
    }
    for _ in 0..n {
        eval((0..d).map(|i| rng.gen_range(x0.lo[i]..=x0.hi[i])).collect());
    }
    best
}

/// A random LP with finite bounds, `n` variables and `m` rows. Most are
/// feasible by construction around a random interior point.
pub fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let mut lp = LinearProgram::new(n);
    for j in 0..n {
        let lo = rng.gen_range(-5.0..=0.0);
        lp.lower[j] = lo;
        lp.upper[j] = lo + rng.gen_range(0.5..=6.0);
    }
    let x: Vec<f64> = (0..n).map(|j| rng.gen_range(lp.lower[j]..=lp.upper[j])).collect();
    let infeasible = rng.gen_bool(0.1);
    for r in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-3.0..=3.0)));
            }
        }
        let lhs: f64 = coeffs.iter().map(|&(j, a)| a * x[j]).sum();
        let slack = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..=2.0) };
        let (sense, rhs) = match (r, rng.gen_range(0..10)) {
            (0, _) if infeasible => (Sense::Ge, lhs + 100.0),
            (_, 0) => (Sense::Eq, lhs),
            (_, k) if k < 5 => (Sense::Le, lhs + slack),
            _ => (Sense::Ge, lhs - slack),
        };
        lp.add_row(coeffs, sense, rhs);
    }
    lp.objective = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    lp
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[r][k] -= f * a[col][k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum over all basic feasible points, or `None` when infeasible.
/// Every vertex makes `n` constraints tight; equality rows always are.
pub fn vertex_min(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars;
    let dense = |coeffs: &[(usize, f64)]| {
        let mut a = vec![0.0; n];
        for &(j, v) in coeffs {
            a[j] += v;
        }
        a
    };
    let mut fixed = Vec::new();
    // orthonormal span of the kept equality rows; dependent ones are
    // left to the feasibility check
    let mut span: Vec<Vec<f64>> = Vec::new();
    // (row, rhs, variable it bounds)
    let mut optional: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::new();
    for r in &lp.rows {
        let a = dense(&r.coeffs);
        match r.sense {
            Sense::Eq => {
                let mut q = a.clone();
                for b in &span {
                    let d: f64 = q.iter().zip(b).map(|(x, y)| x * y).sum();
                    q.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
                let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                let size = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-9 * size.max(1.0) {
                    span.push(q.into_iter().map(|x| x / norm).collect());
                    fixed.push((a, r.rhs));
                }
            }
            _ => optional.push((a, r.rhs, None)),
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        optional.push((e.clone(), lp.lower[j], Some(j)));
        optional.push((e, lp.upper[j], Some(j)));
    }
    if fixed.len() > n {
        return None;
    }
    let need = n - fixed.len();
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(need);
    let mut used = vec![false; n];
    fn rec(
        start: usize,
        need: usize,
        pick: &mut Vec<usize>,
        used: &mut Vec<bool>,
        optional: &[(Vec<f64>, f64, Option<usize>)],
        fixed: &[(Vec<f64>, f64)],
        lp: &LinearProgram,
        best: &mut Option<f64>,
    ) {
        if pick.len() == need {
            let mut a: Vec<Vec<f64>> = fixed.iter().map(|f| f.0.clone()).collect();
            let mut b: Vec<f64> = fixed.iter().map(|f| f.1).collect();
            for &k in pick.iter() {
                a.push(optional[k].0.clone());
                b.push(optional[k].1);
            }
            if let Some(x) = solve_square(a, b) {
                let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if lp.max_violation(&x) <= 1e-9 * scale {
                    let v: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                    *best = Some(best.map_or(v, |b| b.min(v)));
                }
            }
            return;
        }
        for k in start..optional.len() {
            if optional.len() - k < need - pick.len() {
                break;
            }
            if let Some(j) = optional[k].2 {
                if used[j] {
                    continue;
                }
                used[j] = true;
            }
            pick.push(k);
            rec(k + 1, need, pick, used, optional, fixed, lp, best);
            pick.pop();
            if let Some(j) = optional[k].2 {
                used[j] = false;
            }
        }
    }
    rec(0, need, &mut pick, &mut used, &optional, &fixed, lp, &mut best);
    best
}
