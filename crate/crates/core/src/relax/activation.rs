//! Scalar activation relaxations.
//!
//! ReLU on `[l, u]` with `l < 0 < u` is bounded above by the chord through
//! `(l, 0)` and `(u, u)` and below by `y >= alpha * x`. Tanh gets one lower
//! and one upper line, each sound on `[l, u]`.

use serde::{Deserialize, Serialize};

use super::RelaxError;

/// Width below which an interval is treated as a point.
const DEGENERATE_WIDTH: f64 = 1e-12;
const GRID_POINTS: usize = 1000;
const GRID_TOL: f64 = 1e-12;

/// Lower-slope choice for unstable ReLUs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha = 1` if `u >= |l|`, else `0`.
    #[default]
    Adaptive,
    Zero,
    One,
    Fixed(f64),
}

impl AlphaRule {
    pub fn alpha(self, lo: f64, hi: f64) -> Result<f64, RelaxError> {
        let a = match self {
            AlphaRule::Adaptive => {
                if hi >= -lo {
                    1.0
                } else {
                    0.0
                }
            }
            AlphaRule::Zero => 0.0,
            AlphaRule::One => 1.0,
            AlphaRule::Fixed(a) => a,
        };
        if !(0.0..=1.0).contains(&a) {
            return Err(RelaxError::InvalidAlpha(a));
        }
        Ok(a)
    }
}

/// A pair of lines `lower(x) <= phi(x) <= upper(x)`, each `(slope, intercept)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub lower: (f64, f64),
    pub upper: (f64, f64),
}

impl Envelope {
    pub fn lower_at(&self, x: f64) -> f64 {
        self.lower.0 * x + self.lower.1
    }

    pub fn upper_at(&self, x: f64) -> f64 {
        self.upper.0 * x + self.upper.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReluRelaxation {
    /// `l >= 0`: `y = x`.
    Identity,
    /// `u <= 0`: `y = 0`.
    Zero,
    Unstable {
        upper_slope: f64,
        upper_intercept: f64,
        lower_slope: f64,
    },
}

impl ReluRelaxation {
    pub fn envelope(&self) -> Envelope {
        match *self {
            ReluRelaxation::Identity => Envelope { lower: (1.0, 0.0), upper: (1.0, 0.0) },
            ReluRelaxation::Zero => Envelope { lower: (0.0, 0.0), upper: (0.0, 0.0) },
            ReluRelaxation::Unstable { upper_slope, upper_intercept, lower_slope } => Envelope {
                lower: (lower_slope, 0.0),
                upper: (upper_slope, upper_intercept),
            },
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<(), RelaxError> {
    if lo <= hi && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(RelaxError::InvalidInterval { lo, hi })
    }
}

pub fn relu_relaxation(lo: f64, hi: f64, rule: AlphaRule) -> Result<ReluRelaxation, RelaxError> {
    check_interval(lo, hi)?;
    if lo >= 0.0 {
        return Ok(ReluRelaxation::Identity);
    }
    if hi <= 0.0 {
        return Ok(ReluRelaxation::Zero);
    }
    if hi - lo < DEGENERATE_WIDTH {
        // both ends within 1e-12 of zero: 0 <= y <= u
        return Ok(ReluRelaxation::Unstable { upper_slope: 0.0, upper_intercept: hi, lower_slope: 0.0 });
    }
    let width = hi - lo;
    Ok(ReluRelaxation::Unstable {
        upper_slope: hi / width,
        upper_intercept: -hi * lo / width,
        lower_slope: rule.alpha(lo, hi)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhRelaxation {
    pub lower_slope: f64,
    pub lower_intercept: f64,
    pub upper_slope: f64,
    pub upper_intercept: f64,
}

impl TanhRelaxation {
    pub fn envelope(&self) -> Envelope {
        Envelope {
            lower: (self.lower_slope, self.lower_intercept),
            upper: (self.upper_slope, self.upper_intercept),
        }
    }

    fn constant(lo: f64, hi: f64) -> Self {
        Self { lower_slope: 0.0, lower_intercept: lo.tanh(), upper_slope: 0.0, upper_intercept: hi.tanh() }
    }

    /// Largest violation of `lower <= tanh <= upper` on a uniform grid.
    pub fn grid_violation(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=points {
            let x = if k == points { hi } else { lo + (hi - lo) * (k as f64) / (points as f64) };
            let t = x.tanh();
            worst = worst
                .max(self.lower_slope * x + self.lower_intercept - t)
                .max(t - self.upper_slope * x - self.upper_intercept);
        }
        worst
    }
}

fn dtanh(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

/// Extremes of `tanh(x) - k x` on `[lo, hi]` for `0 < k <= 1`.
fn shifted_extremes(k: f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = |x: f64| x.tanh() - k * x;
    let mut cands = vec![lo, hi];
    if k > 0.0 && k < 1.0 {
        // tanh'(x) = k  <=>  tanh(x) = +-sqrt(1 - k)
        let s = (1.0 - k).sqrt().atanh();
        for x in [s, -s] {
            if x > lo && x < hi {
                cands.push(x);
            }
        }
    }
    let vals: Vec<f64> = cands.into_iter().map(g).collect();
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Linear bounds on `tanh` over `[lo, hi]`.
///
/// On a one-signed interval the chord and the midpoint tangent bound the
/// curve (which one is lower depends on convexity). When the interval
/// straddles zero, each side picks, among the chord slope and the endpoint
/// tangent slopes, the line of smallest area once its intercept is shifted
/// to the exact extreme of `tanh(x) - k x`. The result is grid-checked and
/// falls back to constant bounds on any violation.
pub fn tanh_relaxation(lo: f64, hi: f64) -> Result<TanhRelaxation, RelaxError> {
    check_interval(lo, hi)?;
    if hi - lo < DEGENERATE_WIDTH {
        return Ok(TanhRelaxation::constant(lo, hi));
    }
    let (tl, tu) = (lo.tanh(), hi.tanh());
    let chord_slope = (tu - tl) / (hi - lo);
    let chord_intercept = tl - chord_slope * lo;
    let mid = 0.5 * (lo + hi);
    let tangent_slope = dtanh(mid);
    let tangent_intercept = mid.tanh() - tangent_slope * mid;

    let relax = if lo >= 0.0 {
        TanhRelaxation {
            lower_slope: chord_slope,
            lower_intercept: chord_intercept,
            upper_slope: tangent_slope,
            upper_intercept: tangent_intercept,
        }
    } else if hi <= 0.0 {
        TanhRelaxation {
            lower_slope: tangent_slope,
            lower_intercept: tangent_intercept,
            upper_slope: chord_slope,
            upper_intercept: chord_intercept,
        }
    } else {
        let mut lower = (0.0, tl);
        let mut upper = (0.0, tu);
        for k in [chord_slope, dtanh(lo), dtanh(hi)] {
            let (gmin, gmax) = shifted_extremes(k, lo, hi);
            // area under the line on [lo, hi] is proportional to its value at mid
            if gmin + k * mid > lower.1 + lower.0 * mid {
                lower = (k, gmin);
            }
            if gmax + k * mid < upper.1 + upper.0 * mid {
                upper = (k, gmax);
            }
        }
        TanhRelaxation {
            lower_slope: lower.0,
            lower_intercept: lower.1,
            upper_slope: upper.0,
            upper_intercept: upper.1,
        }
    };
    if relax.grid_violation(lo, hi, GRID_POINTS) > GRID_TOL {
        log::debug!("tanh relaxation on [{lo}, {hi}] failed grid check; using constant bounds");
        return Ok(TanhRelaxation::constant(lo, hi));
    }
    Ok(relax)
}
