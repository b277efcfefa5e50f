use serde::{Deserialize, Serialize};

use crate::lp::simplex::{LinearProgram, LpStatus, Sense, Simplex, SimplexOptions};
use crate::relax::IntervalBound;
use crate::sets::{Halfspace, InputSet};

use super::ReachError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplatePreset {
    Box,
    Octagon,
}

/// Fixed outward directions `c_i` of a template polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub directions: Vec<Vec<f64>>,
}

impl Template {
    /// `+e_i` and `-e_i` for every coordinate.
    pub fn boxed(n: usize) -> Self {
        let mut directions = Vec::with_capacity(2 * n);
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut c = vec![0.0; n];
                c[i] = s;
                directions.push(c);
            }
        }
        Self { directions }
    }

    /// Box directions plus `(+-e_i +- e_j) / sqrt 2` for all `i < j`.
    pub fn octagon(n: usize) -> Self {
        let mut t = Self::boxed(n);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in i + 1..n {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut c = vec![0.0; n];
                    c[i] = si * h;
                    c[j] = sj * h;
                    t.directions.push(c);
                }
            }
        }
        t
    }

    pub fn preset(p: TemplatePreset, n: usize) -> Self {
        match p {
            TemplatePreset::Box => Self::boxed(n),
            TemplatePreset::Octagon => Self::octagon(n),
        }
    }

    /// A custom template; directions are normalized and must all have the
    /// same nonzero dimension.
    pub fn custom(directions: Vec<Vec<f64>>) -> Result<Self, ReachError> {
        let n = directions.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(ReachError::InvalidTemplate("no directions".into()));
        }
        let mut out = Vec::with_capacity(directions.len());
        for c in directions {
            if c.len() != n {
                return Err(ReachError::InvalidTemplate(format!("direction of length {} in a {n}-d template", c.len())));
            }
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(ReachError::InvalidTemplate("zero or non-finite direction".into()));
            }
            out.push(c.into_iter().map(|v| v / norm).collect());
        }
        Ok(Self { directions: out })
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Index of `+e_i` (`sign > 0`) or `-e_i` in the template.
    pub fn axis(&self, i: usize, sign: f64) -> Option<usize> {
        self.directions.iter().position(|c| {
            c.iter().enumerate().all(|(j, &v)| if j == i { v == sign.signum() } else { v == 0.0 })
        })
    }

    fn is_axis(c: &[f64]) -> bool {
        c.iter().filter(|v| **v != 0.0).count() == 1 && c.iter().any(|v| v.abs() == 1.0)
    }

    pub fn position(&self, c: &[f64]) -> Option<usize> {
        self.directions.iter().position(|d| d.as_slice() == c)
    }
}

/// `{ z | c_i . z >= support_i }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeApprox {
    pub template: Template,
    pub support: Vec<f64>,
}

impl PolytopeApprox {
    /// The tightest template polytope around a box.
    pub fn from_box(template: &Template, b: &IntervalBound) -> Self {
        Self { template: template.clone(), support: template.directions.iter().map(|c| b.min_linear(c)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    pub fn halfspaces(&self) -> impl Iterator<Item = Halfspace> + '_ {
        self.template.directions.iter().zip(&self.support).map(|(c, &j)| Halfspace { normal: c.clone(), offset: j })
    }

    fn program(&self) -> LinearProgram {
        let n = self.dim();
        let mut lp = LinearProgram::new(n);
        lp.lower = vec![f64::NEG_INFINITY; n];
        for h in self.halfspaces() {
            let coeffs = h.normal.iter().copied().enumerate().filter(|(_, a)| *a != 0.0).collect();
            lp.add_row(coeffs, Sense::Ge, h.offset);
        }
        lp
    }

    /// `min c . z` over the polytope: the stored support when `c` is a
    /// template direction, otherwise an LP.
    pub fn support_of(&self, c: &[f64]) -> Result<f64, ReachError> {
        if let Some(i) = self.template.position(c) {
            return Ok(self.support[i]);
        }
        Ok(self.supports_of(std::slice::from_ref(&c.to_vec()))?[0])
    }

    fn supports_of(&self, dirs: &[Vec<f64>]) -> Result<Vec<f64>, ReachError> {
        let mut s = Simplex::new(&self.program(), SimplexOptions::default()).map_err(crate::lp::VerifyError::from)?;
        if s.is_infeasible() {
            return Ok(vec![f64::INFINITY; dirs.len()]);
        }
        dirs.iter()
            .map(|c| {
                let sol = s.minimize(c).map_err(crate::lp::VerifyError::from)?;
                match sol.status {
                    LpStatus::Optimal => Ok(sol.bound),
                    LpStatus::Unbounded => Err(ReachError::Unbounded),
                    LpStatus::Infeasible => Ok(f64::INFINITY),
                }
            })
            .collect()
    }

    /// Support values on another template's directions.
    pub fn project(&self, onto: &Template) -> Result<Vec<f64>, ReachError> {
        onto.directions.iter().map(|c| self.support_of(c)).collect()
    }

    /// Axis-aligned bounding box.
    pub fn bounding_box(&self) -> Result<IntervalBound, ReachError> {
        let n = self.dim();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            lo[i] = match self.template.axis(i, 1.0) {
                Some(k) => self.support[k],
                None => self.supports_of(&[e.clone()])?[0],
            };
            e[i] = -1.0;
            hi[i] = match self.template.axis(i, -1.0) {
                Some(k) => -self.support[k],
                None => -self.supports_of(&[e])?[0],
            };
        }
        Ok(IntervalBound { lo, hi })
    }

    /// Box widths `hi - lo` per coordinate.
    pub fn widths(&self) -> Result<Vec<f64>, ReachError> {
        Ok(self.bounding_box()?.widths())
    }

    /// As an input set: the bounding box plus the non-axis halfspaces.
    pub fn to_input_set(&self) -> Result<InputSet, ReachError> {
        let mut bbox = self.bounding_box()?;
        for i in 0..bbox.dim() {
            if bbox.lo[i] > bbox.hi[i] {
                // only rounding can cross a point-width box
                let m = 0.5 * (bbox.lo[i] + bbox.hi[i]);
                bbox.lo[i] = m;
                bbox.hi[i] = m;
            }
        }
        let halfspaces = self.halfspaces().filter(|h| !Template::is_axis(&h.normal)).collect();
        Ok(InputSet { bbox, halfspaces })
    }

    /// `max_i (support_i - c_i . z)`; positive means `z` lies outside.
    pub fn violation(&self, z: &[f64]) -> f64 {
        self.template
            .directions
            .iter()
            .zip(&self.support)
            .map(|(c, j)| j - c.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.violation(z) <= tol
    }

    /// Whether the polytope meets the box `b` (LP feasibility).
    pub fn intersects(&self, b: &IntervalBound) -> Result<bool, ReachError> {
        let mut lp = self.program();
        lp.lower.clone_from(&b.lo);
        lp.upper.clone_from(&b.hi);
        let s = Simplex::new(&lp, SimplexOptions::default()).map_err(crate::lp::VerifyError::from)?;
        Ok(!s.is_infeasible())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sizes() {
        assert_eq!(Template::boxed(3).len(), 6);
        assert_eq!(Template::octagon(2).len(), 8);
        assert_eq!(Template::octagon(4).len(), 2 * 16);
        for c in &Template::octagon(3).directions {
            assert!((c.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_roundtrip() {
        let b = IntervalBound::new(vec![-1.0, 0.5], vec![2.0, 0.75]).unwrap();
        let p = PolytopeApprox::from_box(&Template::octagon(2), &b);
        assert_eq!(p.bounding_box().unwrap(), b);
        let s = p.to_input_set().unwrap();
        assert_eq!(s.halfspaces.len(), 4);
        assert!(p.contains(&[0.0, 0.6], 0.0));
        assert!(!p.contains(&[3.0, 0.6], 0.0));
    }

    #[test]
    fn bounding_box_without_axes() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let t = Template::custom(vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        assert!((t.directions[0][0] - h).abs() < 1e-15);
        // |x| + |y| <= 1
        let p = PolytopeApprox { template: t, support: vec![-h; 4] };
        let b = p.bounding_box().unwrap();
        for i in 0..2 {
            assert!((b.lo[i] + 1.0).abs() < 1e-9 && (b.hi[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn intersection_test() {
        let p = PolytopeApprox::from_box(&Template::boxed(2), &IntervalBound::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        assert!(p.intersects(&IntervalBound::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap()).unwrap());
        assert!(!p.intersects(&IntervalBound::new(vec![1.5, 0.0], vec![2.0, 2.0]).unwrap()).unwrap());
    }
}
