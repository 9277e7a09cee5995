//! Fading-memory probability measures on `(-inf, 0]`.
//!
//! A [`FadingMeasure`] is a finite mixture of exponential kernels
//! `w * rate * exp(rate * u) du` and point masses `w * delta_loc`. This class
//! admits closed forms for exponential moments, tail masses and the exact
//! integral of a piecewise-linear grid function, which is all the scheme needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTerm {
    pub weight: f64,
    pub location: f64,
}

/// Probability measure on `(-inf, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct FadingMeasure {
    exp_terms: Vec<ExpTerm>,
    point_terms: Vec<PointTerm>,
}

/// JSON form: `{"exp": [[w, rate], ...], "point": [[w, loc], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeasureRepr {
    #[serde(default)]
    exp: Vec<[f64; 2]>,
    #[serde(default)]
    point: Vec<[f64; 2]>,
}

impl TryFrom<MeasureRepr> for FadingMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        FadingMeasure::new(
            r.exp.iter().map(|&[w, rate]| ExpTerm { weight: w, rate }).collect(),
            r.point
                .iter()
                .map(|&[w, location]| PointTerm { weight: w, location })
                .collect(),
        )
    }
}

impl From<FadingMeasure> for MeasureRepr {
    fn from(m: FadingMeasure) -> Self {
        MeasureRepr {
            exp: m.exp_terms.iter().map(|t| [t.weight, t.rate]).collect(),
            point: m.point_terms.iter().map(|t| [t.weight, t.location]).collect(),
        }
    }
}

impl FadingMeasure {
    pub fn new(exp_terms: Vec<ExpTerm>, point_terms: Vec<PointTerm>) -> Result<Self> {
        let mut total = 0.0;
        for t in &exp_terms {
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                return Err(Error::input(format!("negative or non-finite weight {}", t.weight)));
            }
            if !(t.rate > 0.0) || !t.rate.is_finite() {
                return Err(Error::input(format!("exponential rate must be positive, got {}", t.rate)));
            }
            total += t.weight;
        }
        for t in &point_terms {
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                return Err(Error::input(format!("negative or non-finite weight {}", t.weight)));
            }
            if !(t.location <= 0.0) || !t.location.is_finite() {
                return Err(Error::input(format!("point location must be <= 0, got {}", t.location)));
            }
            total += t.weight;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::input(format!("weights sum to {total}, expected 1")));
        }
        Ok(FadingMeasure { exp_terms, point_terms })
    }

    /// Single exponential kernel with density `rate * exp(rate * u)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![ExpTerm { weight: 1.0, rate }], vec![])
    }

    /// Dirac mass at `location <= 0`.
    pub fn dirac(location: f64) -> Result<Self> {
        Self::new(vec![], vec![PointTerm { weight: 1.0, location }])
    }

    pub fn exp_terms(&self) -> &[ExpTerm] {
        &self.exp_terms
    }

    pub fn point_terms(&self) -> &[PointTerm] {
        &self.point_terms
    }

    /// `mu^{(a)} = int exp(-a u) mu(du)`. Divergent moments are reported as
    /// `f64::INFINITY`.
    pub fn exp_moment(&self, a: f64) -> Result<f64> {
        if !(a >= 0.0) {
            return Err(Error::domain(format!("exponential moment needs a >= 0, got {a}")));
        }
        let mut sum = 0.0;
        for t in &self.exp_terms {
            if t.weight == 0.0 {
                continue;
            }
            if t.rate <= a {
                return Ok(f64::INFINITY);
            }
            sum += t.weight * t.rate / (t.rate - a);
        }
        for t in &self.point_terms {
            sum += t.weight * (-a * t.location).exp();
        }
        Ok(sum)
    }

    /// Mass of `(-inf, -k]`.
    pub fn tail_mass(&self, k: f64) -> Result<f64> {
        if !(k >= 0.0) {
            return Err(Error::domain(format!("tail mass needs k >= 0, got {k}")));
        }
        let exp: f64 = self.exp_terms.iter().map(|t| t.weight * (-t.rate * k).exp()).sum();
        let point: f64 = self
            .point_terms
            .iter()
            .filter(|t| t.location <= -k)
            .map(|t| t.weight)
            .sum();
        Ok(exp + point)
    }

    /// Supremum `a*` with `mu` in `P_a` for every `a < a*`.
    pub fn membership_bound(&self) -> f64 {
        self.exp_terms
            .iter()
            .filter(|t| t.weight > 0.0)
            .map(|t| t.rate)
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact weights of the piecewise-linear interpolant on the grid
    /// `t_m = m * grid_step`, `m = -depth..=0`, with a constant tail below
    /// `-depth * grid_step`.
    pub fn cell_weights(&self, grid_step: f64, depth: usize) -> Result<CellWeights> {
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(Error::domain(format!("grid step must be positive, got {grid_step}")));
        }
        if depth == 0 {
            return Err(Error::domain("depth must be at least 1"));
        }
        let mut w0 = vec![0.0; depth];
        let mut w1 = vec![0.0; depth];
        let mut tail_weight = 0.0;

        for t in &self.exp_terms {
            let x = t.rate * grid_step;
            let (p1, p2) = (phi1(x), phi2(x));
            let span = t.weight * x;
            for (i, (a, b)) in w0.iter_mut().zip(w1.iter_mut()).enumerate() {
                // cell i covers [m dt, (m+1) dt] with m = i - depth
                let left = (i as f64 - depth as f64) * grid_step;
                let scale = span * (t.rate * left).exp();
                *a += scale * p2;
                *b += scale * (p1 - p2);
            }
            tail_weight += t.weight * (-t.rate * depth as f64 * grid_step).exp();
        }

        for t in &self.point_terms {
            match locate(t.location, grid_step, depth) {
                None => tail_weight += t.weight,
                Some((lag, frac)) => {
                    // node `lag` is the right end of cell depth-lag-1
                    if frac == 0.0 {
                        if lag == 0 {
                            w1[depth - 1] += t.weight;
                        } else {
                            w0[depth - lag] += t.weight;
                        }
                    } else {
                        let i = depth - lag - 1;
                        w0[i] += t.weight * frac;
                        w1[i] += t.weight * (1.0 - frac);
                    }
                }
            }
        }

        Ok(CellWeights { grid_step, depth, w0, w1, tail_weight })
    }
}

/// Locates `u <= 0` on the grid: `Some((lag, frac))` with
/// `u = -(lag + frac) * dt`, `frac` in `[0, 1)`, or `None` when `u` lies in
/// the constant tail `u <= -depth * dt`.
pub(crate) fn locate(u: f64, dt: f64, depth: usize) -> Option<(usize, f64)> {
    let mut s = -u / dt;
    let nearest = s.round();
    if (s - nearest).abs() <= 4.0 * f64::EPSILON * nearest.max(1.0) {
        s = nearest;
    }
    if s >= depth as f64 {
        return None;
    }
    let lag = s.floor();
    Some((lag as usize, s - lag))
}

/// `(e^x - 1) / x`
fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// `(e^x - 1 - x) / x^2`
fn phi2(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // Taylor series, truncation error below x^6 / 5040
        let mut term = 0.5;
        let mut sum = term;
        for n in 3..10 {
            term *= x / n as f64;
            sum += term;
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// Quadrature weights for integrating the history interpolant against a
/// [`FadingMeasure`].
///
/// Cell `i` (`0 <= i < depth`) covers `[t_m, t_{m+1}]` with `m = i - depth`;
/// `w0[i]` multiplies the node at `t_m` (lag `depth - i`) and `w1[i]` the
/// node at `t_{m+1}` (lag `depth - i - 1`). `tail_weight` multiplies the
/// oldest node.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    pub grid_step: f64,
    pub depth: usize,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub tail_weight: f64,
}

impl CellWeights {
    pub fn total_mass(&self) -> f64 {
        self.w0.iter().sum::<f64>() + self.w1.iter().sum::<f64>() + self.tail_weight
    }

    /// Integral of the interpolant of scalar nodal values given oldest
    /// first: `nodes[0]` at `t_{-depth}`, `nodes[depth]` at `t_0`.
    pub fn apply(&self, nodes: &[f64]) -> Result<f64> {
        if nodes.len() != self.depth + 1 {
            return Err(Error::input(format!(
                "expected {} nodal values, got {}",
                self.depth + 1,
                nodes.len()
            )));
        }
        let cells: f64 = (0..self.depth)
            .map(|i| self.w0[i] * nodes[i] + self.w1[i] * nodes[i + 1])
            .sum();
        Ok(cells + self.tail_weight * nodes[0])
    }
}
