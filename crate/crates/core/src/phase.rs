//! Bounded-memory solution history.
//!
//! A [`HistoryBuffer`] keeps the last `depth + 1` grid values of the state
//! (`depth = k * l`). The segment `X_{t_j}(u)` seen by the coefficients is
//! the piecewise-linear interpolant of these values on
//! `[-depth * dt, 0]`, extended by the oldest value below that window. It is
//! never materialised; [`HistoryBuffer::evaluate`] and
//! [`HistoryBuffer::integrate`] work directly on the ring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{locate, CellWeights, FadingMeasure};

/// Scalar-or-vector JSON value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Components {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Components {
    fn to_vec(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            Components::Scalar(v) => Ok(vec![*v; dim]),
            Components::Vector(v) if v.len() == dim => Ok(v.clone()),
            Components::Vector(v) => Err(Error::input(format!(
                "initial data has {} components, state dimension is {dim}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialShape {
    /// `xi(u) = scale * exp(c u)`
    Exponential { c: f64, scale: Components },
    Constant { value: Components },
    /// `values[i] = xi(-i * step)`, newest first.
    Tabulated { step: f64, values: Vec<Components> },
}

/// Initial segment `xi` on `(-inf, 0]` together with the fading-memory
/// exponent `r` of the phase space it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    #[serde(flatten)]
    pub shape: InitialShape,
    #[serde(default = "default_r")]
    pub r: f64,
    /// `(d1, d2)` with `|xi(t1) - xi(t2)| <= d1 |t1 - t2|^d2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<(f64, f64)>,
}

fn default_r() -> f64 {
    1.0
}

impl InitialData {
    pub fn new(shape: InitialShape, r: f64) -> Self {
        InitialData { shape, r, holder: None }
    }

    pub fn exponential(c: f64, scale: f64, r: f64) -> Self {
        Self::new(InitialShape::Exponential { c, scale: Components::Scalar(scale) }, r)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(InitialShape::Constant { value: Components::Scalar(value) }, 1.0)
    }

    /// `xi(u)` at a time `u <= 0`.
    pub fn value_at(&self, u: f64, dim: usize) -> Result<Vec<f64>> {
        match &self.shape {
            InitialShape::Exponential { c, scale } => {
                let e = (c * u).exp();
                Ok(scale.to_vec(dim)?.into_iter().map(|s| s * e).collect())
            }
            InitialShape::Constant { value } => value.to_vec(dim),
            InitialShape::Tabulated { step, values } => {
                let s = -u / step;
                let idx = s.round();
                if (s - idx).abs() > 1e-9 * idx.max(1.0) || idx < 0.0 {
                    return Err(Error::input(format!(
                        "tabulated initial data has no grid point at u = {u} (step {step})"
                    )));
                }
                values
                    .get(idx as usize)
                    .ok_or_else(|| {
                        Error::input(format!(
                            "tabulated initial data covers {} points, u = {u} needs index {idx}",
                            values.len()
                        ))
                    })?
                    .to_vec(dim)
            }
        }
    }

    /// `||xi||_r = sup_{u <= 0} e^{r u} |xi(u)|`; a discrete sup for
    /// tabulated data. Infinite when `xi` is not in the phase space.
    pub fn r_norm(&self, dim: usize) -> Result<f64> {
        match &self.shape {
            InitialShape::Exponential { c, scale } => {
                let s = norm(&scale.to_vec(dim)?);
                if s == 0.0 || *c >= -self.r {
                    Ok(s)
                } else {
                    Ok(f64::INFINITY)
                }
            }
            InitialShape::Constant { value } => Ok(norm(&value.to_vec(dim)?)),
            InitialShape::Tabulated { step, values } => {
                let mut sup: f64 = 0.0;
                for (i, v) in values.iter().enumerate() {
                    let u = -(i as f64) * step;
                    sup = sup.max((self.r * u).exp() * norm(&v.to_vec(dim)?));
                }
                Ok(sup)
            }
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Ring buffer holding `X(t_{j-depth}), ..., X(t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    dim: usize,
    grid_step: f64,
    depth: usize,
    data: Vec<f64>,
    newest: usize,
    step: u64,
}

impl HistoryBuffer {
    /// Fills the ring with `xi(t_j)`, `j = -depth..=0`.
    pub fn new(xi: &InitialData, dim: usize, grid_step: f64, depth: usize) -> Result<Self> {
        let mut buf = Self::zeros(dim, grid_step, depth)?;
        for lag in 0..=depth {
            let v = xi.value_at(-(lag as f64) * grid_step, dim)?;
            buf.lag_mut(lag).copy_from_slice(&v);
        }
        Ok(buf)
    }

    pub fn zeros(dim: usize, grid_step: f64, depth: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("state dimension must be at least 1"));
        }
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(Error::domain(format!("grid step must be positive, got {grid_step}")));
        }
        if depth == 0 {
            return Err(Error::domain("depth must be at least 1"));
        }
        Ok(HistoryBuffer {
            dim,
            grid_step,
            depth,
            data: vec![0.0; (depth + 1) * dim],
            newest: depth,
            step: 0,
        })
    }

    /// Builds a buffer from nodal values listed oldest first.
    pub fn from_nodes(dim: usize, grid_step: f64, nodes: &[Vec<f64>]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::input("need at least two nodes"));
        }
        let depth = nodes.len() - 1;
        let mut buf = Self::zeros(dim, grid_step, depth)?;
        for (i, v) in nodes.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::input("node dimension mismatch"));
            }
            buf.lag_mut(depth - i).copy_from_slice(v);
        }
        Ok(buf)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Index `j` of the newest value `X(t_j)`.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Number of stored state entries; `(depth + 1) * dim` forever.
    pub fn retained_len(&self) -> usize {
        self.data.len()
    }

    fn slot(&self, lag: usize) -> usize {
        let slots = self.depth + 1;
        (self.newest + slots - lag) % slots
    }

    /// `X(t_{j - lag})`.
    pub fn lag(&self, lag: usize) -> &[f64] {
        assert!(lag <= self.depth, "lag {lag} beyond depth {}", self.depth);
        let s = self.slot(lag) * self.dim;
        &self.data[s..s + self.dim]
    }

    fn lag_mut(&mut self, lag: usize) -> &mut [f64] {
        let s = self.slot(lag) * self.dim;
        &mut self.data[s..s + self.dim]
    }

    pub fn current(&self) -> &[f64] {
        self.lag(0)
    }

    pub fn oldest(&self) -> &[f64] {
        self.lag(self.depth)
    }

    /// Evicts the oldest value and appends `x` as the newest.
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "pushed state has dimension {}, buffer has {}",
                x.len(),
                self.dim
            )));
        }
        self.newest = (self.newest + 1) % (self.depth + 1);
        self.lag_mut(0).copy_from_slice(x);
        self.step += 1;
        Ok(())
    }

    /// The interpolant `X_{t_j}(u)` at `u <= 0`.
    pub fn evaluate(&self, u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.evaluate_into(u, &mut out);
        out
    }

    pub fn evaluate_into(&self, u: f64, out: &mut [f64]) {
        match locate(u.min(0.0), self.grid_step, self.depth) {
            None => out.copy_from_slice(self.oldest()),
            Some((lag, 0.0)) => out.copy_from_slice(self.lag(lag)),
            Some((lag, frac)) => {
                let (near, far) = (self.lag(lag), self.lag(lag + 1));
                for ((o, a), b) in out.iter_mut().zip(near).zip(far) {
                    *o = (1.0 - frac) * a + frac * b;
                }
            }
        }
    }

    fn check_weights(&self, w: &CellWeights) -> Result<()> {
        if w.depth != self.depth || (w.grid_step - self.grid_step).abs() > 1e-15 * self.grid_step {
            return Err(Error::input(format!(
                "weights built for (dt {}, depth {}), buffer has (dt {}, depth {})",
                w.grid_step, w.depth, self.grid_step, self.depth
            )));
        }
        Ok(())
    }

    /// `int X_{t_j}(u) mu(du)` componentwise.
    pub fn integrate(&self, w: &CellWeights) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        let mut out = vec![0.0; self.dim];
        for i in 0..self.depth {
            let (left, right) = (self.lag(self.depth - i), self.lag(self.depth - i - 1));
            for c in 0..self.dim {
                out[c] += w.w0[i] * left[c] + w.w1[i] * right[c];
            }
        }
        for (o, v) in out.iter_mut().zip(self.oldest()) {
            *o += w.tail_weight * v;
        }
        Ok(out)
    }

    /// Weighted nodal sum `sum w * T(node)` for a scalar transform `T`. For
    /// nonlinear `T` this integrates the interpolant of the transformed
    /// nodes, e.g. the squared-history quantity in the growth bounds.
    pub fn integrate_scalar(&self, w: &CellWeights, transform: impl Fn(&[f64]) -> f64) -> Result<f64> {
        self.check_weights(w)?;
        let mut sum = w.tail_weight * transform(self.oldest());
        let mut right = transform(self.lag(self.depth));
        for i in 0..self.depth {
            let left = right;
            right = transform(self.lag(self.depth - i - 1));
            sum += w.w0[i] * left + w.w1[i] * right;
        }
        Ok(sum)
    }

    pub fn integrate_squared_norm(&self, w: &CellWeights) -> Result<f64> {
        self.integrate_scalar(w, |x| x.iter().map(|v| v * v).sum())
    }
}

/// O(1)-per-step evaluation of `int X_{t_j}(u) mu(du)` for a fixed measure.
///
/// For an exponential kernel the weights of cell `s` (counted back from the
/// newest) are `rho^s` times those of the newest cell, `rho = e^{-rate dt}`,
/// so the in-window sum obeys
/// `S' = A x_j + B x_{j+1} + rho (S - rho^{depth-1} (A x_{j-depth} + B x_{j-depth+1}))`.
/// Point masses and the tail are read directly from the ring.
#[derive(Debug, Clone)]
pub struct KernelRecursion {
    dim: usize,
    depth: usize,
    kernels: Vec<KernelSum>,
    sparse: Vec<(usize, f64, usize, f64)>,
    tail_weight: f64,
}

#[derive(Debug, Clone)]
struct KernelSum {
    a: f64,
    b: f64,
    rho: f64,
    rho_last: f64,
    sum: Vec<f64>,
}

impl KernelRecursion {
    pub fn new(measure: &FadingMeasure, buf: &HistoryBuffer) -> Result<Self> {
        let (dt, depth, dim) = (buf.grid_step, buf.depth, buf.dim);
        let mut tail_weight = 0.0;
        let mut kernels = Vec::with_capacity(measure.exp_terms().len());
        for t in measure.exp_terms() {
            let single = FadingMeasure::exponential(t.rate)?.cell_weights(dt, 1)?;
            let (a, b) = (t.weight * single.w0[0], t.weight * single.w1[0]);
            let rho = (-t.rate * dt).exp();
            let mut k = KernelSum { a, b, rho, rho_last: rho.powi(depth as i32 - 1), sum: vec![0.0; dim] };
            let mut scale = 1.0;
            for s in 0..depth {
                let (left, right) = (buf.lag(s + 1), buf.lag(s));
                for c in 0..dim {
                    k.sum[c] += scale * (a * left[c] + b * right[c]);
                }
                scale *= rho;
            }
            tail_weight += t.weight * (-t.rate * depth as f64 * dt).exp();
            kernels.push(k);
        }
        let mut sparse = Vec::new();
        for p in measure.point_terms() {
            match locate(p.location, dt, depth) {
                None => tail_weight += p.weight,
                Some((lag, frac)) => {
                    let far = (lag + 1).min(depth);
                    sparse.push((lag, p.weight * (1.0 - frac), far, p.weight * frac));
                }
            }
        }
        Ok(KernelRecursion { dim, depth, kernels, sparse, tail_weight })
    }

    /// Current integral given the buffer this tracker follows.
    pub fn value_into(&self, buf: &HistoryBuffer, out: &mut [f64]) {
        let oldest = buf.oldest();
        for c in 0..self.dim {
            out[c] = self.tail_weight * oldest[c];
        }
        for k in &self.kernels {
            for (o, v) in out.iter_mut().zip(&k.sum) {
                *o += v;
            }
        }
        for &(near, wn, far, wf) in &self.sparse {
            let (a, b) = (buf.lag(near), buf.lag(far));
            for c in 0..self.dim {
                out[c] += wn * a[c] + wf * b[c];
            }
        }
    }

    pub fn value(&self, buf: &HistoryBuffer) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.value_into(buf, &mut out);
        out
    }

    /// Updates the running sums for `next` about to be pushed onto `buf`.
    /// Must be called before the push.
    pub fn advance(&mut self, buf: &HistoryBuffer, next: &[f64]) {
        let (newest, oldest, second) = (buf.lag(0), buf.lag(self.depth), buf.lag(self.depth - 1));
        for k in &mut self.kernels {
            for c in 0..self.dim {
                let dropped = k.rho_last * (k.a * oldest[c] + k.b * second[c]);
                k.sum[c] = k.a * newest[c] + k.b * next[c] + k.rho * (k.sum[c] - dropped);
            }
        }
    }
}
