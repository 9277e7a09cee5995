//! The truncated Euler–Maruyama stepping engine.
//!
//! One step reads the history segment, forms
//! `Y = X(t_j) + f(X_{t_j}, theta_j) dt + g(X_{t_j}, theta_j) dB_j` and
//! projects `Y` onto the ball of radius `Gamma^-1(L dt^-lambda)`. The
//! convergence and stability variants differ only in which growth function
//! sizes that ball.

mod rng;

pub use rng::{RngStream, StreamPurpose, StreamReader};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::measures::CellWeights;
use crate::model::ModelSpec;
use crate::phase::{norm, HistoryBuffer, InitialData, KernelRecursion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeVariant {
    Convergence,
    Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Steps per unit time; `dt = 1 / l`.
    pub l: u32,
    /// Truncation depth in time units; the window holds `k * l + 1` states.
    pub k: u32,
    pub lambda: f64,
    pub variant: SchemeVariant,
    /// `L = Gamma(||xi||_r)`; recomputed from the initial data when absent.
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Decay exponent `alpha` of the depth rule.
    #[serde(default = "default_alpha")]
    pub alpha_decay: f64,
    /// Calibration constant `K` of the depth rule.
    #[serde(default = "default_k_cal")]
    pub k_cal: f64,
    pub t_final: f64,
    #[serde(default = "default_moment_order")]
    pub moment_order: f64,
    /// Record every n-th state; defaults to `l` (once per unit time).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    /// Use the O(1) recursion for exponential-kernel integrals.
    #[serde(default = "default_true")]
    pub kernel_recursion: bool,
}

fn default_alpha() -> f64 {
    3.5
}

fn default_k_cal() -> f64 {
    35f64.exp()
}

fn default_moment_order() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl SchemeConfig {
    pub fn new(l: u32, k: u32, lambda: f64, variant: SchemeVariant, t_final: f64) -> Self {
        SchemeConfig {
            l,
            k,
            lambda,
            variant,
            level: None,
            alpha_decay: default_alpha(),
            k_cal: default_k_cal(),
            t_final,
            moment_order: default_moment_order(),
            record_every: None,
            kernel_recursion: true,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.l as f64
    }

    pub fn depth(&self) -> usize {
        self.k as usize * self.l as usize
    }

    /// `floor(T / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_final * self.l as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::config("l must be a positive integer"));
        }
        if self.k == 0 {
            return Err(Error::config("k must be a positive integer"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 0.5) {
            return Err(Error::config(format!("lambda must lie in (0, 1/2], got {}", self.lambda)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::config(format!("horizon must be finite and >= 0, got {}", self.t_final)));
        }
        if self.record_every == Some(0) {
            return Err(Error::config("record_every must be positive"));
        }
        Ok(())
    }
}

/// `lambda = v / (2 (p - 1))`, valid when `p >= v + 1`.
pub fn polynomial_lambda(v: f64, p: f64) -> Result<f64> {
    if !(p >= v + 1.0) {
        return Err(Error::config(format!("need p >= v + 1 for lambda <= 1/2 (v = {v}, p = {p})")));
    }
    Ok(v / (2.0 * (p - 1.0)))
}

/// Depth rule `k_dt = floor(-ln(dt / K) / alpha)`.
pub fn select_k(dt: f64, k_cal: f64, alpha_decay: f64) -> Result<u32> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::config(format!("step size must lie in (0, 1], got {dt}")));
    }
    if !(k_cal >= 1.0) || !(alpha_decay > 0.0) {
        return Err(Error::config(format!("need K >= 1 and alpha > 0, got K = {k_cal}, alpha = {alpha_decay}")));
    }
    let k = ((k_cal.ln() - dt.ln()) / alpha_decay).floor();
    if k < 1.0 {
        return Err(Error::config(format!(
            "depth rule gives k = {k} < 1 for dt = {dt}, K = {k_cal}, alpha = {alpha_decay}"
        )));
    }
    Ok(k as u32)
}

/// Projects `x` onto the closed Euclidean ball of radius `radius`, in
/// place. Returns whether the projection was active.
pub fn truncate_state(x: &mut [f64], radius: f64) -> bool {
    let n = norm(x);
    if n <= radius {
        return false;
    }
    let mut scale = radius / n;
    loop {
        let clipped = x.iter().map(|v| v * scale).map(|v| v * v).sum::<f64>().sqrt();
        if clipped <= radius {
            break;
        }
        scale = scale.next_down();
    }
    for v in x.iter_mut() {
        *v *= scale;
    }
    true
}

/// One scheme step from the history in `buf`; `integrals[i]` must hold
/// `int X_{t_j} d measures()[i]`. Writes `X(t_{j+1})` into `out` and
/// returns whether truncation fired.
#[allow(clippy::too_many_arguments)]
pub fn step_into(
    model: &ModelSpec,
    buf: &HistoryBuffer,
    integrals: &[Vec<f64>],
    regime: usize,
    d_b: &[f64],
    dt: f64,
    radius: f64,
    scratch: &mut StepScratch,
    out: &mut [f64],
) -> Result<bool> {
    let n = model.dim();
    let d = model.noise_dim();
    model.drift_into(buf, integrals, regime, &mut scratch.drift);
    model.diffusion_into(buf, integrals, regime, &mut scratch.diffusion);
    let x = buf.current();
    for c in 0..n {
        let mut noise = 0.0;
        for (q, db) in d_b.iter().enumerate().take(d) {
            noise += scratch.diffusion[c * d + q] * db;
        }
        out[c] = x[c] + scratch.drift[c] * dt + noise;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "non-finite intermediate state at step {} (regime {})",
            buf.step_index(),
            regime + 1
        )));
    }
    Ok(truncate_state(out, radius))
}

/// Work arrays for [`step_into`].
#[derive(Debug, Clone)]
pub struct StepScratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl StepScratch {
    pub fn new(model: &ModelSpec) -> Self {
        StepScratch { drift: vec![0.0; model.dim()], diffusion: vec![0.0; model.dim() * model.noise_dim()] }
    }
}

/// Single step computing the measure integrals by O(depth) quadrature.
pub fn step(
    model: &ModelSpec,
    buf: &HistoryBuffer,
    weights: &[CellWeights],
    regime: usize,
    d_b: &[f64],
    radius: f64,
) -> Result<Vec<f64>> {
    if d_b.len() != model.noise_dim() {
        return Err(Error::input(format!(
            "Brownian increment has {} components, model needs {}",
            d_b.len(),
            model.noise_dim()
        )));
    }
    let integrals: Vec<Vec<f64>> = weights.iter().map(|w| buf.integrate(w)).collect::<Result<_>>()?;
    let mut scratch = StepScratch::new(model);
    let mut out = vec![0.0; model.dim()];
    step_into(model, buf, &integrals, regime, d_b, buf.grid_step(), radius, &mut scratch, &mut out)?;
    Ok(out)
}

/// Recorded output of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// 0-based regimes aligned with `states`.
    pub regimes: Vec<usize>,
    pub truncation_events: u64,
    /// Largest `|X(t_j)|` over every computed `j >= 1`, recorded or not.
    pub max_state_norm: f64,
    pub radius: f64,
    pub terminal: Vec<f64>,
}

impl Trajectory {
    /// CSV with header `t,x1..xn,regime`; regimes 1-based.
    pub fn to_csv(&self) -> String {
        let n = self.terminal.len();
        let mut s = String::from("t");
        for c in 1..=n {
            s.push_str(&format!(",x{c}"));
        }
        s.push_str(",regime\n");
        for ((t, x), r) in self.times.iter().zip(&self.states).zip(&self.regimes) {
            s.push_str(&format!("{t}"));
            for v in x {
                s.push_str(&format!(",{v:e}"));
            }
            s.push_str(&format!(",{}\n", r + 1));
        }
        s
    }
}

enum Integrators {
    Direct(Vec<CellWeights>),
    Recursive,
}

/// Per-configuration precomputation shared by every path.
pub struct PathEngine<'a> {
    model: &'a ModelSpec,
    dt: f64,
    steps: usize,
    radius: f64,
    template: HistoryBuffer,
    integrators: Integrators,
}

impl<'a> PathEngine<'a> {
    pub fn new(cfg: &SchemeConfig, model: &'a ModelSpec, xi: &InitialData) -> Result<Self> {
        cfg.validate()?;
        model.growth.validate()?;
        let dim = model.dim();
        let xi_norm = xi.r_norm(dim)?;
        if !xi_norm.is_finite() {
            return Err(Error::config(format!("initial data is not in C_r for r = {}", xi.r)));
        }
        let level = model.growth.level(xi_norm);
        if let Some(given) = cfg.level {
            if (given - level).abs() > 1e-12 * level.abs().max(1.0) {
                return Err(Error::config(format!(
                    "configured L = {given} disagrees with Gamma(||xi||_r) = {level}"
                )));
            }
        }
        if cfg.variant == SchemeVariant::Stability && !model.check_zero_fixed_point() {
            return Err(Error::config("stability variant requires f(0, i) = g(0, i) = 0"));
        }
        let dt = cfg.dt();
        let radius = model.growth.truncation_radius(level, dt, cfg.lambda)?;
        let depth = cfg.depth();
        let template = HistoryBuffer::new(xi, dim, dt, depth)?;
        let integrators = if cfg.kernel_recursion {
            Integrators::Recursive
        } else {
            Integrators::Direct(
                model.measures().iter().map(|m| m.cell_weights(dt, depth)).collect::<Result<_>>()?,
            )
        };
        Ok(PathEngine { model, dt, steps: cfg.steps(), radius, template, integrators })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Runs one path. `skeleton[j]` is the regime on `[t_j, t_{j+1})` and
    /// `noise(j, dB)` fills the Brownian increment of step `j`.
    pub fn run(
        &self,
        skeleton: &[usize],
        mut noise: impl FnMut(u64, &mut [f64]),
        record_every: usize,
    ) -> Result<Trajectory> {
        if skeleton.len() < self.steps + 1 {
            return Err(Error::input(format!(
                "chain skeleton has {} states, need {}",
                skeleton.len(),
                self.steps + 1
            )));
        }
        if let Some(bad) = skeleton.iter().find(|&&r| r >= self.model.n_regimes()) {
            return Err(Error::input(format!("regime {} outside the model's regimes", bad + 1)));
        }
        let record_every = record_every.max(1);
        let model = self.model;
        let dim = model.dim();
        let mut buf = self.template.clone();
        let mut trackers: Vec<KernelRecursion> = match &self.integrators {
            Integrators::Recursive => {
                model.measures().iter().map(|m| KernelRecursion::new(m, &buf)).collect::<Result<_>>()?
            }
            Integrators::Direct(_) => Vec::new(),
        };
        let mut integrals = vec![vec![0.0; dim]; model.measures().len()];
        let mut scratch = StepScratch::new(model);
        let mut d_b = vec![0.0; model.noise_dim()];
        let mut next = vec![0.0; dim];

        let mut traj = Trajectory {
            times: vec![0.0],
            states: vec![buf.current().to_vec()],
            regimes: vec![skeleton[0]],
            truncation_events: 0,
            max_state_norm: 0.0,
            radius: self.radius,
            terminal: buf.current().to_vec(),
        };

        for j in 0..self.steps {
            match &self.integrators {
                Integrators::Recursive => {
                    for (t, out) in trackers.iter().zip(integrals.iter_mut()) {
                        t.value_into(&buf, out);
                    }
                }
                Integrators::Direct(weights) => {
                    for (w, out) in weights.iter().zip(integrals.iter_mut()) {
                        *out = buf.integrate(w)?;
                    }
                }
            }
            noise(j as u64, &mut d_b);
            let regime = skeleton[j];
            if step_into(model, &buf, &integrals, regime, &d_b, self.dt, self.radius, &mut scratch, &mut next)? {
                traj.truncation_events += 1;
            }
            for t in trackers.iter_mut() {
                t.advance(&buf, &next);
            }
            buf.push(&next)?;
            traj.max_state_norm = traj.max_state_norm.max(norm(&next));
            let done = j + 1;
            if done % record_every == 0 || done == self.steps {
                traj.times.push(done as f64 * self.dt);
                traj.states.push(next.clone());
                traj.regimes.push(skeleton[done]);
            }
        }
        traj.terminal = buf.current().to_vec();
        Ok(traj)
    }
}

/// Simulates one path with its own chain skeleton and Brownian stream.
pub fn simulate_path(
    cfg: &SchemeConfig,
    model: &ModelSpec,
    xi: &InitialData,
    chain: &MarkovChain,
    start_regime: usize,
    streams: (&RngStream, &RngStream),
    record_every: usize,
) -> Result<Trajectory> {
    if chain.n_states() != model.n_regimes() {
        return Err(Error::config(format!(
            "chain has {} states, model has {} regimes",
            chain.n_states(),
            model.n_regimes()
        )));
    }
    let engine = PathEngine::new(cfg, model, xi)?;
    let skeleton = chain.sample_discrete_chain(engine.dt(), engine.steps(), start_regime, streams.1)?;
    let mut reader = streams.0.reader();
    let dt = engine.dt();
    engine.run(&skeleton, |j, out| reader.fill_increments(j, dt, out), record_every)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthSpec, RegimeTerms, Term};
    use approx::assert_relative_eq;

    #[test]
    fn truncate_examples() {
        let mut x = [3.0, 4.0];
        assert!(!truncate_state(&mut x, 10.0));
        assert_eq!(x, [3.0, 4.0]);
        assert!(truncate_state(&mut x, 2.5));
        assert_relative_eq!(x[0], 1.5, epsilon = 1e-15);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-15);
        let mut z = [0.0, 0.0];
        assert!(!truncate_state(&mut z, 0.0));
        assert_eq!(z, [0.0, 0.0]);
        for i in 1..2000 {
            let mut y = [i as f64 * 0.37, -(i as f64).sqrt(), 1.0 / i as f64];
            let r = 0.1 + (i % 17) as f64 * 0.31;
            truncate_state(&mut y, r);
            assert!(norm(&y) <= r);
        }
    }

    #[test]
    fn select_k_examples() {
        let k_cal = 35f64.exp();
        assert_eq!(select_k(2f64.powi(-11), k_cal, 3.5).unwrap(), 12);
        for e in 11..=15 {
            assert!(select_k(2f64.powi(-e), k_cal, 3.5).unwrap() >= 10);
        }
        assert!(matches!(select_k(0.5, 0.5, 1.0), Err(Error::Config(_))));
        assert!(matches!(select_k(1.0, 1.0, 1.0), Err(Error::Config(_))));
        assert!(select_k(1.5, k_cal, 3.5).is_err());
    }

    #[test]
    fn lambda_rule() {
        assert_eq!(polynomial_lambda(2.0, 3.0).unwrap(), 0.5);
        assert!(polynomial_lambda(2.0, 2.5).is_err());
    }

    fn linear_model(a: f64, b: f64) -> ModelSpec {
        ModelSpec::declarative(
            1,
            &[RegimeTerms {
                drift: vec![Term::PointPower { coeff: a, exponent: 1.0 }],
                diffusion: vec![Term::PointPower { coeff: b, exponent: 1.0 }],
            }],
            GrowthSpec::constant(1.0),
        )
        .unwrap()
    }

    #[test]
    fn step_examples() {
        let buf = HistoryBuffer::new(&InitialData::constant(2.0), 1, 0.25, 4).unwrap();
        let zero = linear_model(0.0, 0.0);
        assert_eq!(step(&zero, &buf, &[], 0, &[0.3], f64::INFINITY).unwrap(), vec![2.0]);
        let decay = linear_model(-1.0, 0.0);
        assert_eq!(step(&decay, &buf, &[], 0, &[0.3], f64::INFINITY).unwrap(), vec![(1.0 - 0.25) * 2.0]);
        let blow = linear_model(10.0, 0.0);
        let x = step(&blow, &buf, &[], 0, &[0.0], 1.5).unwrap();
        assert_eq!(x[0].abs(), 1.5);
        assert!(step(&decay, &buf, &[], 0, &[0.3, 0.1], 1.0).is_err());
    }

    #[test]
    fn non_finite_states_are_reported() {
        let buf = HistoryBuffer::new(&InitialData::constant(1e200), 1, 0.5, 2).unwrap();
        let m = ModelSpec::declarative(
            1,
            &[RegimeTerms { drift: vec![Term::PointPower { coeff: 1.0, exponent: 3.0 }], diffusion: vec![] }],
            GrowthSpec::constant(1.0),
        )
        .unwrap();
        let err = step(&m, &buf, &[], 0, &[0.0], f64::INFINITY).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref s) if s.contains("step 0")));
    }

    #[test]
    fn csv_layout() {
        let t = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![1.0, 2.0], vec![0.5, 0.25]],
            regimes: vec![0, 1],
            truncation_events: 0,
            max_state_norm: 0.0,
            radius: 1.0,
            terminal: vec![0.5, 0.25],
        };
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,regime"));
        assert_eq!(lines.next(), Some("0,1e0,2e0,1"));
        assert_eq!(lines.next(), Some("1,5e-1,2.5e-1,2"));
    }
}
