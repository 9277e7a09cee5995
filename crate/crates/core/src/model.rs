//! Drift and diffusion functionals, growth calibration and stability
//! parameters.
//!
//! Declarative models are sums of two term kinds, applied componentwise:
//! a point power `c * |x|^{p-1} x` of the current state `x = phi(0)`, and a
//! measure integral `c * int phi(u) mu(du)`. Declarative diffusion is
//! diagonal (one Brownian component per state component) and restricted to
//! linear point terms and measure integrals. Anything else goes through a
//! callback model.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{CellWeights, FadingMeasure};
use crate::phase::HistoryBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    PointPower { coeff: f64, exponent: f64 },
    MeasureIntegral { coeff: f64, measure: FadingMeasure },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTerms {
    #[serde(default)]
    pub drift: Vec<Term>,
    #[serde(default)]
    pub diffusion: Vec<Term>,
}

/// `f(history, regime, out)` writing `dim` drift components, or
/// `dim * noise_dim` row-major diffusion entries.
pub type Functional = dyn Fn(&HistoryBuffer, usize, &mut [f64]) + Send + Sync;

/// Programmatic model. Both functionals must be pure: the harness calls
/// them concurrently from several worker threads.
#[derive(Clone)]
pub struct CallbackModel {
    pub n_regimes: usize,
    pub noise_dim: usize,
    pub drift: Arc<Functional>,
    pub diffusion: Arc<Functional>,
}

impl fmt::Debug for CallbackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallbackModel")
            .field("n_regimes", &self.n_regimes)
            .field("noise_dim", &self.noise_dim)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy)]
enum Compiled {
    Power { coeff: f64, exponent: f64 },
    Integral { coeff: f64, measure: usize },
}

#[derive(Debug, Clone)]
struct CompiledRegime {
    drift: Vec<Compiled>,
    diffusion: Vec<Compiled>,
}

#[derive(Debug, Clone)]
enum Backend {
    Declarative(Vec<CompiledRegime>),
    Callback(CallbackModel),
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    dim: usize,
    backend: Backend,
    measures: Vec<FadingMeasure>,
    pub growth: GrowthSpec,
    pub stability: Option<StabilityParams>,
}

impl ModelSpec {
    pub fn declarative(dim: usize, regimes: &[RegimeTerms], growth: GrowthSpec) -> Result<Self> {
        if dim == 0 || regimes.is_empty() {
            return Err(Error::config("model needs dim >= 1 and at least one regime"));
        }
        let mut measures: Vec<FadingMeasure> = Vec::new();
        let mut compile = |t: &Term, diffusion: bool| -> Result<Compiled> {
            match t {
                Term::PointPower { coeff, exponent } => {
                    if !(*exponent >= 1.0) {
                        return Err(Error::config(format!("point exponent must be >= 1, got {exponent}")));
                    }
                    if diffusion && *exponent != 1.0 {
                        return Err(Error::config(format!(
                            "diffusion point terms must be linear (exponent 1), got {exponent}"
                        )));
                    }
                    Ok(Compiled::Power { coeff: *coeff, exponent: *exponent })
                }
                Term::MeasureIntegral { coeff, measure } => {
                    let idx = match measures.iter().position(|m| m == measure) {
                        Some(i) => i,
                        None => {
                            measures.push(measure.clone());
                            measures.len() - 1
                        }
                    };
                    Ok(Compiled::Integral { coeff: *coeff, measure: idx })
                }
            }
        };
        let mut compiled = Vec::with_capacity(regimes.len());
        for r in regimes {
            let drift = r.drift.iter().map(|t| compile(t, false)).collect::<Result<_>>()?;
            let diffusion = r.diffusion.iter().map(|t| compile(t, true)).collect::<Result<_>>()?;
            compiled.push(CompiledRegime { drift, diffusion });
        }
        Ok(ModelSpec {
            dim,
            backend: Backend::Declarative(compiled),
            measures,
            growth,
            stability: None,
        })
    }

    pub fn callback(dim: usize, model: CallbackModel, growth: GrowthSpec) -> Result<Self> {
        if dim == 0 || model.n_regimes == 0 || model.noise_dim == 0 {
            return Err(Error::config("callback model needs positive dim, noise_dim and regime count"));
        }
        Ok(ModelSpec { dim, backend: Backend::Callback(model), measures: vec![], growth, stability: None })
    }

    pub fn with_stability(mut self, s: StabilityParams) -> Self {
        self.stability = Some(s);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        match &self.backend {
            Backend::Declarative(_) => self.dim,
            Backend::Callback(c) => c.noise_dim,
        }
    }

    pub fn n_regimes(&self) -> usize {
        match &self.backend {
            Backend::Declarative(r) => r.len(),
            Backend::Callback(c) => c.n_regimes,
        }
    }

    /// Distinct measures referenced by integral terms; `integrals[i]` passed
    /// to [`ModelSpec::drift_into`] must be `int phi dmeasures()[i]`.
    pub fn measures(&self) -> &[FadingMeasure] {
        &self.measures
    }

    fn check_regime(&self, regime: usize) -> Result<()> {
        if regime >= self.n_regimes() {
            return Err(Error::input(format!(
                "regime {} outside 1..={}",
                regime + 1,
                self.n_regimes()
            )));
        }
        Ok(())
    }

    /// Drift with measure integrals already evaluated.
    pub fn drift_into(&self, buf: &HistoryBuffer, integrals: &[Vec<f64>], regime: usize, out: &mut [f64]) {
        match &self.backend {
            Backend::Declarative(regimes) => {
                let x = buf.current();
                out.fill(0.0);
                for term in &regimes[regime].drift {
                    match *term {
                        Compiled::Power { coeff, exponent } => {
                            for (o, &v) in out.iter_mut().zip(x) {
                                *o += coeff * odd_power(v, exponent);
                            }
                        }
                        Compiled::Integral { coeff, measure } => {
                            for (o, &v) in out.iter_mut().zip(&integrals[measure]) {
                                *o += coeff * v;
                            }
                        }
                    }
                }
            }
            Backend::Callback(c) => (c.drift)(buf, regime, out),
        }
    }

    /// Diffusion as a row-major `dim x noise_dim` matrix.
    pub fn diffusion_into(&self, buf: &HistoryBuffer, integrals: &[Vec<f64>], regime: usize, out: &mut [f64]) {
        match &self.backend {
            Backend::Declarative(regimes) => {
                let n = self.dim;
                let x = buf.current();
                out.fill(0.0);
                for term in &regimes[regime].diffusion {
                    for c in 0..n {
                        out[c * n + c] += match *term {
                            Compiled::Power { coeff, .. } => coeff * x[c],
                            Compiled::Integral { coeff, measure } => coeff * integrals[measure][c],
                        };
                    }
                }
            }
            Backend::Callback(c) => (c.diffusion)(buf, regime, out),
        }
    }

    fn integrals_from_weights(&self, buf: &HistoryBuffer, weights: &[CellWeights]) -> Result<Vec<Vec<f64>>> {
        if weights.len() != self.measures.len() {
            return Err(Error::input(format!(
                "model needs weights for {} measures, got {}",
                self.measures.len(),
                weights.len()
            )));
        }
        weights.iter().map(|w| buf.integrate(w)).collect()
    }

    /// `f(X_{t_j}, regime)` using O(depth) quadrature. `weights[i]` belongs
    /// to `measures()[i]`.
    pub fn eval_drift(&self, buf: &HistoryBuffer, weights: &[CellWeights], regime: usize) -> Result<Vec<f64>> {
        self.check_regime(regime)?;
        let integrals = self.integrals_from_weights(buf, weights)?;
        let mut out = vec![0.0; self.dim];
        self.drift_into(buf, &integrals, regime, &mut out);
        Ok(out)
    }

    /// `g(X_{t_j}, regime)` as a row-major `dim x noise_dim` matrix.
    pub fn eval_diffusion(&self, buf: &HistoryBuffer, weights: &[CellWeights], regime: usize) -> Result<Vec<f64>> {
        self.check_regime(regime)?;
        let integrals = self.integrals_from_weights(buf, weights)?;
        let mut out = vec![0.0; self.dim * self.noise_dim()];
        self.diffusion_into(buf, &integrals, regime, &mut out);
        Ok(out)
    }

    /// Whether `f(0, i) = 0` and `g(0, i) = 0` for every regime.
    pub fn check_zero_fixed_point(&self) -> bool {
        match &self.backend {
            // no constant terms exist in the declarative family
            Backend::Declarative(_) => true,
            Backend::Callback(c) => {
                let Ok(zero) = HistoryBuffer::zeros(self.dim, 1.0, 1) else {
                    return false;
                };
                let mut f = vec![0.0; self.dim];
                let mut g = vec![0.0; self.dim * c.noise_dim];
                (0..c.n_regimes).all(|i| {
                    (c.drift)(&zero, i, &mut f);
                    (c.diffusion)(&zero, i, &mut g);
                    f.iter().chain(g.iter()).all(|v| v.abs() <= 1e-14)
                })
            }
        }
    }
}

#[inline]
fn odd_power(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 3.0 {
        x * x * x
    } else if p.fract() == 0.0 && p <= 64.0 {
        x.abs().powi(p as i32 - 1) * x
    } else {
        x.abs().powf(p - 1.0) * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthVariant {
    /// `Gamma(R) = d5 (1 + d6 R^v)`
    Affine,
    /// `Gamma_bar(R) = d5 d6 R^v`, vanishing at 0
    Homogeneous,
    /// `Gamma(R) = d5`; globally Lipschitz coefficients, no truncation
    Constant,
}

/// Growth calibration used to size the truncation ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub d5: f64,
    #[serde(default = "one")]
    pub d6: f64,
    #[serde(default = "one")]
    pub v: f64,
    pub variant: GrowthVariant,
}

fn one() -> f64 {
    1.0
}

impl GrowthSpec {
    pub fn affine(d5: f64, d6: f64, v: f64) -> Self {
        GrowthSpec { d5, d6, v, variant: GrowthVariant::Affine }
    }

    pub fn homogeneous(d5: f64, d6: f64, v: f64) -> Self {
        GrowthSpec { d5, d6, v, variant: GrowthVariant::Homogeneous }
    }

    pub fn constant(d5: f64) -> Self {
        GrowthSpec { d5, d6: 1.0, v: 1.0, variant: GrowthVariant::Constant }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d5 > 0.0 && self.d6 > 0.0 && self.v > 0.0) || !(self.d5 * self.d6 * self.v).is_finite() {
            return Err(Error::config(format!(
                "growth needs positive finite d5, d6, v; got ({}, {}, {})",
                self.d5, self.d6, self.v
            )));
        }
        Ok(())
    }

    pub fn gamma(&self, r: f64) -> f64 {
        match self.variant {
            GrowthVariant::Affine => self.d5 * (1.0 + self.d6 * r.powf(self.v)),
            GrowthVariant::Homogeneous => self.d5 * self.d6 * r.powf(self.v),
            GrowthVariant::Constant => self.d5,
        }
    }

    /// Generalised inverse `sup { R : Gamma(R) <= y }` on `[Gamma(0), inf)`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let floor = self.gamma(0.0);
        if !(y >= floor) {
            return Err(Error::domain(format!("Gamma^-1 defined on [{floor}, inf), got {y}")));
        }
        Ok(match self.variant {
            GrowthVariant::Affine => {
                // (y / d5 - 1) / d6 keeps precision better than y/(d5 d6) - 1/d6
                ((y / self.d5 - 1.0) / self.d6).max(0.0).powf(1.0 / self.v)
            }
            GrowthVariant::Homogeneous => (y / (self.d5 * self.d6)).powf(1.0 / self.v),
            GrowthVariant::Constant => f64::INFINITY,
        })
    }

    /// `L = Gamma(||xi||_r)`. The homogeneous variant uses its affine
    /// companion `d5 (1 + d6 R^v)` so `L` is positive even for `xi = 0`.
    pub fn level(&self, xi_norm: f64) -> f64 {
        match self.variant {
            GrowthVariant::Homogeneous => self.d5 * (1.0 + self.d6 * xi_norm.powf(self.v)),
            _ => self.gamma(xi_norm),
        }
    }

    /// `Gamma^-1(L dt^-lambda)`.
    pub fn truncation_radius(&self, level: f64, dt: f64, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda <= 0.5) {
            return Err(Error::config(format!("lambda must lie in (0, 1/2], got {lambda}")));
        }
        if !(dt > 0.0 && dt <= 1.0) {
            return Err(Error::config(format!("step size must lie in (0, 1], got {dt}")));
        }
        if !(level >= self.gamma(0.0)) {
            return Err(Error::config(format!(
                "L = {level} is below Gamma(0) = {}",
                self.gamma(0.0)
            )));
        }
        self.inverse(level * dt.powf(-lambda))
    }
}

/// Hypothesis parameters of the stability theorems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub rho1: FadingMeasure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<FadingMeasure>,
    /// Override for the multiplier `rho1^{(-hat alpha)}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_coeff: Option<f64>,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCoefficients {
    pub gamma: Vec<f64>,
    pub gamma_prime: Vec<f64>,
    pub a: Vec<f64>,
    pub epsilon: f64,
    pub hat_alpha: f64,
    pub hat_a: f64,
    /// Multiplier used in `gamma` (override or computed).
    pub rho_alpha_multiplier: f64,
    /// `rho1^{(-hat alpha)}` computed from the measure; may be infinite.
    pub rho_alpha_moment: f64,
    /// `rho1^{(-hat a)}`; may be infinite.
    pub rho_a_moment: f64,
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.beta.len() || self.alpha.is_empty() {
            return Err(Error::config("alpha and beta must be non-empty with equal length"));
        }
        if self.beta.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::config("beta entries must be >= 0"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::config("kappa must be positive"));
        }
        Ok(())
    }

    pub fn stability_coefficients(&self) -> StabilityCoefficients {
        let hat_alpha = self.alpha.iter().copied().fold(f64::INFINITY, f64::min);
        let a: Vec<f64> = self.alpha.iter().zip(&self.beta).map(|(x, y)| x + y).collect();
        let hat_a = a.iter().copied().fold(f64::INFINITY, f64::min);
        let max_beta = self.beta.iter().copied().fold(0.0, f64::max);
        let min_beta = self.beta.iter().copied().fold(f64::INFINITY, f64::min);
        let epsilon = if max_beta > 0.0 { min_beta / max_beta } else { 0.0 };

        let rho_alpha_moment = moment_any_sign(&self.rho1, -hat_alpha);
        let rho_a_moment = moment_any_sign(&self.rho1, -hat_a);
        let rho_alpha_multiplier = self.rho_coeff.unwrap_or(rho_alpha_moment);

        let gamma = self
            .alpha
            .iter()
            .zip(&self.beta)
            .map(|(al, be)| combine(*al, rho_alpha_multiplier, *be))
            .collect();
        let gamma_prime = self
            .alpha
            .iter()
            .zip(&self.beta)
            .map(|(al, be)| combine(*al, 1.0 - epsilon.min(1.0) + rho_a_moment, *be))
            .collect();
        StabilityCoefficients {
            gamma,
            gamma_prime,
            a,
            epsilon,
            hat_alpha,
            hat_a,
            rho_alpha_multiplier,
            rho_alpha_moment,
            rho_a_moment,
        }
    }
}

/// `alpha + m beta` with `inf * 0 = 0`.
fn combine(alpha: f64, m: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        alpha
    } else {
        alpha + m * beta
    }
}

/// `int e^{-a u} mu(du)` for any real `a`; finite whenever `a` is below
/// every rate.
fn moment_any_sign(m: &FadingMeasure, a: f64) -> f64 {
    if a >= 0.0 {
        return m.exp_moment(a).unwrap_or(f64::INFINITY);
    }
    let exp: f64 = m.exp_terms().iter().map(|t| t.weight * t.rate / (t.rate - a)).sum();
    let point: f64 = m.point_terms().iter().map(|t| t.weight * (-a * t.location).exp()).sum();
    exp + point
}
