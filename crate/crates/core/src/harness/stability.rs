//! Mean-square stability study of the stability-variant scheme.

use serde::Serialize;

use super::fit::fit_slope;
use super::parallel::{pairwise_mean, run_paths};
use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::model::ModelSpec;
use crate::phase::{norm, InitialData};
use crate::scheme::{PathEngine, RngStream, SchemeConfig, SchemeVariant};

#[derive(Debug, Clone)]
pub struct StabilitySetup {
    pub l: u32,
    pub k: u32,
    pub lambda: f64,
    pub t_final: f64,
    pub paths: usize,
    pub start_regime: usize,
    pub seed: u64,
    /// Fit window `[lo, hi]` in time units; defaults to `[T/4, T]`.
    pub fit_window: Option<(f64, f64)>,
    /// Recording stride in steps; defaults to `l / 16` (16 samples per unit time).
    pub record_every: Option<usize>,
    pub kernel_recursion: bool,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityResult {
    pub times: Vec<f64>,
    pub mean_square: Vec<f64>,
    /// Slope of `ln(mean_square)` against `t` on the fit window; `None`
    /// when the sample mean square vanishes there.
    pub decay_rate: Option<f64>,
    pub fit_window: (f64, f64),
    /// `ln |V(T)| / T` per path, ordered by path id.
    pub per_path_exponents: Vec<f64>,
    pub eta_reference: Option<f64>,
    pub truncation_events: u64,
    pub truncation_violations: u64,
    pub n_paths: usize,
}

impl StabilityResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mean_square\n");
        for (t, m) in self.times.iter().zip(&self.mean_square) {
            s.push_str(&format!("{t},{m:e}\n"));
        }
        s
    }

    pub fn exponents_csv(&self) -> String {
        let mut s = String::from("path,exponent\n");
        for (p, e) in self.per_path_exponents.iter().enumerate() {
            s.push_str(&format!("{p},{e:e}\n"));
        }
        s
    }

    /// Sample mean square at the recorded time closest to `t`.
    pub fn mean_square_at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.mean_square)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, m)| *m)
    }
}

pub fn stability_experiment(
    model: &ModelSpec,
    xi: &InitialData,
    chain: &MarkovChain,
    setup: &StabilitySetup,
) -> Result<StabilityResult> {
    if !model.check_zero_fixed_point() {
        return Err(Error::config("stability study requires f(0, i) = g(0, i) = 0"));
    }
    if setup.paths == 0 {
        return Err(Error::config("stability study needs at least one path"));
    }
    let mut cfg = SchemeConfig::new(setup.l, setup.k, setup.lambda, SchemeVariant::Stability, setup.t_final);
    cfg.kernel_recursion = setup.kernel_recursion;
    let record_every = setup.record_every.unwrap_or((setup.l as usize / 16).max(1));
    cfg.record_every = Some(record_every);
    let engine = PathEngine::new(&cfg, model, xi)?;
    let dt = engine.dt();

    let trajectories = run_paths(setup.paths, setup.threads, |path| {
        let (bm, ch) = RngStream::pair(setup.seed, path);
        let skeleton = chain.sample_discrete_chain(dt, engine.steps(), setup.start_regime, &ch)?;
        let mut reader = bm.reader();
        let traj = engine.run(&skeleton, |j, out| reader.fill_increments(j, dt, out), record_every)?;
        let squares: Vec<f64> = traj.states.iter().map(|x| norm(x).powi(2)).collect();
        let exponent = if engine.steps() == 0 {
            f64::NAN
        } else {
            norm(&traj.terminal).ln() / (engine.steps() as f64 * dt)
        };
        Ok((traj.times, squares, exponent, traj.truncation_events, traj.max_state_norm > traj.radius))
    })?;

    let times = trajectories[0].0.clone();
    let mean_square: Vec<f64> = (0..times.len())
        .map(|i| {
            let col: Vec<f64> = trajectories.iter().map(|t| t.1[i]).collect();
            pairwise_mean(&col)
        })
        .collect();

    let window = setup.fit_window.unwrap_or((setup.t_final / 4.0, setup.t_final));
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&mean_square)
        .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
        .map(|(t, m)| (*t, m.ln()))
        .unzip();
    let decay_rate = fit_slope(&xs, &ys).ok().map(|f| f.slope);

    let eta_reference = match &model.stability {
        Some(s) => super::spectral::spectral_report(chain, s, xi.r).ok().and_then(|r| r.eta_gamma),
        None => None,
    };

    Ok(StabilityResult {
        times,
        mean_square,
        decay_rate,
        fit_window: window,
        per_path_exponents: trajectories.iter().map(|t| t.2).collect(),
        eta_reference,
        truncation_events: trajectories.iter().map(|t| t.3).sum(),
        truncation_violations: trajectories.iter().filter(|t| t.4).count() as u64,
        n_paths: setup.paths,
    })
}
