//! Coupled strong-convergence study.
//!
//! Each Monte Carlo path draws one chain skeleton and one Brownian path on
//! the reference grid. Coarse runs reuse them: increments are summed over
//! blocks of fine steps and the skeleton is subsampled, which is exact in
//! law because `exp(dt_ref Q)^r = exp(r dt_ref Q)`.

use serde::Serialize;

use super::fit::fit_slope;
use super::parallel::{pairwise_mean, run_paths};
use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::model::ModelSpec;
use crate::phase::{norm, InitialData};
use crate::scheme::{select_k, PathEngine, RngStream, SchemeConfig, SchemeVariant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum DepthPolicy {
    Fixed { k: u32 },
    Rule { k_cal: f64, alpha_decay: f64 },
}

impl DepthPolicy {
    pub fn depth_for(&self, dt: f64) -> Result<u32> {
        match *self {
            DepthPolicy::Fixed { k } if k >= 1 => Ok(k),
            DepthPolicy::Fixed { .. } => Err(Error::config("fixed depth must be >= 1")),
            DepthPolicy::Rule { k_cal, alpha_decay } => select_k(dt, k_cal, alpha_decay),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub dt_list: Vec<f64>,
    pub dt_ref: f64,
    pub depth: DepthPolicy,
    pub paths: usize,
    pub t_final: f64,
    pub lambda: f64,
    pub start_regime: usize,
    pub seed: u64,
    pub kernel_recursion: bool,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub dt_list: Vec<f64>,
    pub k_list: Vec<u32>,
    pub rms_errors: Vec<f64>,
    /// `None` when the errors are all zero or otherwise unfit for a log fit.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub n_paths: usize,
    pub t_final: f64,
    pub dt_ref: f64,
    pub k_ref: u32,
    pub truncation_events: u64,
    /// Paths on which some computed state left the truncation ball.
    pub truncation_violations: u64,
    pub max_norm_over_radius: f64,
}

impl ConvergenceResult {
    pub fn is_degenerate(&self) -> bool {
        self.slope.is_none()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dt,log2_dt,k,rms_error\n");
        for ((dt, k), e) in self.dt_list.iter().zip(&self.k_list).zip(&self.rms_errors) {
            s.push_str(&format!("{dt:e},{},{k},{e:e}\n", dt.log2()));
        }
        s
    }

    pub fn summary_line(&self) -> String {
        match self.slope {
            Some(slope) => format!(
                "slope={slope:.4} r2={:.4} paths={} T={} dt_ref={:e} k_ref={}",
                self.r_squared.unwrap_or(f64::NAN),
                self.n_paths,
                self.t_final,
                self.dt_ref,
                self.k_ref
            ),
            None => format!("slope=degenerate paths={} T={}", self.n_paths, self.t_final),
        }
    }
}

/// Steps per unit time for `dt = 1/l`, rejecting non-reciprocal values.
pub(crate) fn steps_per_unit(dt: f64) -> Result<u32> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::config(format!("step size must lie in (0, 1], got {dt}")));
    }
    let l = (1.0 / dt).round();
    if ((1.0 / l) - dt).abs() > 1e-12 * dt {
        return Err(Error::config(format!("step size {dt} is not of the form 1/l")));
    }
    Ok(l as u32)
}

pub fn convergence_experiment(
    model: &ModelSpec,
    xi: &InitialData,
    chain: &MarkovChain,
    setup: &ConvergenceSetup,
) -> Result<ConvergenceResult> {
    if setup.dt_list.is_empty() || setup.paths == 0 {
        return Err(Error::config("convergence study needs a non-empty dt list and at least one path"));
    }
    if chain.n_states() != model.n_regimes() {
        return Err(Error::config("chain and model disagree on the number of regimes"));
    }
    let l_ref = steps_per_unit(setup.dt_ref)?;
    let fine_steps = setup.t_final * l_ref as f64;
    if (fine_steps - fine_steps.round()).abs() > 1e-9 {
        return Err(Error::config("horizon must be a multiple of the reference step"));
    }
    let mut ratios = Vec::with_capacity(setup.dt_list.len());
    for &dt in &setup.dt_list {
        let l = steps_per_unit(dt)?;
        if l > l_ref || l_ref % l != 0 {
            return Err(Error::config(format!(
                "step size {dt} is not an integer multiple of the reference step {}",
                setup.dt_ref
            )));
        }
        let coarse_steps = setup.t_final * l as f64;
        if (coarse_steps - coarse_steps.round()).abs() > 1e-9 {
            return Err(Error::config(format!("horizon is not a multiple of step size {dt}")));
        }
        ratios.push((l, (l_ref / l) as usize));
    }

    let config = |l: u32, k: u32| {
        let mut c = SchemeConfig::new(l, k, setup.lambda, SchemeVariant::Convergence, setup.t_final);
        c.kernel_recursion = setup.kernel_recursion;
        c
    };
    let k_ref = setup.depth.depth_for(setup.dt_ref)?;
    let ref_cfg = config(l_ref, k_ref);
    let ref_engine = PathEngine::new(&ref_cfg, model, xi)?;
    let mut k_list = Vec::with_capacity(ratios.len());
    let mut cfgs = Vec::with_capacity(ratios.len());
    for &(l, _) in &ratios {
        let k = setup.depth.depth_for(1.0 / l as f64)?;
        k_list.push(k);
        cfgs.push(config(l, k));
    }
    let engines = cfgs.iter().map(|c| PathEngine::new(c, model, xi)).collect::<Result<Vec<_>>>()?;

    let n_fine = ref_engine.steps();
    let noise_dim = model.noise_dim();
    let dt_ref = ref_engine.dt();

    struct PathOutcome {
        sq_errors: Vec<f64>,
        truncations: u64,
        violated: bool,
        worst_ratio: f64,
    }

    let outcomes = run_paths(setup.paths, setup.threads, |path| {
        let (bm, ch) = RngStream::pair(setup.seed, path);
        let skeleton = chain.sample_discrete_chain(dt_ref, n_fine, setup.start_regime, &ch)?;
        let mut fine = vec![0.0; n_fine * noise_dim];
        let mut reader = bm.reader();
        for (j, chunk) in fine.chunks_mut(noise_dim).enumerate() {
            reader.fill_increments(j as u64, dt_ref, chunk);
        }
        let reference = ref_engine.run(
            &skeleton,
            |j, out| {
                let s = j as usize * noise_dim;
                out.copy_from_slice(&fine[s..s + noise_dim]);
            },
            usize::MAX,
        )?;
        let mut truncations = reference.truncation_events;
        let mut violated = reference.max_state_norm > reference.radius;
        let mut worst_ratio = reference.max_state_norm / reference.radius;
        let mut sq_errors = Vec::with_capacity(engines.len());
        for (engine, &(_, ratio)) in engines.iter().zip(&ratios) {
            let coarse_skeleton: Vec<usize> = skeleton.iter().step_by(ratio).copied().collect();
            let traj = engine.run(
                &coarse_skeleton,
                |j, out| {
                    out.fill(0.0);
                    let base = j as usize * ratio;
                    for i in base..base + ratio {
                        for (o, v) in out.iter_mut().zip(&fine[i * noise_dim..(i + 1) * noise_dim]) {
                            *o += v;
                        }
                    }
                },
                usize::MAX,
            )?;
            truncations += traj.truncation_events;
            violated |= traj.max_state_norm > traj.radius;
            worst_ratio = worst_ratio.max(traj.max_state_norm / traj.radius);
            let diff: Vec<f64> = reference.terminal.iter().zip(&traj.terminal).map(|(a, b)| a - b).collect();
            sq_errors.push(norm(&diff).powi(2));
        }
        Ok(PathOutcome { sq_errors, truncations, violated, worst_ratio })
    })?;

    let rms_errors: Vec<f64> = (0..engines.len())
        .map(|i| {
            let col: Vec<f64> = outcomes.iter().map(|o| o.sq_errors[i]).collect();
            pairwise_mean(&col).sqrt()
        })
        .collect();

    let fit = if rms_errors.len() >= 2 && rms_errors.iter().all(|e| *e > 0.0 && e.is_finite()) {
        let xs: Vec<f64> = setup.dt_list.iter().map(|d| d.log2()).collect();
        let ys: Vec<f64> = rms_errors.iter().map(|e| e.log2()).collect();
        fit_slope(&xs, &ys).ok()
    } else {
        None
    };

    Ok(ConvergenceResult {
        dt_list: setup.dt_list.clone(),
        k_list,
        rms_errors,
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
        r_squared: fit.map(|f| f.r_squared),
        n_paths: setup.paths,
        t_final: setup.t_final,
        dt_ref: setup.dt_ref,
        k_ref,
        truncation_events: outcomes.iter().map(|o| o.truncations).sum(),
        truncation_violations: outcomes.iter().filter(|o| o.violated).count() as u64,
        max_norm_over_radius: outcomes.iter().map(|o| o.worst_ratio).fold(0.0, f64::max),
    })
}
