//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the weight, recursion or stepping code under test.

#![allow(dead_code)]

use std::path::PathBuf;

use infdelay_core::ExperimentConfig;

pub fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).expect("bundled config")
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 48)
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Eight-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Piecewise-linear path through `nodes` (oldest first, spacing `dt`,
/// newest at `u = 0`), held constant before the oldest node.
pub struct Interpolant<'a> {
    pub nodes: &'a [f64],
    pub dt: f64,
}

impl Interpolant<'_> {
    pub fn at(&self, u: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let s = -u / self.dt;
        if s >= n as f64 {
            return self.nodes[0];
        }
        let lag = s.floor();
        let frac = s - lag;
        let i = n - lag as usize;
        if frac == 0.0 || i == 0 {
            return self.nodes[i];
        }
        (1.0 - frac) * self.nodes[i] + frac * self.nodes[i - 1]
    }
}

/// Mixture `sum w_i c_i e^{c_i u} du + sum p_j delta_{s_j}` as plain tuples.
#[derive(Debug, Clone)]
pub struct MeasureSpec {
    pub exp: Vec<(f64, f64)>,
    pub point: Vec<(f64, f64)>,
}

impl MeasureSpec {
    pub fn build(&self) -> infdelay_core::FadingMeasure {
        use infdelay_core::measures::{ExpTerm, PointTerm};
        infdelay_core::FadingMeasure::new(
            self.exp.iter().map(|&(weight, rate)| ExpTerm { weight, rate }).collect(),
            self.point.iter().map(|&(weight, location)| PointTerm { weight, location }).collect(),
        )
        .expect("valid measure")
    }
}

/// `int pi_k(interp)(u) m(du)` by adaptive Simpson on every cell and on the
/// truncated tail `[-depth dt - 40 / c, -depth dt]`.
pub fn integral_by_simpson(m: &MeasureSpec, path: &Interpolant, tol: f64) -> f64 {
    let depth = path.nodes.len() - 1;
    let edge = -(depth as f64) * path.dt;
    let mut total = 0.0;
    for &(w, c) in &m.exp {
        let density = |u: f64| w * c * (c * u).exp();
        for cell in 0..depth {
            let (a, b) = (-((cell + 1) as f64) * path.dt, -(cell as f64) * path.dt);
            total += simpson(&|u| path.at(u) * density(u), a, b, tol);
        }
        total += path.nodes[0] * simpson(&density, edge - 40.0 / c, edge, tol);
    }
    for &(w, s) in &m.point {
        total += w * path.at(s);
    }
    total
}

/// Same integral by Gauss-Legendre on every cell and the closed-form tail mass.
pub fn integral_by_gauss(m: &MeasureSpec, path: &Interpolant) -> f64 {
    let depth = path.nodes.len() - 1;
    let edge = -(depth as f64) * path.dt;
    let mut total = 0.0;
    for &(w, c) in &m.exp {
        for cell in 0..depth {
            let (a, b) = (-((cell + 1) as f64) * path.dt, -(cell as f64) * path.dt);
            total += gauss_legendre(|u| path.at(u) * w * c * (c * u).exp(), a, b);
        }
        total += path.nodes[0] * w * (c * edge).exp();
    }
    for &(w, s) in &m.point {
        total += w * path.at(s);
    }
    total
}

/// Scalar linear regime-switching model
/// `dx = (a_i x(t) + b_i int x dmu_i) dt + (c_i x(t) + e_i int x dnu_i) dB`.
#[derive(Debug, Clone)]
pub struct LinearRegime {
    pub a: f64,
    pub b: f64,
    pub mu: MeasureSpec,
    pub c: f64,
    pub e: f64,
    pub nu: MeasureSpec,
}

/// Plain Euler-Maruyama on the full stored history with initial segment
/// `xi(u) = exp(u)` sampled at the grid, truncated at `depth` cells.
pub fn plain_em(
    regimes: &[LinearRegime],
    dt: f64,
    depth: usize,
    skeleton: &[usize],
    increments: &[f64],
) -> Vec<f64> {
    let mut history: Vec<f64> = (0..=depth).rev().map(|m| (-(m as f64) * dt).exp()).collect();
    for (j, db) in increments.iter().enumerate() {
        let window = &history[history.len() - depth - 1..];
        let path = Interpolant { nodes: window, dt };
        let x = *window.last().unwrap();
        let r = &regimes[skeleton[j]];
        let drift = r.a * x + r.b * integral_by_gauss(&r.mu, &path);
        let diffusion = r.c * x + r.e * integral_by_gauss(&r.nu, &path);
        history.push(x + drift * dt + diffusion * db);
    }
    history.split_off(depth)
}
