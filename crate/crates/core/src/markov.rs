//! Finite-state continuous-time Markov chains.
//!
//! States are 0-based internally; configuration files and CSV output use
//! 1-based labels.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::scheme::RngStream;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    generator: DMatrix<f64>,
    irreducible: bool,
}

impl MarkovChain {
    pub fn new(generator: DMatrix<f64>) -> Result<Self> {
        let n = generator.nrows();
        if n == 0 || generator.ncols() != n {
            return Err(Error::input(format!(
                "generator must be square and non-empty, got {}x{}",
                generator.nrows(),
                generator.ncols()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let q = generator[(i, j)];
                if !q.is_finite() {
                    return Err(Error::input(format!("non-finite rate at ({}, {})", i + 1, j + 1)));
                }
                if i != j && q < 0.0 {
                    return Err(Error::input(format!("negative off-diagonal rate at ({}, {})", i + 1, j + 1)));
                }
                sum += q;
            }
            if sum.abs() > ROW_SUM_TOL {
                return Err(Error::input(format!("row {} sums to {sum}, expected 0", i + 1)));
            }
        }
        let irreducible = strongly_connected(&generator);
        Ok(MarkovChain { generator, irreducible })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("generator rows must all have length N"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n_states(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// `exp(dt Q)` by scaling and squaring a truncated Taylor series.
    ///
    /// Round-off negatives are clamped to zero and rows renormalised so every
    /// row is a valid probability vector.
    pub fn transition_matrix(&self, dt: f64) -> Result<DMatrix<f64>> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("time step must be finite and >= 0, got {dt}")));
        }
        let n = self.n_states();
        let a = &self.generator * dt;
        let norm = inf_norm(&a);
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = a / 2f64.powi(squarings as i32);

        let mut sum = DMatrix::<f64>::identity(n, n);
        let mut term = DMatrix::<f64>::identity(n, n);
        for k in 1..64 {
            term = &term * &scaled / k as f64;
            sum += &term;
            if inf_norm(&term) < 1e-18 {
                break;
            }
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }

        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let p = &mut sum[(i, j)];
                if *p < 0.0 {
                    debug_assert!(*p >= -1e-12, "negative transition probability {p}");
                    *p = 0.0;
                }
                row_sum += *p;
            }
            for j in 0..n {
                sum[(i, j)] /= row_sum;
            }
        }
        Ok(sum)
    }

    /// Solves `pi Q = 0`, `sum(pi) = 1`.
    pub fn stationary_distribution(&self) -> Result<DVector<f64>> {
        if !self.irreducible {
            return Err(Error::input("stationary distribution requires an irreducible chain"));
        }
        let n = self.n_states();
        let mut a = self.generator.transpose();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("stationary system is singular"))?;
        Ok(pi)
    }

    /// `eta_{q,y} = -max Re spec(Q + q diag(y))`.
    pub fn eta_spectral(&self, q: f64, y: &[f64]) -> Result<f64> {
        let n = self.n_states();
        if y.len() != n {
            return Err(Error::input(format!("y has length {}, chain has {n} states", y.len())));
        }
        let mut m = self.generator.clone();
        for (i, yi) in y.iter().enumerate() {
            m[(i, i)] += q * yi;
        }
        let eigs = eigenvalues(m)?;
        let max_re = eigs.iter().map(|z| z.0).fold(f64::NEG_INFINITY, f64::max);
        Ok(-max_re)
    }

    /// Discrete skeleton `theta_0 = start`, `theta_{j+1} ~ row theta_j of
    /// exp(dt Q)`, one uniform per step from `stream` counter `j`.
    pub fn sample_discrete_chain(
        &self,
        dt: f64,
        steps: usize,
        start: usize,
        stream: &RngStream,
    ) -> Result<Vec<usize>> {
        let n = self.n_states();
        if start >= n {
            return Err(Error::input(format!("start state {} outside 1..={n}", start + 1)));
        }
        let p = self.transition_matrix(dt)?;
        let cdf: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                (0..n)
                    .map(|j| {
                        acc += p[(i, j)];
                        acc
                    })
                    .collect()
            })
            .collect();
        let mut reader = stream.reader();
        let mut path = Vec::with_capacity(steps + 1);
        let mut state = start;
        path.push(state);
        for _ in 0..steps {
            let u = reader.next_uniform();
            state = inverse_cdf(&cdf[state], &p, state, u);
            path.push(state);
        }
        Ok(path)
    }
}

fn inverse_cdf(cdf: &[f64], p: &DMatrix<f64>, from: usize, u: f64) -> usize {
    match cdf.iter().position(|&c| u < c) {
        Some(j) => j,
        // u beyond the rounded total: last state with positive probability
        None => (0..cdf.len()).rev().find(|&j| p[(from, j)] > 0.0).unwrap_or(from),
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn strongly_connected(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if forward { q[(i, j)] } else { q[(j, i)] };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// All eigenvalues `(re, im)` of a small dense real matrix via the real Schur
/// form (Hessenberg reduction plus shifted QR).
pub fn eigenvalues(m: DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let n = m.nrows();
    let schur = Schur::try_new(m, f64::EPSILON, 1000 * n.max(1)).ok_or_else(|| {
        Error::numerical(format!("Schur iteration did not converge for a {n}x{n} matrix"))
    })?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::StreamPurpose;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn two_regime() -> MarkovChain {
        MarkovChain::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(MarkovChain::from_rows(&[vec![-1.0, 1.0], vec![2.0, -1.0]]).is_err());
        assert!(MarkovChain::from_rows(&[vec![1.0, -1.0], vec![2.0, -2.0]]).is_err());
        assert!(MarkovChain::from_rows(&[vec![-1.0, 1.0]]).is_err());
    }

    #[test]
    fn irreducibility_flag() {
        assert!(two_regime().is_irreducible());
        let absorbing = MarkovChain::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        assert!(!absorbing.is_irreducible());
        assert!(absorbing.stationary_distribution().is_err());
        assert!(MarkovChain::from_rows(&[vec![0.0]]).unwrap().is_irreducible());
    }

    #[test]
    fn transition_matrix_examples() {
        let c = two_regime();
        let id = c.transition_matrix(0.0).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));
        let p = c.transition_matrix(0.1).unwrap();
        assert_relative_eq!(p[(0, 0)], 2.0 / 3.0 + (-0.3f64).exp() / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 0)], 0.9136061, epsilon = 1e-6);
        let half = c.transition_matrix(0.5).unwrap();
        let quarter = c.transition_matrix(0.25).unwrap();
        assert!((half - &quarter * &quarter).abs().max() < 1e-10);
        assert!(c.transition_matrix(-1.0).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = two_regime().stationary_distribution().unwrap();
        assert_relative_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);
        let one = MarkovChain::from_rows(&[vec![0.0]]).unwrap().stationary_distribution().unwrap();
        assert_eq!(one[0], 1.0);
        let sym = MarkovChain::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let pi = sym.stationary_distribution().unwrap();
        assert_relative_eq!(pi[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn eta_examples() {
        let c = two_regime();
        let eta = c.eta_spectral(1.0, &[-19.0 / 5.0, 31.0 / 20.0]).unwrap();
        // closed form of the 2x2 spectrum: trace -5.25, det 0.16
        let closed = -(-5.25 + (5.25f64 * 5.25 - 4.0 * 0.16).sqrt()) / 2.0;
        assert_relative_eq!(eta, closed, epsilon = 1e-12);
        assert!((eta - 0.0308).abs() < 5e-4);
        assert!(c.eta_spectral(0.0, &[3.0, -7.0]).unwrap().abs() < 1e-12);
        assert_relative_eq!(c.eta_spectral(1.0, &[-1.0, -1.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert!(c.eta_spectral(1.0, &[1.0]).is_err());
    }

    #[test]
    fn eta_shift_property() {
        let c = MarkovChain::from_rows(&[
            vec![-3.0, 1.0, 2.0],
            vec![0.5, -1.0, 0.5],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        let y = [0.3, -1.2, 2.0];
        for &(q, s) in &[(1.0, 0.7), (2.5, -1.3), (0.5, 4.0)] {
            let shifted: Vec<f64> = y.iter().map(|v| v + s).collect();
            let lhs = c.eta_spectral(q, &shifted).unwrap();
            let rhs = c.eta_spectral(q, &y).unwrap() - q * s;
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn sampling_edge_cases() {
        let c = two_regime();
        let s = RngStream::new(3, 0, StreamPurpose::Chain);
        assert_eq!(c.sample_discrete_chain(0.1, 0, 1, &s).unwrap(), vec![1]);
        let frozen = MarkovChain::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let path = frozen.sample_discrete_chain(0.5, 100, 1, &s).unwrap();
        assert!(path.iter().all(|&x| x == 1));
        assert!(c.sample_discrete_chain(0.1, 5, 2, &s).is_err());
    }

    #[test]
    fn occupation_frequency_is_ergodic() {
        let c = two_regime();
        let s = RngStream::new(11, 0, StreamPurpose::Chain);
        let steps = 1 << 20;
        let path = c.sample_discrete_chain(1.0 / 64.0, steps, 0, &s).unwrap();
        let freq = path.iter().filter(|&&x| x == 0).count() as f64 / path.len() as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.01, "occupation {freq}");
    }

    #[test]
    fn subsampled_chain_matches_double_step() {
        // sampling at dt and keeping every second state must follow exp(2 dt Q)
        let c = MarkovChain::from_rows(&[
            vec![-2.0, 1.5, 0.5],
            vec![1.0, -1.0, 0.0],
            vec![0.5, 2.5, -3.0],
        ])
        .unwrap();
        let dt = 0.2;
        let s = RngStream::new(5, 0, StreamPurpose::Chain);
        let path = c.sample_discrete_chain(dt, 200_000, 0, &s).unwrap();
        let mut counts = [[0.0f64; 3]; 3];
        for w in path.iter().step_by(2).collect::<Vec<_>>().windows(2) {
            counts[*w[0]][*w[1]] += 1.0;
        }
        let p2 = c.transition_matrix(2.0 * dt).unwrap();
        let mut chi2 = 0.0;
        let mut dof = 0.0;
        for i in 0..3 {
            let total: f64 = counts[i].iter().sum();
            for j in 0..3 {
                let expected = total * p2[(i, j)];
                chi2 += (counts[i][j] - expected).powi(2) / expected;
            }
            dof += 2.0;
        }
        let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
        assert!(p_value > 0.001, "chi2 {chi2}, p {p_value}");
    }
}
