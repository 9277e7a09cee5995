use serde::Serialize;

use crate::error::Result;
use crate::markov::MarkovChain;
use crate::model::{StabilityCoefficients, StabilityParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionFlags {
    pub hat_alpha_negative: bool,
    pub hat_a_negative: bool,
    pub eta_positive: bool,
    pub eta_prime_positive: bool,
    /// `rho1` (and `rho2` when given) lie in `P_{(-hat alpha + kappa) v 2r}`.
    pub measures_admissible: bool,
    /// Same with `hat a` in place of `hat alpha`.
    pub measures_admissible_prime: bool,
    pub weighted_gamma_negative: bool,
}

/// Spectral certificate of the stability hypotheses for `q = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub q: f64,
    pub y: Vec<f64>,
    /// `eta_{1, gamma}`; `None` when `gamma` is not finite.
    pub eta_gamma: Option<f64>,
    pub eta_gamma_prime: Option<f64>,
    pub stationary: Vec<f64>,
    /// `sum_i pi_i gamma_i`.
    pub weighted_gamma: f64,
    pub coefficients: StabilityCoefficients,
    /// `rho1^{((-hat alpha + kappa) v 2r)}`; infinite when divergent.
    pub admissibility_moment: f64,
    pub admissibility_moment_prime: f64,
    pub condition_flags: ConditionFlags,
}

fn eta_if_finite(chain: &MarkovChain, y: &[f64]) -> Result<Option<f64>> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(Some(chain.eta_spectral(1.0, y)?))
    } else {
        Ok(None)
    }
}

pub fn spectral_report(chain: &MarkovChain, params: &StabilityParams, r: f64) -> Result<SpectralReport> {
    params.validate()?;
    let c = params.stability_coefficients();
    let eta_gamma = eta_if_finite(chain, &c.gamma)?;
    let eta_gamma_prime = eta_if_finite(chain, &c.gamma_prime)?;
    let stationary: Vec<f64> = chain.stationary_distribution()?.iter().copied().collect();
    let weighted_gamma = stationary.iter().zip(&c.gamma).map(|(p, g)| p * g).sum();

    let moment = |exponent: f64| -> f64 {
        let mut worst = params.rho1.exp_moment(exponent).unwrap_or(f64::INFINITY);
        if let Some(rho2) = &params.rho2 {
            worst = worst.max(rho2.exp_moment(exponent).unwrap_or(f64::INFINITY));
        }
        worst
    };
    let admissibility_moment = moment((-c.hat_alpha + params.kappa).max(2.0 * r));
    let admissibility_moment_prime = moment((-c.hat_a + params.kappa).max(2.0 * r));

    let condition_flags = ConditionFlags {
        hat_alpha_negative: c.hat_alpha < 0.0,
        hat_a_negative: c.hat_a < 0.0,
        eta_positive: eta_gamma.is_some_and(|e| e > 0.0),
        eta_prime_positive: eta_gamma_prime.is_some_and(|e| e > 0.0),
        measures_admissible: admissibility_moment.is_finite(),
        measures_admissible_prime: admissibility_moment_prime.is_finite(),
        weighted_gamma_negative: weighted_gamma < 0.0,
    };
    Ok(SpectralReport {
        q: 1.0,
        y: c.gamma.clone(),
        eta_gamma,
        eta_gamma_prime,
        stationary,
        weighted_gamma,
        coefficients: c,
        admissibility_moment,
        admissibility_moment_prime,
        condition_flags,
    })
}
