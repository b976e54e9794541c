//! Special functions, stable reductions and closed-form KL divergences.
//!
//! Gamma distributions are parameterized by **shape and rate** throughout
//! this crate: `Gamma(x | a, b) = b^a x^(a-1) e^(-b x) / Γ(a)`, with mean
//! `a / b`. Never pass a scale where a rate is expected.

use crate::error::{Error, Result};

/// Below this argument both digamma and log-gamma recurse upward before
/// switching to their asymptotic series.
const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Digamma function Ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

/// Digamma without the domain check. Callers guarantee `x > 0`.
pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number series in 1/x^2, Horner form.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    x.ln() - 0.5 * inv - series - shift
}

/// Natural log of the gamma function for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(mut x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let mut product = 1.0;
    while x < ASYMPTOTIC_THRESHOLD {
        product *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2
                        * (1.0 / 1260.0
                            - inv2
                                * (1.0 / 1680.0
                                    - inv2
                                        * (1.0 / 1188.0
                                            - inv2 * (691.0 / 360_360.0 - inv2 / 156.0))))));
    let stirling = (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + series;
    if product == 1.0 {
        stirling
    } else {
        stirling - product.ln()
    }
}

/// ln Σ exp(vᵢ), shifted by the maximum so it never overflows.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::domain("log_sum_exp of an empty sequence"));
    }
    Ok(log_sum_exp_unchecked(v))
}

pub(crate) fn log_sum_exp_unchecked(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    if v.len() == 1 {
        return v[0];
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// KL(Dirichlet(q) ‖ Dirichlet(p)).
pub fn kl_dirichlet(q_params: &[f64], p_params: &[f64]) -> Result<f64> {
    if q_params.len() != p_params.len() {
        return Err(Error::domain(format!(
            "kl_dirichlet length mismatch: {} vs {}",
            q_params.len(),
            p_params.len()
        )));
    }
    if q_params.len() < 2 {
        return Err(Error::domain("kl_dirichlet needs at least two components"));
    }
    if q_params
        .iter()
        .chain(p_params)
        .any(|&a| !(a > 0.0) || !a.is_finite())
    {
        return Err(Error::domain("kl_dirichlet parameters must be positive"));
    }
    Ok(kl_dirichlet_unchecked(q_params, p_params))
}

pub(crate) fn kl_dirichlet_unchecked(q: &[f64], p: &[f64]) -> f64 {
    let q0: f64 = q.iter().sum();
    let p0: f64 = p.iter().sum();
    let psi_q0 = digamma_unchecked(q0);
    let mut kl = log_gamma_unchecked(q0) - log_gamma_unchecked(p0);
    for (&qi, &pi) in q.iter().zip(p) {
        if qi == pi {
            continue;
        }
        kl += log_gamma_unchecked(pi) - log_gamma_unchecked(qi)
            + (qi - pi) * (digamma_unchecked(qi) - psi_q0);
    }
    kl.max(0.0)
}

/// KL(Gamma(shape_q, rate_q) ‖ Gamma(shape_p, rate_p)), shape–rate convention.
pub fn kl_gamma(shape_q: f64, rate_q: f64, shape_p: f64, rate_p: f64) -> Result<f64> {
    if [shape_q, rate_q, shape_p, rate_p]
        .iter()
        .any(|&a| !(a > 0.0) || !a.is_finite())
    {
        return Err(Error::domain("kl_gamma parameters must be positive"));
    }
    Ok(kl_gamma_unchecked(shape_q, rate_q, shape_p, rate_p))
}

pub(crate) fn kl_gamma_unchecked(shape_q: f64, rate_q: f64, shape_p: f64, rate_p: f64) -> f64 {
    if shape_q == shape_p && rate_q == rate_p {
        return 0.0;
    }
    let kl = (shape_q - shape_p) * digamma_unchecked(shape_q) - log_gamma_unchecked(shape_q)
        + log_gamma_unchecked(shape_p)
        + shape_p * (rate_q.ln() - rate_p.ln())
        + shape_q * (rate_p - rate_q) / rate_q;
    kl.max(0.0)
}
