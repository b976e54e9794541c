//! Scaled forward-backward recursions over the starred parameters.
//!
//! The starred transition values are sub-normalized, so the "likelihood"
//! produced here is ln q(y|Θ), the first term of the ELBO, rather than a
//! proper probability. Each emission row enters as
//! `exp(log_b_star[t, j] - max_j log_b_star[t, ·])`; the row maximum is
//! folded back into `log_c`, which keeps the recursion in range when the
//! per-row scores are sums over thousands of locations.
//!
//! The backward pass starts from `B̃_T = c_T`. Starting from 1 instead would
//! rescale every `B̃_t` by the same constant and leave all marginals unchanged.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::emissions::{log_emission_matrix_unchecked, validate_data, EmissionScores, Responsibilities};
use crate::error::{Error, Result};
use crate::model::ExpectedParams;

/// Output of the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// T×K scaled forward variables; every row sums to one.
    pub f_tilde: Array2<f64>,
    /// ln cₜ, including the per-row emission shift.
    pub log_c: Array1<f64>,
    /// −Σ ln cₜ.
    pub log_lik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FBResult {
    pub f_tilde: Array2<f64>,
    pub b_tilde: Array2<f64>,
    pub log_c: Array1<f64>,
    pub log_lik: f64,
}

/// Posterior state occupancies and transition counts for one or more chains.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMarginals {
    /// T×K state marginals q_tj.
    pub q_t: Array2<f64>,
    /// K×K expected transition counts summed over time (and chains).
    pub q_trans: Array2<f64>,
    /// Sum over chains of the first-day marginals q₁ⱼ.
    pub q_first: Array1<f64>,
    /// Parameters that produced these marginals; the mixture
    /// responsibilities are a function of these and the data.
    pub params: ExpectedParams,
}

impl LatentMarginals {
    /// Materializes the mixture responsibilities q_tjlm.
    pub fn responsibilities(&self, data: ArrayView2<f64>) -> Result<Responsibilities> {
        crate::emissions::responsibilities(data, &self.params)
    }
}

fn row_shift(scores: &EmissionScores, t: usize) -> f64 {
    scores
        .log_b_star
        .row(t)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn shifted_emissions(scores: &EmissionScores, t: usize, shift: f64) -> Array1<f64> {
    scores.log_b_star.row(t).mapv(|v| (v - shift).exp())
}

fn check_inputs(scores: &EmissionScores, params: &ExpectedParams) -> Result<()> {
    if scores.k() != params.k() {
        return Err(Error::shape(format!(
            "emission scores have {} states, parameters have {}",
            scores.k(),
            params.k()
        )));
    }
    if scores.t() == 0 {
        return Err(Error::domain("cannot run forward-backward on an empty sequence"));
    }
    Ok(())
}

pub fn forward(scores: &EmissionScores, params: &ExpectedParams) -> Result<Forward> {
    check_inputs(scores, params)?;
    let (t_len, k) = scores.log_b_star.dim();
    let a_star = params.log_a_star.mapv(f64::exp);
    let mut f_tilde = Array2::zeros((t_len, k));
    let mut log_c = Array1::zeros(t_len);
    let mut prev = params.log_a1_star.mapv(f64::exp);
    for t in 0..t_len {
        let shift = row_shift(scores, t);
        if !shift.is_finite() {
            return Err(Error::Degenerate {
                t,
                what: format!("emission scores are not finite (max = {shift})"),
            });
        }
        let e = shifted_emissions(scores, t, shift);
        let mut row = if t == 0 { prev.clone() } else { prev.dot(&a_star) };
        row *= &e;
        let total = row.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate {
                t,
                what: "forward variables vanished for every state".into(),
            });
        }
        row /= total;
        log_c[t] = -total.ln() - shift;
        f_tilde.row_mut(t).assign(&row);
        prev = row;
    }
    let log_lik = -log_c.sum();
    Ok(Forward {
        f_tilde,
        log_c,
        log_lik,
    })
}

pub fn backward(
    scores: &EmissionScores,
    params: &ExpectedParams,
    log_c: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    check_inputs(scores, params)?;
    let (t_len, k) = scores.log_b_star.dim();
    if log_c.len() != t_len {
        return Err(Error::shape("log_c length differs from the number of time steps"));
    }
    let a_star = params.log_a_star.mapv(f64::exp);
    let shifts: Vec<f64> = (0..t_len).map(|t| row_shift(scores, t)).collect();
    let scaled_c = |t: usize| (log_c[t] + shifts[t]).exp();
    let mut b_tilde = Array2::zeros((t_len, k));
    b_tilde.row_mut(t_len - 1).fill(scaled_c(t_len - 1));
    for t in (0..t_len - 1).rev() {
        let weighted = shifted_emissions(scores, t + 1, shifts[t + 1]) * b_tilde.row(t + 1);
        let row = a_star.dot(&weighted) * scaled_c(t);
        if !row.iter().all(|v| v.is_finite()) || row.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate {
                t,
                what: "backward variables vanished for every state".into(),
            });
        }
        b_tilde.row_mut(t).assign(&row);
    }
    Ok(b_tilde)
}

pub fn forward_backward(scores: &EmissionScores, params: &ExpectedParams) -> Result<FBResult> {
    let fwd = forward(scores, params)?;
    let b_tilde = backward(scores, params, fwd.log_c.view())?;
    Ok(FBResult {
        f_tilde: fwd.f_tilde,
        b_tilde,
        log_c: fwd.log_c,
        log_lik: fwd.log_lik,
    })
}

/// State and pairwise marginals from a completed forward-backward pass.
pub fn marginals(
    f_tilde: &Array2<f64>,
    b_tilde: &Array2<f64>,
    scores: &EmissionScores,
    params: &ExpectedParams,
) -> Result<LatentMarginals> {
    check_inputs(scores, params)?;
    let (t_len, k) = f_tilde.dim();
    if b_tilde.dim() != (t_len, k) || scores.t() != t_len {
        return Err(Error::shape("forward, backward and score arrays disagree in shape"));
    }
    let mut q_t = f_tilde * b_tilde;
    for (t, mut row) in q_t.rows_mut().into_iter().enumerate() {
        let total = row.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate {
                t,
                what: "state marginal normalizer is zero".into(),
            });
        }
        row /= total;
    }
    let a_star = params.log_a_star.mapv(f64::exp);
    let mut q_trans = Array2::zeros((k, k));
    let mut pair = Array2::zeros((k, k));
    for t in 0..t_len.saturating_sub(1) {
        let shift = row_shift(scores, t + 1);
        let next = shifted_emissions(scores, t + 1, shift) * b_tilde.row(t + 1);
        let mut total = 0.0;
        for j in 0..k {
            let fj = f_tilde[[t, j]];
            for kk in 0..k {
                let v = fj * a_star[[j, kk]] * next[kk];
                pair[[j, kk]] = v;
                total += v;
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate {
                t,
                what: "pairwise marginal normalizer is zero".into(),
            });
        }
        q_trans.scaled_add(1.0 / total, &pair);
    }
    let q_first = q_t.row(0).to_owned();
    Ok(LatentMarginals {
        q_t,
        q_trans,
        q_first,
        params: params.clone(),
    })
}

/// Splits `0..t` into consecutive chains of length `d`. `d == t` gives a
/// single chain.
pub fn block_chains(t: usize, d: usize) -> Result<Vec<Range<usize>>> {
    if d == 0 || t % d != 0 {
        return Err(Error::domain(format!(
            "cannot split {t} time steps into blocks of {d}"
        )));
    }
    Ok((0..t / d).map(|b| b * d..(b + 1) * d).collect())
}

/// Full E-step over `data` treated as independent chains. Returns the
/// stacked marginals (q_t in data order, transitions and first-day
/// marginals summed across chains) and ln q(y|Θ) summed over chains.
pub fn chain_marginals(
    data: ArrayView2<f64>,
    chains: &[Range<usize>],
    params: &ExpectedParams,
) -> Result<(LatentMarginals, f64)> {
    validate_data(data, params.l())?;
    check_chains(chains, data.nrows())?;
    let scores = log_emission_matrix_unchecked(data, params);
    let per_chain: Vec<Result<(LatentMarginals, f64)>> = chains
        .par_iter()
        .map(|range| {
            let sub = EmissionScores {
                log_b_star: scores.log_b_star.slice(s![range.clone(), ..]).to_owned(),
            };
            let fb = forward_backward(&sub, params).map_err(|e| offset_error(e, range.start))?;
            let m = marginals(&fb.f_tilde, &fb.b_tilde, &sub, params)
                .map_err(|e| offset_error(e, range.start))?;
            Ok((m, fb.log_lik))
        })
        .collect();
    let k = params.k();
    let mut q_t = Array2::zeros((data.nrows(), k));
    let mut q_trans = Array2::zeros((k, k));
    let mut q_first = Array1::zeros(k);
    let mut log_lik = 0.0;
    for (range, result) in chains.iter().zip(per_chain) {
        let (m, ll) = result?;
        q_t.slice_mut(s![range.clone(), ..]).assign(&m.q_t);
        q_trans += &m.q_trans;
        q_first += &m.q_first;
        log_lik += ll;
    }
    Ok((
        LatentMarginals {
            q_t,
            q_trans,
            q_first,
            params: params.clone(),
        },
        log_lik,
    ))
}

fn offset_error(e: Error, start: usize) -> Error {
    match e {
        Error::Degenerate { t, what } => Error::Degenerate {
            t: t + start,
            what,
        },
        other => other,
    }
}

pub(crate) fn check_chains(chains: &[Range<usize>], t: usize) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::domain("at least one chain is required"));
    }
    let mut expected_start = 0;
    for r in chains {
        if r.start != expected_start || r.end <= r.start {
            return Err(Error::domain(format!(
                "chains must tile 0..{t} in order without gaps, got {chains:?}"
            )));
        }
        expected_start = r.end;
    }
    if expected_start != t {
        return Err(Error::domain(format!(
            "chains cover 0..{expected_start} but the data has {t} time steps"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    fn params_2state() -> ExpectedParams {
        ExpectedParams {
            log_a1_star: array![0.3f64.ln(), 0.6f64.ln()],
            log_a_star: array![[0.7f64.ln(), 0.2f64.ln()], [0.25f64.ln(), 0.65f64.ln()]],
            log_c_star: Array3::zeros((2, 1, 2)),
            log_lambda_star: Array3::zeros((2, 1, 1)),
            lambda_hat: Array3::ones((2, 1, 1)),
        }
    }

    #[test]
    fn single_state_collapses_to_sum() {
        let p = ExpectedParams {
            log_a1_star: array![-0.4],
            log_a_star: array![[-0.2]],
            log_c_star: Array3::zeros((1, 1, 2)),
            log_lambda_star: Array3::zeros((1, 1, 1)),
            lambda_hat: Array3::ones((1, 1, 1)),
        };
        let scores = EmissionScores {
            log_b_star: array![[-1.0], [-2.5], [-0.3], [-4.0]],
        };
        let fb = forward_backward(&scores, &p).unwrap();
        assert!(fb.f_tilde.iter().all(|&v| v == 1.0));
        let expected = -0.4 + 3.0 * -0.2 + (-1.0 - 2.5 - 0.3 - 4.0);
        assert!((fb.log_lik - expected).abs() < 1e-12);
        assert!(fb.b_tilde.iter().all(|v| v.is_finite() && *v > 0.0));
        let m = marginals(&fb.f_tilde, &fb.b_tilde, &scores, &p).unwrap();
        assert!(m.q_t.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((m.q_trans[[0, 0]] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_case_is_uniform() {
        let p = ExpectedParams {
            log_a1_star: array![-1.0, -1.0, -1.0],
            log_a_star: Array2::from_elem((3, 3), -1.2),
            log_c_star: Array3::zeros((3, 1, 2)),
            log_lambda_star: Array3::zeros((3, 1, 1)),
            lambda_hat: Array3::ones((3, 1, 1)),
        };
        let scores = EmissionScores {
            log_b_star: array![[-1.0, -1.0, -1.0], [-5.0, -5.0, -5.0]],
        };
        let fb = forward_backward(&scores, &p).unwrap();
        for &v in fb.f_tilde.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        for row in fb.b_tilde.rows() {
            assert!(row.iter().all(|&v| (v - row[0]).abs() < 1e-15 * row[0].abs()));
        }
    }

    #[test]
    fn impossible_emissions_are_degenerate() {
        let p = params_2state();
        let scores = EmissionScores {
            log_b_star: array![[-1.0, -1.0], [f64::NEG_INFINITY, f64::NEG_INFINITY]],
        };
        match forward(&scores, &p) {
            Err(Error::Degenerate { t, .. }) => assert_eq!(t, 1),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn huge_negative_scores_do_not_underflow() {
        let p = params_2state();
        let scores = EmissionScores {
            log_b_star: array![[-20_000.0, -20_010.0], [-30_000.0, -29_990.0], [-25_000.0, -25_000.0]],
        };
        let fb = forward_backward(&scores, &p).unwrap();
        assert!(fb.log_lik.is_finite() && fb.log_lik < -70_000.0);
        let m = marginals(&fb.f_tilde, &fb.b_tilde, &scores, &p).unwrap();
        assert!((m.q_trans.sum() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chain_layouts() {
        assert_eq!(block_chains(6, 3).unwrap(), vec![0..3, 3..6]);
        assert!(block_chains(7, 3).is_err());
        assert!(check_chains(&[0..3, 4..6], 6).is_err());
        assert!(check_chains(&[0..3], 6).is_err());
        check_chains(&[0..6], 6).unwrap();
    }
}
