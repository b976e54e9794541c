//! Most-likely state path under the fitted model.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::emissions::{log_emission_matrix, EmissionScores};
use crate::error::{Error, Result};
use crate::forward_backward::check_chains;
use crate::model::{expected_params, posterior_means, ExpectedParams, Hyperparameters};

/// Decoded path. States are 0-based here; files and reports use 1-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub states: Vec<usize>,
    pub log_score: f64,
}

/// Which parameter view scores the paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeParams {
    /// exp-of-expected-log parameters, the same surrogate the E-step uses.
    #[default]
    Starred,
    /// Posterior means.
    PosteriorMean,
}

/// Max-product recursion on log scores. Ties go to the lower state index.
pub fn decode_scores(
    scores: &EmissionScores,
    log_init: &Array1<f64>,
    log_trans: &Array2<f64>,
) -> Result<StatePath> {
    let (t_len, k) = scores.log_b_star.dim();
    if log_init.len() != k || log_trans.dim() != (k, k) {
        return Err(Error::shape("initial/transition parameters do not match the scores"));
    }
    if t_len == 0 {
        return Err(Error::domain("cannot decode an empty sequence"));
    }
    let mut delta: Array1<f64> = log_init + &scores.log_b_star.row(0);
    let mut back = Array2::<usize>::zeros((t_len, k));
    let mut next = Array1::zeros(k);
    for t in 1..t_len {
        for kk in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for j in 0..k {
                let v = delta[j] + log_trans[[j, kk]];
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            back[[t, kk]] = arg;
            next[kk] = best + scores.log_b_star[[t, kk]];
        }
        std::mem::swap(&mut delta, &mut next);
        if delta.iter().all(|v| *v == f64::NEG_INFINITY) || delta.iter().any(|v| v.is_nan()) {
            return Err(Error::Degenerate {
                t,
                what: "every state path has zero weight".into(),
            });
        }
    }
    let mut last = 0;
    let mut log_score = f64::NEG_INFINITY;
    for (j, &v) in delta.iter().enumerate() {
        if v > log_score {
            log_score = v;
            last = j;
        }
    }
    if !log_score.is_finite() {
        return Err(Error::Degenerate {
            t: t_len - 1,
            what: "best path score is not finite".into(),
        });
    }
    let mut states = vec![0; t_len];
    states[t_len - 1] = last;
    for t in (1..t_len).rev() {
        states[t - 1] = back[[t, states[t]]];
    }
    Ok(StatePath { states, log_score })
}

fn decode_params(posterior: &Hyperparameters, mode: DecodeParams) -> ExpectedParams {
    match mode {
        DecodeParams::Starred => expected_params(posterior),
        DecodeParams::PosteriorMean => ExpectedParams::from_point(&posterior_means(posterior)),
    }
}

/// Decodes `data` as a single chain using the starred parameters.
pub fn decode(data: ArrayView2<f64>, posterior: &Hyperparameters) -> Result<StatePath> {
    decode_chains(data, &[0..data.nrows()], posterior, DecodeParams::Starred)
}

/// Decodes each chain separately; the returned score is the sum over chains.
pub fn decode_chains(
    data: ArrayView2<f64>,
    chains: &[Range<usize>],
    posterior: &Hyperparameters,
    mode: DecodeParams,
) -> Result<StatePath> {
    posterior.validate()?;
    check_chains(chains, data.nrows())?;
    let params = decode_params(posterior, mode);
    let scores = log_emission_matrix(data, &params)?;
    let mut states = Vec::with_capacity(data.nrows());
    let mut log_score = 0.0;
    for r in chains {
        let sub = EmissionScores {
            log_b_star: scores.log_b_star.slice(s![r.clone(), ..]).to_owned(),
        };
        let path = decode_scores(&sub, &params.log_a1_star, &params.log_a_star).map_err(|e| match e {
            Error::Degenerate { t, what } => Error::Degenerate { t: t + r.start, what },
            other => other,
        })?;
        states.extend(path.states);
        log_score += path.log_score;
    }
    Ok(StatePath { states, log_score })
}

/// Log joint of a given path under the same parameterization `decode_scores` uses.
pub fn path_log_score(
    scores: &EmissionScores,
    log_init: &Array1<f64>,
    log_trans: &Array2<f64>,
    states: &[usize],
) -> f64 {
    let mut total = log_init[states[0]] + scores.log_b_star[[0, states[0]]];
    for t in 1..states.len() {
        total += log_trans[[states[t - 1], states[t]]] + scores.log_b_star[[t, states[t]]];
    }
    total
}
