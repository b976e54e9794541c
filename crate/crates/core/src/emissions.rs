//! Semi-continuous per-location emissions: a point mass at zero plus M
//! exponential components for positive precipitation.
//!
//! A dry observation (`y == 0`) is explained only by the dry atom; a wet one
//! only by the exponential components. Trace amounts must be clamped to zero
//! before they get here (see `dataio`).

use ndarray::{Array2, Array4, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::ExpectedParams;

/// Per-time, per-state log emission scores, summed over locations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionScores {
    /// T×K.
    pub log_b_star: Array2<f64>,
}

impl EmissionScores {
    pub fn t(&self) -> usize {
        self.log_b_star.nrows()
    }

    pub fn k(&self) -> usize {
        self.log_b_star.ncols()
    }
}

/// Mixture responsibilities for every (t, j, l), shape T×K×L×(M+1).
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub q_r: Array4<f64>,
}

/// Rejects negative or non-finite observations and a location count that
/// disagrees with the model.
pub fn validate_data(data: ArrayView2<f64>, l: usize) -> Result<()> {
    if data.ncols() != l {
        return Err(Error::shape(format!(
            "data has {} locations but the model has {l}",
            data.ncols()
        )));
    }
    for ((t, loc), &y) in data.indexed_iter() {
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::domain(format!(
                "precipitation must be finite and nonnegative, found {y} at t={t}, location {loc}"
            )));
        }
    }
    Ok(())
}

/// Log of Σₘ b*ₜⱼₗₘ for a single observation `y` at location `loc` under state `j`.
#[inline]
pub(crate) fn location_log_score(y: f64, j: usize, loc: usize, params: &ExpectedParams) -> f64 {
    if y == 0.0 {
        return params.log_c_star[[j, loc, 0]];
    }
    let m = params.m();
    let term = |c: usize| {
        params.log_c_star[[j, loc, c + 1]] + params.log_lambda_star[[j, loc, c]]
            - y * params.lambda_hat[[j, loc, c]]
    };
    if m == 1 {
        return term(0);
    }
    let mut max = f64::NEG_INFINITY;
    for c in 0..m {
        max = max.max(term(c));
    }
    let mut sum = 0.0;
    for c in 0..m {
        sum += (term(c) - max).exp();
    }
    max + sum.ln()
}

/// Writes the responsibility vector q_tjl· for one observation into `out`
/// (length M+1).
#[inline]
pub(crate) fn location_responsibilities(
    y: f64,
    j: usize,
    loc: usize,
    params: &ExpectedParams,
    out: &mut [f64],
) {
    out.fill(0.0);
    if y == 0.0 {
        out[0] = 1.0;
        return;
    }
    let m = params.m();
    let mut max = f64::NEG_INFINITY;
    for c in 0..m {
        let v = params.log_c_star[[j, loc, c + 1]] + params.log_lambda_star[[j, loc, c]]
            - y * params.lambda_hat[[j, loc, c]];
        out[c + 1] = v;
        max = max.max(v);
    }
    let mut total = 0.0;
    for v in &mut out[1..] {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in &mut out[1..] {
        *v /= total;
    }
}

fn row_scores(row: ArrayView1<f64>, params: &ExpectedParams, mut out: ndarray::ArrayViewMut1<f64>) {
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (loc, &y) in row.iter().enumerate() {
            acc += location_log_score(y, j, loc, params);
        }
        *o = acc;
    }
}

/// ln b*ₜⱼ for every t and j. Rows are computed in parallel; each row's sum
/// over locations runs in a fixed order so the result does not depend on
/// the thread count.
pub fn log_emission_matrix(data: ArrayView2<f64>, params: &ExpectedParams) -> Result<EmissionScores> {
    validate_data(data, params.l())?;
    Ok(log_emission_matrix_unchecked(data, params))
}

pub(crate) fn log_emission_matrix_unchecked(
    data: ArrayView2<f64>,
    params: &ExpectedParams,
) -> EmissionScores {
    let mut log_b_star = Array2::zeros((data.nrows(), params.k()));
    Zip::from(log_b_star.rows_mut())
        .and(data.rows())
        .par_for_each(|out, row| row_scores(row, params, out));
    EmissionScores { log_b_star }
}

/// Materializes q_tjlm for every observation. Memory is T·K·L·(M+1); the
/// fitting loops never call this and stream the same quantities instead.
pub fn responsibilities(data: ArrayView2<f64>, params: &ExpectedParams) -> Result<Responsibilities> {
    validate_data(data, params.l())?;
    let (t, k, l, m1) = (data.nrows(), params.k(), params.l(), params.m() + 1);
    let mut q_r = Array4::zeros((t, k, l, m1));
    Zip::from(q_r.outer_iter_mut())
        .and(data.rows())
        .par_for_each(|mut slab, row| {
            let mut buf = vec![0.0; m1];
            for j in 0..k {
                for (loc, &y) in row.iter().enumerate() {
                    location_responsibilities(y, j, loc, params, &mut buf);
                    slab.index_axis_mut(Axis(0), j)
                        .index_axis_mut(Axis(0), loc)
                        .iter_mut()
                        .zip(&buf)
                        .for_each(|(o, &v)| *o = v);
                }
            }
        });
    Ok(Responsibilities { q_r })
}
