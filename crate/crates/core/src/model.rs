//! Model dimensions, Dirichlet/Gamma hyperparameters, and the two derived
//! parameter views used downstream: the starred expectations driving the
//! E-step and the posterior-mean point estimate used for simulation.
//!
//! State 0 (reported as state 1) is the wettest regime by convention. The
//! prior templates encode that ordering; [`crate::stats::wetness_order`]
//! restores it after a fit.

use ndarray::{s, Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::digamma_unchecked;

/// Number of states, locations and positive mixture components.
///
/// Each location carries `m + 1` mixture weights: the dry atom at index 0
/// and `m` exponential components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesShape>,
}

/// Time-axis layout of the data a model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesShape {
    /// Total time steps.
    pub t: usize,
    /// Number of year-blocks.
    pub n: usize,
    /// Days per block.
    pub d: usize,
}

impl ModelDims {
    pub fn new(k: usize, l: usize, m: usize) -> Result<Self> {
        let dims = ModelDims {
            k,
            l,
            m,
            series: None,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn with_series(mut self, t: usize, n: usize, d: usize) -> Result<Self> {
        self.series = Some(SeriesShape { t, n, d });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 || self.m == 0 {
            return Err(Error::domain(format!(
                "model dimensions must be positive (K={}, L={}, M={})",
                self.k, self.l, self.m
            )));
        }
        if let Some(s) = self.series {
            if s.n * s.d != s.t {
                return Err(Error::domain(format!(
                    "block structure N·D = {}·{} does not equal T = {}",
                    s.n, s.d, s.t
                )));
            }
        }
        Ok(())
    }
}

/// Dirichlet and Gamma hyperparameters. Serves both as the prior and as the
/// variational posterior since the model is conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Dirichlet parameters of the initial-state distribution, length K.
    pub xi: Array1<f64>,
    /// Row-wise Dirichlet parameters of the transition matrix, K×K.
    pub alpha: Array2<f64>,
    /// Dirichlet parameters of the mixture weights, K×L×(M+1); index 0 is the dry atom.
    pub zeta: Array3<f64>,
    /// Gamma shapes of the exponential rates, K×L×M.
    pub gamma_shape: Array3<f64>,
    /// Gamma rates of the exponential rates, K×L×M.
    pub delta_rate: Array3<f64>,
}

impl Hyperparameters {
    pub fn dims(&self) -> ModelDims {
        let (k, l, m) = self.gamma_shape.dim();
        ModelDims {
            k,
            l,
            m,
            series: None,
        }
    }

    /// Checks shapes agree and every entry is finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        let k = self.xi.len();
        let (gk, l, m) = self.gamma_shape.dim();
        if k == 0 || l == 0 || m == 0 {
            return Err(Error::shape("empty hyperparameter arrays"));
        }
        if self.alpha.dim() != (k, k)
            || gk != k
            || self.zeta.dim() != (k, l, m + 1)
            || self.delta_rate.dim() != (k, l, m)
        {
            return Err(Error::shape(format!(
                "inconsistent hyperparameter shapes: xi {:?}, alpha {:?}, zeta {:?}, gamma {:?}, delta {:?}",
                self.xi.dim(),
                self.alpha.dim(),
                self.zeta.dim(),
                self.gamma_shape.dim(),
                self.delta_rate.dim()
            )));
        }
        let all = self
            .xi
            .iter()
            .chain(self.alpha.iter())
            .chain(self.zeta.iter())
            .chain(self.gamma_shape.iter())
            .chain(self.delta_rate.iter());
        for &v in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "hyperparameters must be finite and positive, found {v}"
                )));
            }
        }
        Ok(())
    }

    /// Relabels states so that new state `i` is old state `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Hyperparameters> {
        let k = self.xi.len();
        check_permutation(perm, k)?;
        Ok(Hyperparameters {
            xi: self.xi.select(Axis(0), perm),
            alpha: self.alpha.select(Axis(0), perm).select(Axis(1), perm),
            zeta: self.zeta.select(Axis(0), perm),
            gamma_shape: self.gamma_shape.select(Axis(0), perm),
            delta_rate: self.delta_rate.select(Axis(0), perm),
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if perm.len() != k {
        return Err(Error::domain(format!(
            "permutation has length {} but K = {k}",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= k || seen[p] {
            return Err(Error::domain(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Expectations of log-parameters under the variational posterior, plus the
/// posterior mean rates that enter the exponential kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedParams {
    pub log_a1_star: Array1<f64>,
    pub log_a_star: Array2<f64>,
    /// K×L×(M+1).
    pub log_c_star: Array3<f64>,
    /// K×L×M.
    pub log_lambda_star: Array3<f64>,
    /// K×L×M posterior mean rates γ/δ.
    pub lambda_hat: Array3<f64>,
}

impl ExpectedParams {
    pub fn k(&self) -> usize {
        self.log_a1_star.len()
    }

    pub fn l(&self) -> usize {
        self.lambda_hat.dim().1
    }

    pub fn m(&self) -> usize {
        self.lambda_hat.dim().2
    }

    /// Starred parameters computed from a point estimate: `log_a* = ln a`,
    /// `log_c* = ln c`, `log_λ* = ln λ`, `λ̂ = λ`. Under this view the
    /// E-step machinery evaluates the ordinary likelihood of `params`.
    pub fn from_point(params: &PointParams) -> ExpectedParams {
        ExpectedParams {
            log_a1_star: params.pi1.mapv(f64::ln),
            log_a_star: params.a.mapv(f64::ln),
            log_c_star: params.c.mapv(f64::ln),
            log_lambda_star: params.lambda.mapv(f64::ln),
            lambda_hat: params.lambda.clone(),
        }
    }
}

/// A single parameter value for every model quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub pi1: Array1<f64>,
    /// Row-stochastic K×K transition matrix.
    pub a: Array2<f64>,
    /// K×L×(M+1) mixture weights; index 0 is the dry atom.
    pub c: Array3<f64>,
    /// K×L×M exponential rates.
    pub lambda: Array3<f64>,
}

impl PointParams {
    pub fn k(&self) -> usize {
        self.pi1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.pi1.len();
        let (ck, l, m1) = self.c.dim();
        if k == 0 || self.a.dim() != (k, k) || ck != k || m1 < 2 || self.lambda.dim() != (k, l, m1 - 1)
        {
            return Err(Error::shape("inconsistent point-parameter shapes"));
        }
        let simplex = |v: ndarray::ArrayView1<f64>| {
            v.iter().all(|&x| (0.0..=1.0).contains(&x)) && (v.sum() - 1.0).abs() < 1e-9
        };
        if !simplex(self.pi1.view()) {
            return Err(Error::domain("pi1 is not a probability vector"));
        }
        if !self.a.rows().into_iter().all(simplex) {
            return Err(Error::domain("transition rows must be probability vectors"));
        }
        for j in 0..k {
            for loc in 0..l {
                if !simplex(self.c.slice(s![j, loc, ..])) {
                    return Err(Error::domain(format!(
                        "mixture weights for state {j}, location {loc} are not a probability vector"
                    )));
                }
            }
        }
        if self.lambda.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::domain("exponential rates must be positive"));
        }
        Ok(())
    }

    pub fn permute_states(&self, perm: &[usize]) -> Result<PointParams> {
        check_permutation(perm, self.k())?;
        Ok(PointParams {
            pi1: self.pi1.select(Axis(0), perm),
            a: self.a.select(Axis(0), perm).select(Axis(1), perm),
            c: self.c.select(Axis(0), perm),
            lambda: self.lambda.select(Axis(0), perm),
        })
    }

    /// Stationary distribution of the transition matrix (power iteration).
    pub fn stationary(&self) -> Array1<f64> {
        let k = self.k();
        let mut p = Array1::from_elem(k, 1.0 / k as f64);
        for _ in 0..100_000 {
            let next = p.dot(&self.a);
            let diff = (&next - &p).mapv(f64::abs).sum();
            p = next;
            if diff < 1e-15 {
                break;
            }
        }
        let total = p.sum();
        p / total
    }
}

/// Symmetric Dirichlet priors on π₁ and on every row of A, and per-location
/// mixture/rate priors replicated from K-row templates.
pub fn default_priors(
    dims: ModelDims,
    pi_concentration: f64,
    row_concentration: f64,
    zeta_template: &Array2<f64>,
    gamma_template: &Array2<f64>,
    delta_template: &Array2<f64>,
) -> Result<Hyperparameters> {
    dims.validate()?;
    let ModelDims { k, l, m, .. } = dims;
    if !(pi_concentration > 0.0) || !(row_concentration > 0.0) {
        return Err(Error::domain("Dirichlet concentrations must be positive"));
    }
    if zeta_template.dim() != (k, m + 1)
        || gamma_template.dim() != (k, m)
        || delta_template.dim() != (k, m)
    {
        return Err(Error::shape(format!(
            "prior templates must be K×(M+1) and K×M for K={k}, M={m}"
        )));
    }
    let templates = zeta_template
        .iter()
        .chain(gamma_template.iter())
        .chain(delta_template.iter());
    for &v in templates {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("prior template entries must be positive, found {v}")));
        }
    }
    let replicate = |t: &Array2<f64>| {
        let cols = t.ncols();
        Array3::from_shape_fn((k, l, cols), |(j, _, c)| t[[j, c]])
    };
    Ok(Hyperparameters {
        xi: Array1::from_elem(k, pi_concentration / k as f64),
        alpha: Array2::from_elem((k, k), row_concentration / k as f64),
        zeta: replicate(zeta_template),
        gamma_shape: replicate(gamma_template),
        delta_rate: replicate(delta_template),
    })
}

/// Prior templates for a K-state, M-component model.
///
/// For K = 3, M = 2 these are the simulation-study values (wettest state
/// first, heavy-rain component first). Other sizes interpolate the same
/// pattern: drier states put more prior weight on the dry atom and have
/// larger expected rates; component m has expected rate growing with m.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTemplates {
    pub zeta: Array2<f64>,
    pub gamma: Array2<f64>,
    pub delta: Array2<f64>,
}

impl PriorTemplates {
    pub fn for_dims(k: usize, m: usize) -> PriorTemplates {
        if k == 3 && m == 2 {
            return PriorTemplates {
                zeta: ndarray::array![[3.0, 4.0, 3.0], [3.0, 3.5, 3.5], [4.0, 3.0, 3.0]],
                gamma: ndarray::array![[0.5, 2.0], [1.5, 9.0], [2.0, 16.0]],
                delta: Array2::from_elem((3, 2), 2.0),
            };
        }
        let frac = |j: usize| if k > 1 { j as f64 / (k - 1) as f64 } else { 0.0 };
        let zeta = Array2::from_shape_fn((k, m + 1), |(j, c)| {
            if c == 0 {
                3.0 + frac(j)
            } else {
                3.0 + (1.0 - frac(j)) * if c == 1 { 1.0 } else { 0.0 }
            }
        });
        let gamma = Array2::from_shape_fn((k, m), |(j, c)| {
            let base = 0.5 + 1.5 * frac(j);
            base * 4f64.powi(c as i32)
        });
        PriorTemplates {
            zeta,
            gamma,
            delta: Array2::from_elem((k, m), 2.0),
        }
    }
}

/// Starred expectations of the natural parameters under `posterior`.
pub fn expected_params(posterior: &Hyperparameters) -> ExpectedParams {
    let dirichlet_log_mean = |row: ndarray::ArrayView1<f64>| -> Array1<f64> {
        let psi_total = digamma_unchecked(row.sum());
        row.mapv(|a| digamma_unchecked(a) - psi_total)
    };
    let log_a1_star = dirichlet_log_mean(posterior.xi.view());
    let mut log_a_star = Array2::zeros(posterior.alpha.dim());
    for (mut out, row) in log_a_star.rows_mut().into_iter().zip(posterior.alpha.rows()) {
        out.assign(&dirichlet_log_mean(row));
    }
    let (k, l, m1) = posterior.zeta.dim();
    let mut log_c_star = Array3::zeros((k, l, m1));
    for j in 0..k {
        for loc in 0..l {
            let row = posterior.zeta.slice(s![j, loc, ..]);
            log_c_star
                .slice_mut(s![j, loc, ..])
                .assign(&dirichlet_log_mean(row));
        }
    }
    let mut log_lambda_star = Array3::zeros(posterior.gamma_shape.dim());
    ndarray::Zip::from(&mut log_lambda_star)
        .and(&posterior.gamma_shape)
        .and(&posterior.delta_rate)
        .for_each(|out, &g, &d| *out = digamma_unchecked(g) - d.ln());
    let lambda_hat = &posterior.gamma_shape / &posterior.delta_rate;
    ExpectedParams {
        log_a1_star,
        log_a_star,
        log_c_star,
        log_lambda_star,
        lambda_hat,
    }
}

/// Posterior means of every parameter block.
pub fn posterior_means(posterior: &Hyperparameters) -> PointParams {
    let normalize_rows = |a: &Array2<f64>| {
        let sums = a.sum_axis(Axis(1));
        a / &sums.insert_axis(Axis(1))
    };
    let pi1 = &posterior.xi / posterior.xi.sum();
    let a = normalize_rows(&posterior.alpha);
    let zsum = posterior.zeta.sum_axis(Axis(2)).insert_axis(Axis(2));
    let c = &posterior.zeta / &zsum;
    let lambda = &posterior.gamma_shape / &posterior.delta_rate;
    PointParams { pi1, a, c, lambda }
}
