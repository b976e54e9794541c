//! Full-data coordinate ascent: VBE step (forward-backward on the starred
//! parameters), VBM step (conjugate hyperparameter updates) and the ELBO.

use std::ops::Range;

use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emissions::{location_responsibilities, validate_data};
use crate::error::{Error, Result};
use crate::forward_backward::{chain_marginals, LatentMarginals};
use crate::model::{expected_params, Hyperparameters};
use crate::numkernel::{kl_dirichlet_unchecked, kl_gamma_unchecked};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence threshold on |ΔELBO| / (|ELBO| + 1).
    pub elbo_rel_tolerance: f64,
    pub seed: u64,
    /// When set, the starting posterior multiplies every Gamma shape by
    /// log-normal noise with this standard deviation (on the log scale).
    pub jitter: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 5000,
            elbo_rel_tolerance: 1e-9,
            seed: 0,
            jitter: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.elbo_rel_tolerance > 0.0) {
            return Err(Error::Config("elbo_rel_tolerance must be positive".into()));
        }
        if let Some(j) = self.jitter {
            if !(j >= 0.0) || !j.is_finite() {
                return Err(Error::Config("jitter must be a nonnegative number".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Svb,
    Cavi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub phase: Phase,
    pub elbo: f64,
    /// True for the noisy minibatch estimates recorded during SVB.
    pub estimate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations_run: usize,
}

impl FitTrace {
    pub fn elbo(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.elbo).collect()
    }

    /// Last exact (non-estimate) ELBO.
    pub fn final_elbo(&self) -> Option<f64> {
        self.entries.iter().rev().find(|e| !e.estimate).map(|e| e.elbo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub posterior: Hyperparameters,
    pub trace: FitTrace,
}

/// Expected sufficient statistics of the complete-data likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// Σ over chains of q₁ⱼ.
    pub first: Array1<f64>,
    /// Σₜ expected transitions, K×K.
    pub trans: Array2<f64>,
    /// Σₜ q_tj·q_tjlm, K×L×(M+1).
    pub occupancy: Array3<f64>,
    /// Σₜ q_tj·q_tjlm·yₜₗ, K×L×M.
    pub rain: Array3<f64>,
}

/// Streams over the data once per location to accumulate the mixture
/// statistics; no T×K×L×(M+1) array is ever formed. Locations are processed
/// in parallel and each location's sum runs in time order.
pub fn sufficient_stats(marginals: &LatentMarginals, data: ArrayView2<f64>) -> Result<SufficientStats> {
    let params = &marginals.params;
    let (k, l, m) = (params.k(), params.l(), params.m());
    validate_data(data, l)?;
    if marginals.q_t.dim() != (data.nrows(), k) {
        return Err(Error::shape(format!(
            "marginals cover {:?} but data is {}×{}",
            marginals.q_t.dim(),
            data.nrows(),
            data.ncols()
        )));
    }
    let per_location: Vec<(Array2<f64>, Array2<f64>)> = (0..l)
        .into_par_iter()
        .map(|loc| {
            let mut occ = Array2::<f64>::zeros((k, m + 1));
            let mut rain = Array2::<f64>::zeros((k, m));
            let mut buf = vec![0.0; m + 1];
            for (t, &y) in data.column(loc).iter().enumerate() {
                for j in 0..k {
                    let w = marginals.q_t[[t, j]];
                    if y == 0.0 {
                        occ[[j, 0]] += w;
                        continue;
                    }
                    location_responsibilities(y, j, loc, params, &mut buf);
                    for c in 0..m {
                        let r = w * buf[c + 1];
                        occ[[j, c + 1]] += r;
                        rain[[j, c]] += r * y;
                    }
                }
            }
            (occ, rain)
        })
        .collect();
    let mut occupancy = Array3::zeros((k, l, m + 1));
    let mut rain = Array3::zeros((k, l, m));
    for (loc, (occ, r)) in per_location.into_iter().enumerate() {
        occupancy.slice_mut(s![.., loc, ..]).assign(&occ);
        rain.slice_mut(s![.., loc, ..]).assign(&r);
    }
    Ok(SufficientStats {
        first: marginals.q_first.clone(),
        trans: marginals.q_trans.clone(),
        occupancy,
        rain,
    })
}

/// VBE step on a single chain.
pub fn vbe_step(data: ArrayView2<f64>, posterior: &Hyperparameters) -> Result<(LatentMarginals, f64)> {
    vbe_step_chains(data, &[0..data.nrows()], posterior)
}

/// VBE step with `data` split into independent chains, each starting from
/// the initial-state distribution.
pub fn vbe_step_chains(
    data: ArrayView2<f64>,
    chains: &[Range<usize>],
    posterior: &Hyperparameters,
) -> Result<(LatentMarginals, f64)> {
    posterior.validate()?;
    let params = expected_params(posterior);
    chain_marginals(data, chains, &params)
}

/// Conjugate update: prior plus expected sufficient statistics.
pub fn vbm_step(
    marginals: &LatentMarginals,
    prior: &Hyperparameters,
    data: ArrayView2<f64>,
) -> Result<Hyperparameters> {
    let stats = sufficient_stats(marginals, data)?;
    check_stats_shape(&stats, prior)?;
    Ok(Hyperparameters {
        xi: &prior.xi + &stats.first,
        alpha: &prior.alpha + &stats.trans,
        zeta: &prior.zeta + &stats.occupancy,
        gamma_shape: &prior.gamma_shape + &stats.occupancy.slice(s![.., .., 1..]),
        delta_rate: &prior.delta_rate + &stats.rain,
    })
}

pub(crate) fn check_stats_shape(stats: &SufficientStats, prior: &Hyperparameters) -> Result<()> {
    if stats.occupancy.dim() != prior.zeta.dim() || stats.trans.dim() != prior.alpha.dim() {
        return Err(Error::shape(format!(
            "statistics shaped {:?} do not match prior {:?}",
            stats.occupancy.dim(),
            prior.zeta.dim()
        )));
    }
    Ok(())
}

/// Sum of the KL divergences of every parameter block from its prior.
pub fn total_kl(posterior: &Hyperparameters, prior: &Hyperparameters) -> f64 {
    let kl_pi = kl_dirichlet_unchecked(
        posterior.xi.as_slice().expect("contiguous"),
        prior.xi.as_slice().expect("contiguous"),
    );
    let kl_a: f64 = posterior
        .alpha
        .rows()
        .into_iter()
        .zip(prior.alpha.rows())
        .map(|(q, p)| kl_dirichlet_unchecked(&q.to_vec(), &p.to_vec()))
        .sum();
    let (k, l, _) = posterior.zeta.dim();
    let mut kl_c = 0.0;
    for j in 0..k {
        for loc in 0..l {
            let q = posterior.zeta.slice(s![j, loc, ..]).to_vec();
            let p = prior.zeta.slice(s![j, loc, ..]).to_vec();
            kl_c += kl_dirichlet_unchecked(&q, &p);
        }
    }
    let kl_lambda: f64 = posterior
        .gamma_shape
        .iter()
        .zip(posterior.delta_rate.iter())
        .zip(prior.gamma_shape.iter().zip(prior.delta_rate.iter()))
        .map(|((&gq, &dq), (&gp, &dp))| kl_gamma_unchecked(gq, dq, gp, dp))
        .sum();
    kl_pi + kl_a + kl_c + kl_lambda
}

/// ELBO = ln q(y|Θ) − KL(q(π₁)‖p(π₁)) − KL(q(A)‖p(A)) − KL(q(C)‖p(C)) − KL(q(Λ)‖p(Λ)).
pub fn elbo(log_lik: f64, posterior: &Hyperparameters, prior: &Hyperparameters) -> f64 {
    log_lik - total_kl(posterior, prior)
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / (next.abs() + 1.0)
}

/// Starting posterior: the prior, optionally with jittered Gamma shapes.
pub fn initial_posterior(prior: &Hyperparameters, config: &FitConfig) -> Hyperparameters {
    let mut start = prior.clone();
    if let Some(sigma) = config.jitter.filter(|&s| s > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let noise = LogNormal::new(0.0, sigma).expect("validated sigma");
        start
            .gamma_shape
            .mapv_inplace(|g| g * noise.sample(&mut rng));
    }
    start
}

/// Runs CAVI from `start` for at most `max_iterations` hyperparameter
/// updates. The returned posterior is the one whose ELBO was recorded last.
pub(crate) fn run_cavi(
    data: ArrayView2<f64>,
    chains: &[Range<usize>],
    prior: &Hyperparameters,
    start: Hyperparameters,
    max_iterations: usize,
    tolerance: f64,
    first_iteration: usize,
    trace: &mut FitTrace,
    observer: &mut dyn FnMut(&TraceEntry),
) -> Result<(Hyperparameters, bool, usize)> {
    let mut posterior = start;
    let mut prev_elbo: Option<f64> = None;
    let mut updates = 0;
    loop {
        let (marginals, log_lik) = vbe_step_chains(data, chains, &posterior)?;
        let value = elbo(log_lik, &posterior, prior);
        let entry = TraceEntry {
            iteration: first_iteration + updates,
            phase: Phase::Cavi,
            elbo: value,
            estimate: false,
            step_size: None,
        };
        observer(&entry);
        trace.entries.push(entry);
        if let Some(prev) = prev_elbo {
            if relative_change(prev, value) < tolerance {
                return Ok((posterior, true, updates));
            }
        }
        if updates == max_iterations {
            return Ok((posterior, false, updates));
        }
        posterior = vbm_step(&marginals, prior, data)?;
        prev_elbo = Some(value);
        updates += 1;
    }
}

/// Coordinate-ascent fit on `data` treated as a single chain.
pub fn fit_cavi(data: ArrayView2<f64>, prior: &Hyperparameters, config: &FitConfig) -> Result<FitResult> {
    fit_cavi_chains(data, &[0..data.nrows()], prior, config, &mut |_| {})
}

/// Coordinate-ascent fit with `data` split into independent chains.
/// `observer` sees every trace entry as it is produced.
pub fn fit_cavi_chains(
    data: ArrayView2<f64>,
    chains: &[Range<usize>],
    prior: &Hyperparameters,
    config: &FitConfig,
    observer: &mut dyn FnMut(&TraceEntry),
) -> Result<FitResult> {
    config.validate()?;
    prior.validate()?;
    let start = initial_posterior(prior, config);
    let mut trace = FitTrace::default();
    let (posterior, converged, updates) = run_cavi(
        data,
        chains,
        prior,
        start,
        config.max_iterations,
        config.elbo_rel_tolerance,
        0,
        &mut trace,
        observer,
    )?;
    trace.converged = converged;
    trace.iterations_run = updates;
    Ok(FitResult { posterior, trace })
}
