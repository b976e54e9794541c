//! Stochastic variational Bayes over year-blocks.
//!
//! Each iteration samples a block uniformly with replacement, runs the VBE
//! step on it as an independent chain, and blends the hyperparameters
//! toward `prior + N · (block statistics)` with a Robbins–Monro step
//! `τᵢ = (1 + i)^(−κ)`. A short full-data CAVI polish follows.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::PrecipDataset;
use crate::error::{Error, Result};
use crate::forward_backward::{check_chains, LatentMarginals};
use crate::model::Hyperparameters;
use crate::vbem::{
    check_stats_shape, initial_posterior, run_cavi, sufficient_stats, total_kl, vbe_step_chains,
    FitConfig, FitResult, FitTrace, Phase, SufficientStats, TraceEntry,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvbConfig {
    pub svb_iterations: usize,
    /// κ in τᵢ = (1 + i)^(−κ); must lie in (0.5, 1].
    pub step_exponent: f64,
    pub polish_cavi_iterations: usize,
    /// Blocks per minibatch; their statistics are averaged.
    pub batch_size: usize,
    /// Scale the initial-state statistics by N like every other family.
    pub scale_initial: bool,
}

impl Default for SvbConfig {
    fn default() -> Self {
        SvbConfig {
            svb_iterations: 500,
            step_exponent: 0.9,
            polish_cavi_iterations: 50,
            batch_size: 1,
            scale_initial: false,
        }
    }
}

impl SvbConfig {
    pub fn validate(&self) -> Result<()> {
        check_kappa(self.step_exponent)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.5 && kappa <= 1.0) {
        return Err(Error::Config(format!(
            "step exponent must lie in (0.5, 1] for the Robbins–Monro conditions, got {kappa}"
        )));
    }
    Ok(())
}

/// τᵢ = (1 + i)^(−κ).
pub fn step_size(i: usize, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if i == 0 {
        return Err(Error::domain("step index starts at 1"));
    }
    Ok((1.0 + i as f64).powf(-kappa))
}

/// One sampled block: its position in the dataset's block list, its id, and its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub index: usize,
    pub block_id: i32,
    pub data: Array2<f64>,
}

/// Draws one block uniformly at random (with replacement across calls).
pub fn sample_minibatch<R: Rng + ?Sized>(dataset: &PrecipDataset, rng: &mut R) -> Result<Minibatch> {
    let blocks = dataset
        .blocks
        .as_ref()
        .filter(|b| !b.is_empty())
        .ok_or_else(|| Error::Config("stochastic fitting needs a block-structured dataset".into()))?;
    let index = rng.random_range(0..blocks.len());
    let b = &blocks[index];
    Ok(Minibatch {
        index,
        block_id: b.id,
        data: dataset.values.slice(s![b.range(), ..]).to_owned(),
    })
}

fn blend(
    prev: &Hyperparameters,
    stats: &SufficientStats,
    prior: &Hyperparameters,
    tau: f64,
    n: f64,
    scale_initial: bool,
) -> Hyperparameters {
    let keep = 1.0 - tau;
    let first_scale = if scale_initial { n } else { 1.0 };
    Hyperparameters {
        xi: &prev.xi * keep + (&prior.xi + &(&stats.first * first_scale)) * tau,
        alpha: &prev.alpha * keep + (&prior.alpha + &(&stats.trans * n)) * tau,
        zeta: &prev.zeta * keep + (&prior.zeta + &(&stats.occupancy * n)) * tau,
        gamma_shape: &prev.gamma_shape * keep
            + (&prior.gamma_shape + &(&stats.occupancy.slice(s![.., .., 1..]) * n)) * tau,
        delta_rate: &prev.delta_rate * keep + (&prior.delta_rate + &(&stats.rain * n)) * tau,
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(format!("step size must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

/// Blended stochastic update `(1 − τ)·prev + τ·(prior + N·stats)`. The
/// initial-state family uses the block's q₁ⱼ without the N factor.
pub fn svb_m_step(
    prev: &Hyperparameters,
    minibatch_marginals: &LatentMarginals,
    minibatch_data: ArrayView2<f64>,
    prior: &Hyperparameters,
    tau: f64,
    n: usize,
) -> Result<Hyperparameters> {
    svb_m_step_with(prev, minibatch_marginals, minibatch_data, prior, tau, n, false)
}

/// [`svb_m_step`] with the choice of scaling the initial-state statistics.
pub fn svb_m_step_with(
    prev: &Hyperparameters,
    minibatch_marginals: &LatentMarginals,
    minibatch_data: ArrayView2<f64>,
    prior: &Hyperparameters,
    tau: f64,
    n: usize,
    scale_initial: bool,
) -> Result<Hyperparameters> {
    check_tau(tau)?;
    let stats = sufficient_stats(minibatch_marginals, minibatch_data)?;
    check_stats_shape(&stats, prior)?;
    Ok(blend(prev, &stats, prior, tau, n as f64, scale_initial))
}

fn mean_stats(mut all: Vec<SufficientStats>) -> SufficientStats {
    let count = all.len() as f64;
    let mut acc = all.remove(0);
    for s in &all {
        acc.first += &s.first;
        acc.trans += &s.trans;
        acc.occupancy += &s.occupancy;
        acc.rain += &s.rain;
    }
    if count > 1.0 {
        acc.first /= count;
        acc.trans /= count;
        acc.occupancy /= count;
        acc.rain /= count;
    }
    acc
}

/// SVB followed by a full-data CAVI polish on a block-structured dataset.
pub fn fit_svb(
    dataset: &PrecipDataset,
    prior: &Hyperparameters,
    fit: &FitConfig,
    svb: &SvbConfig,
) -> Result<FitResult> {
    let blocks = dataset
        .blocks
        .as_ref()
        .ok_or_else(|| Error::Config("stochastic fitting needs a block-structured dataset".into()))?;
    let chains: Vec<Range<usize>> = blocks.iter().map(|b| b.range()).collect();
    fit_svb_blocks(dataset.values.view(), &chains, prior, fit, svb, &mut |_| {})
}

/// [`fit_svb`] on a raw matrix with explicit, equal-length blocks.
pub fn fit_svb_blocks(
    data: ArrayView2<f64>,
    blocks: &[Range<usize>],
    prior: &Hyperparameters,
    fit: &FitConfig,
    svb: &SvbConfig,
    observer: &mut dyn FnMut(&TraceEntry),
) -> Result<FitResult> {
    fit.validate()?;
    svb.validate()?;
    prior.validate()?;
    check_chains(blocks, data.nrows())?;
    if blocks.iter().any(|b| b.len() != blocks[0].len()) {
        return Err(Error::Config("all blocks must have the same length".into()));
    }
    let n = blocks.len();
    let mut rng = ChaCha8Rng::seed_from_u64(fit.seed);
    let mut posterior = initial_posterior(prior, fit);
    let mut trace = FitTrace::default();

    for i in 1..=svb.svb_iterations {
        let tau = step_size(i, svb.step_exponent)?;
        let mut batch_stats = Vec::with_capacity(svb.batch_size);
        let mut batch_ll = 0.0;
        for _ in 0..svb.batch_size {
            let b = blocks[rng.random_range(0..n)].clone();
            let block = data.slice(s![b, ..]);
            let d = block.nrows();
            let (marginals, ll) = vbe_step_chains(block, &[0..d], &posterior)?;
            batch_stats.push(sufficient_stats(&marginals, block)?);
            batch_ll += ll;
        }
        let estimate = n as f64 * batch_ll / svb.batch_size as f64 - total_kl(&posterior, prior);
        let entry = TraceEntry {
            iteration: i - 1,
            phase: Phase::Svb,
            elbo: estimate,
            estimate: true,
            step_size: Some(tau),
        };
        observer(&entry);
        trace.entries.push(entry);
        let stats = mean_stats(batch_stats);
        posterior = blend(&posterior, &stats, prior, tau, n as f64, svb.scale_initial);
    }

    let (posterior, converged, updates) = run_cavi(
        data,
        blocks,
        prior,
        posterior,
        svb.polish_cavi_iterations,
        fit.elbo_rel_tolerance,
        svb.svb_iterations,
        &mut trace,
        observer,
    )?;
    trace.converged = converged;
    trace.iterations_run = svb.svb_iterations + updates;
    Ok(FitResult { posterior, trace })
}
