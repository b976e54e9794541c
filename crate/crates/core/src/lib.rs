//! Hidden Markov model for daily precipitation at many locations, with
//! semi-continuous emissions (a point mass at zero plus a mixture of
//! exponentials per location), fitted by structured variational Bayes.
//!
//! The pipeline:
//!
//! * [`model`] holds dimensions, Dirichlet/Gamma hyperparameters and the
//!   derived parameter views.
//! * [`emissions`] and [`forward_backward`] form the VBE step.
//! * [`vbem`] runs full-data coordinate ascent (CAVI); [`svb`] runs the
//!   stochastic year-block variant followed by a CAVI polish.
//! * [`viterbi`] decodes state paths, [`generator`] simulates synthetic
//!   series, [`stats`] computes validation metrics.
//! * [`dataio`] reads and writes datasets, models and reports.
//!
//! ```
//! use spg_core::generator::{paper_simulation_preset, simulate_seeded};
//! use spg_core::model::{default_priors, ModelDims, PriorTemplates};
//! use spg_core::vbem::{fit_cavi, FitConfig};
//!
//! let truth = paper_simulation_preset();
//! let run = simulate_seeded(&truth, 1, 300, 7).unwrap();
//! let t = PriorTemplates::for_dims(3, 2);
//! let prior = default_priors(ModelDims::new(3, 3, 2).unwrap(), 1.0, 10.0, &t.zeta, &t.gamma, &t.delta).unwrap();
//! let cfg = FitConfig { max_iterations: 50, ..FitConfig::default() };
//! let fit = fit_cavi(run.data.view(), &prior, &cfg).unwrap();
//! assert!(fit.trace.elbo().windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs()));
//! ```

pub mod dataio;
pub mod emissions;
pub mod error;
pub mod forward_backward;
pub mod generator;
pub mod model;
pub mod numkernel;
pub mod stats;
pub mod svb;
pub mod vbem;
pub mod viterbi;

pub use error::{Error, Result};
