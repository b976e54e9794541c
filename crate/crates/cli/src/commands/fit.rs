use std::path::{Path, PathBuf};

use spg_core::dataio::{save_model, write_trace_csv, ModelFile};
use spg_core::model::{default_priors, posterior_means, ModelDims, PriorTemplates};
use spg_core::stats::wetness_order;
use spg_core::svb::fit_svb_blocks;
use spg_core::vbem::fit_cavi_chains;

use crate::args::{FitArgs, Method};
use crate::common::{load_dataset, progress};
use crate::config::{template_array, RunConfig};
use crate::error::{CliError, CliResult, EXIT_NOT_CONVERGED};
use crate::manifest::RunManifest;

/// `<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn run(args: &FitArgs) -> CliResult<i32> {
    let mut manifest = RunManifest::start("fit");
    let cfg = match &args.config {
        Some(path) => {
            manifest.config = Some(path.clone());
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };

    let threshold = args.data.threshold.or(cfg.dryness_threshold).unwrap_or(0.0);
    let season = args.data.season.clone().or(cfg.season.clone());
    let block_days = args.data.block_days.or(cfg.block_days);
    let method = args.method.or(cfg.method).unwrap_or(Method::Cavi);
    let k = args.k.or(cfg.k).unwrap_or(3);
    let m = args.m.or(cfg.m).unwrap_or(2);

    let mut fit_cfg = cfg.fit.clone().unwrap_or_default();
    if let Some(s) = args.seed {
        fit_cfg.seed = s;
    }
    if let Some(n) = args.max_iterations {
        fit_cfg.max_iterations = n;
    }
    if let Some(tol) = args.tolerance {
        fit_cfg.elbo_rel_tolerance = tol;
    }
    let mut svb_cfg = cfg.svb.clone().unwrap_or_default();
    if let Some(n) = args.svb_iterations {
        svb_cfg.svb_iterations = n;
    }
    if let Some(kappa) = args.step_exponent {
        svb_cfg.step_exponent = kappa;
    }
    if let Some(n) = args.polish_iterations {
        svb_cfg.polish_cavi_iterations = n;
    }
    fit_cfg.validate().map_err(CliError::config)?;
    if method == Method::Svb {
        svb_cfg.validate().map_err(CliError::config)?;
    }
    manifest.seed = Some(fit_cfg.seed);

    manifest.input(&args.data.data);
    let ds = load_dataset(&args.data, threshold, season.as_deref(), block_days)?;
    let dims = ModelDims::new(k, ds.l(), m).map_err(CliError::config)?;

    let prior = match (&cfg.prior, &cfg.templates) {
        (Some(_), Some(_)) => return Err(CliError::usage("config gives both prior and templates")),
        (Some(rec), None) => rec.to_hyperparameters(&dims).map_err(CliError::config)?,
        (None, templates) => {
            let (zeta, gamma, delta) = match templates {
                Some(t) => (
                    template_array("zeta", &t.zeta)?,
                    template_array("gamma", &t.gamma)?,
                    template_array("delta", &t.delta)?,
                ),
                None => {
                    let t = PriorTemplates::for_dims(k, m);
                    (t.zeta, t.gamma, t.delta)
                }
            };
            default_priors(
                dims,
                cfg.pi_concentration.unwrap_or(1.0),
                cfg.row_concentration.unwrap_or(10.0),
                &zeta,
                &gamma,
                &delta,
            )
            .map_err(CliError::config)?
        }
    };

    let chains = ds.chains();
    let mut observer = progress(args.progress_every);
    let result = match method {
        Method::Cavi => fit_cavi_chains(ds.values.view(), &chains, &prior, &fit_cfg, &mut observer)?,
        Method::Svb => {
            if ds.blocks.is_none() {
                return Err(CliError::usage("--method svb needs --season or --block-days"));
            }
            fit_svb_blocks(ds.values.view(), &chains, &prior, &fit_cfg, &svb_cfg, &mut observer)?
        }
    };

    let order = wetness_order(&posterior_means(&result.posterior));
    let (n, d) = match &ds.blocks {
        Some(b) => (b.len(), b[0].len),
        None => (1, ds.t()),
    };
    let model = ModelFile {
        dims: dims.with_series(ds.t(), n, d).map_err(CliError::config)?,
        prior: prior.permute_states(&order)?,
        posterior: result.posterior.permute_states(&order)?,
        state_order: order,
        trace: result.trace,
        seed: fit_cfg.seed,
        locations: Some(ds.locations.clone()),
    };

    if let Some(dir) = args.out_model.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_model(&model, &args.out_model)?;
    let trace_path = sibling(&args.out_model, "trace.csv");
    write_trace_csv(&model.trace, &trace_path)?;
    manifest.output(&args.out_model);
    manifest.output(&trace_path);

    let code = if model.trace.converged {
        0
    } else {
        eprintln!(
            "warning: no convergence after {} iterations; model written anyway",
            model.trace.iterations_run
        );
        EXIT_NOT_CONVERGED
    };
    manifest.finish(&sibling(&args.out_model, "manifest.json"), code)?;
    Ok(code)
}
