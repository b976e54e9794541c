use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;
use spg_core::dataio::HyperparametersRecord;
use spg_core::svb::SvbConfig;
use spg_core::vbem::FitConfig;

use crate::args::Method;
use crate::error::{CliError, CliResult};

/// K-row prior templates; rows are states.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    pub zeta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

/// JSON run configuration for `fit`. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub method: Option<Method>,
    pub pi_concentration: Option<f64>,
    pub row_concentration: Option<f64>,
    /// Full prior, shaped like the model file's prior section.
    pub prior: Option<HyperparametersRecord>,
    pub templates: Option<TemplateConfig>,
    pub fit: Option<FitConfig>,
    pub svb: Option<SvbConfig>,
    pub season: Option<String>,
    pub block_days: Option<usize>,
    pub dryness_threshold: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

pub fn template_array(name: &str, rows: &[Vec<f64>]) -> CliResult<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::usage(format!("template {name} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| CliError::usage(format!("template {name}: {e}")))
}
