use serde::Serialize;
use spg_core::dataio::{load_model, write_states_csv};
use spg_core::stats::{location_stats, LocationStats, StateMask};
use spg_core::viterbi::{decode_chains, DecodeParams};

use crate::args::{DecodeArgs, DecodeView};
use crate::common::{ensure_dir, load_dataset, write_json};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Serialize)]
struct StateReport {
    /// 1-based label, as in the states CSV.
    state: usize,
    #[serde(flatten)]
    stats: Option<LocationStats>,
}

#[derive(Serialize)]
struct DecodeReport {
    location_ids: Vec<String>,
    log_score: f64,
    states: Vec<StateReport>,
}

pub fn run(args: &DecodeArgs) -> CliResult<i32> {
    let mut manifest = RunManifest::start("decode");
    manifest.input(&args.model);
    manifest.input(&args.data.data);
    let model = load_model(&args.model)?;
    manifest.seed = Some(model.seed);
    let ds = load_dataset(
        &args.data,
        args.data.threshold.unwrap_or(0.0),
        args.data.season.as_deref(),
        args.data.block_days,
    )?;
    if ds.l() != model.dims.l {
        return Err(CliError::data(format!(
            "model has {} locations but the data has {}",
            model.dims.l,
            ds.l()
        )));
    }
    if let Some(locs) = &model.locations {
        if let Some((a, b)) = locs.iter().zip(&ds.locations).find(|(a, b)| a.id != b.id) {
            return Err(CliError::data(format!(
                "location mismatch: model has '{}' where the data has '{}'",
                a.id, b.id
            )));
        }
    }
    let mode = match args.params {
        DecodeView::Starred => DecodeParams::Starred,
        DecodeView::PosteriorMean => DecodeParams::PosteriorMean,
    };
    let path = decode_chains(ds.values.view(), &ds.chains(), &model.posterior, mode)?;

    let mut states = Vec::with_capacity(model.dims.k);
    for j in 0..model.dims.k {
        let mask = StateMask {
            states: &path.states,
            state: j,
        };
        // A state that is never visited has no statistics.
        let stats = location_stats(ds.values.view(), Some(mask)).ok();
        states.push(StateReport { state: j + 1, stats });
    }
    let report = DecodeReport {
        location_ids: ds.locations.iter().map(|l| l.id.clone()).collect(),
        log_score: path.log_score,
        states,
    };

    ensure_dir(&args.out)?;
    let states_path = args.out.join("states.csv");
    let stats_path = args.out.join("state_stats.json");
    write_states_csv(&states_path, &ds.dates, &ds.block_ids(), &path.states)?;
    write_json(&stats_path, &report)?;
    manifest.output(&states_path);
    manifest.output(&stats_path);
    manifest.finish(&args.out.join("manifest.json"), 0)?;
    Ok(0)
}
