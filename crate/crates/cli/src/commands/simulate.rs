use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use spg_core::dataio::{
    load_long_csv, load_model, write_locations_csv, write_long_csv, write_states_csv,
    PrecipDataset,
};
use spg_core::generator::{replicate_rng, simulate_blocks};
use spg_core::model::posterior_means;
use spg_core::stats::{location_stats, summarize_replicates, LocationStats, ReplicateSummary};

use crate::args::SimulateArgs;
use crate::common::{default_locations, ensure_dir, series_dates, series_length, write_json};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Serialize)]
struct LocationSummary {
    location_id: String,
    dry_proportion: ReplicateSummary,
    /// Over the replicates with at least one wet day at this location.
    mean_intensity: Option<ReplicateSummary>,
}

#[derive(Serialize)]
struct SimulationSummary {
    replicates: usize,
    blocks: usize,
    days_per_block: usize,
    seed: u64,
    locations: Vec<LocationSummary>,
}

pub fn run(args: &SimulateArgs) -> CliResult<i32> {
    let mut manifest = RunManifest::start("simulate");
    manifest.seed = Some(args.seed);
    manifest.input(&args.model);
    if args.replicates == 0 {
        return Err(CliError::usage("--replicates must be at least 1"));
    }
    let len = series_length(&args.length)?;
    let (dates, blocks) = series_dates(&args.length.start, len)?;
    let model = load_model(&args.model)?;
    let params = posterior_means(&model.posterior);
    let locations = model
        .locations
        .clone()
        .unwrap_or_else(|| default_locations(model.dims.l));

    let reference = match &args.reference {
        Some(path) => {
            manifest.input(path);
            let ds = load_long_csv(path, None, 0.0)?;
            if ds.l() != model.dims.l {
                return Err(CliError::data(format!(
                    "reference has {} locations but the model has {}",
                    ds.l(),
                    model.dims.l
                )));
            }
            Some(location_stats(ds.values.view(), None)?)
        }
        None => None,
    };

    ensure_dir(&args.out)?;
    if args.replicates == 1 {
        let run = simulate_blocks(&params, len.n, len.d, &mut replicate_rng(args.seed, 0))?;
        let ds = PrecipDataset::new(run.data, dates, locations, blocks)?;
        let data_path = args.out.join("data.csv");
        let loc_path = args.out.join("locations.csv");
        let states_path = args.out.join("states.csv");
        write_long_csv(&ds, &data_path)?;
        write_locations_csv(&ds.locations, &loc_path)?;
        write_states_csv(&states_path, &ds.dates, &ds.block_ids(), &run.states)?;
        for p in [&data_path, &loc_path, &states_path] {
            manifest.output(p);
        }
        manifest.finish(&args.out.join("manifest.json"), 0)?;
        return Ok(0);
    }

    let per_replicate: Vec<LocationStats> = (0..args.replicates)
        .into_par_iter()
        .map(|r| -> CliResult<LocationStats> {
            let run = simulate_blocks(&params, len.n, len.d, &mut replicate_rng(args.seed, r as u64))?;
            Ok(location_stats(run.data.view(), None)?)
        })
        .collect::<CliResult<_>>()?;

    let mut summaries = Vec::with_capacity(locations.len());
    for (l, loc) in locations.iter().enumerate() {
        let dry: Vec<f64> = per_replicate.iter().map(|s| s.dry_proportion[l]).collect();
        let wet: Vec<f64> = per_replicate.iter().filter_map(|s| s.mean_intensity[l]).collect();
        let ref_dry = reference.as_ref().map(|s| s.dry_proportion[l]);
        let ref_wet = reference.as_ref().and_then(|s| s.mean_intensity[l]);
        summaries.push(LocationSummary {
            location_id: loc.id.clone(),
            dry_proportion: summarize_replicates(&dry, ref_dry)?,
            mean_intensity: if wet.is_empty() {
                None
            } else {
                Some(summarize_replicates(&wet, ref_wet)?)
            },
        });
    }
    let summary = SimulationSummary {
        replicates: args.replicates,
        blocks: len.n,
        days_per_block: len.d,
        seed: args.seed,
        locations: summaries,
    };

    let mut table = String::from("replicate,location_id,dry_proportion,mean_intensity\n");
    for (r, s) in per_replicate.iter().enumerate() {
        for (l, loc) in locations.iter().enumerate() {
            let wet = s.mean_intensity[l].map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(table, "{},{},{},{wet}", r + 1, loc.id, s.dry_proportion[l]);
        }
    }

    let summary_path = args.out.join("summary.json");
    let table_path = args.out.join("replicate_stats.csv");
    write_json(&summary_path, &summary)?;
    std::fs::write(&table_path, table)?;
    manifest.output(&summary_path);
    manifest.output(&table_path);
    manifest.finish(&args.out.join("manifest.json"), 0)?;
    Ok(0)
}
