use spg_core::dataio::{load_model, write_locations_csv, write_long_csv, write_states_csv, PrecipDataset};
use spg_core::generator::{paper_simulation_preset, seeded_rng, simulate_blocks};
use spg_core::model::posterior_means;

use crate::args::GenArgs;
use crate::common::{default_locations, ensure_dir, series_dates, series_length};
use crate::error::CliResult;
use crate::manifest::RunManifest;

pub fn run(args: &GenArgs) -> CliResult<i32> {
    let mut manifest = RunManifest::start("gen-synthetic");
    manifest.seed = Some(args.seed);
    let len = series_length(&args.length)?;
    let (dates, blocks) = series_dates(&args.length.start, len)?;
    let (params, locations) = match &args.params {
        Some(path) => {
            manifest.input(path);
            let model = load_model(path)?;
            let locs = model
                .locations
                .clone()
                .unwrap_or_else(|| default_locations(model.dims.l));
            (posterior_means(&model.posterior), locs)
        }
        None => {
            let p = paper_simulation_preset();
            let l = p.c.dim().1;
            (p, default_locations(l))
        }
    };
    let run = simulate_blocks(&params, len.n, len.d, &mut seeded_rng(args.seed))?;
    let ds = PrecipDataset::new(run.data, dates, locations, blocks)?;

    ensure_dir(&args.out)?;
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
    Ok(0)
}
