use std::path::Path;

use chrono::{Datelike, NaiveDate};
use spg_core::dataio::{
    load_long_csv, load_wide_csv, make_blocks, Block, Location, PrecipDataset, SeasonRule,
};
use spg_core::vbem::{Phase, TraceEntry};

use crate::args::{DataArgs, LengthArgs};
use crate::error::{CliError, CliResult};

/// Loads a dataset and applies the requested block structure.
pub fn load_dataset(
    args: &DataArgs,
    threshold: f64,
    season: Option<&str>,
    block_days: Option<usize>,
) -> CliResult<PrecipDataset> {
    let locations = args.locations.as_deref();
    let ds = if args.wide {
        load_wide_csv(&args.data, locations, threshold)?
    } else {
        load_long_csv(&args.data, locations, threshold)?
    };
    if season.is_some() && block_days.is_some() {
        return Err(CliError::usage("--season and --block-days are mutually exclusive"));
    }
    if let Some(s) = season {
        let rule = SeasonRule::parse(s)?;
        return Ok(make_blocks(&ds, rule)?);
    }
    if let Some(d) = block_days {
        return Ok(ds.with_uniform_blocks(d)?);
    }
    Ok(ds)
}

/// Resolved series length: `n` blocks of `d` days. A plain `--t` is one block.
#[derive(Debug, Clone, Copy)]
pub struct SeriesLength {
    pub n: usize,
    pub d: usize,
    pub blocked: bool,
}

pub fn series_length(args: &LengthArgs) -> CliResult<SeriesLength> {
    match (args.t, args.blocks, args.days) {
        (Some(t), None, None) if t > 0 => Ok(SeriesLength {
            n: 1,
            d: t,
            blocked: false,
        }),
        (None, Some(n), Some(d)) if n > 0 && d > 0 => Ok(SeriesLength { n, d, blocked: true }),
        (None, None, None) => Err(CliError::usage("give either --t or --blocks with --days")),
        _ => Err(CliError::usage("series lengths must be positive")),
    }
}

/// Dates and blocks for a simulated series. Consecutive days for a single
/// series; block b starts on the anniversary of `start` b years later.
pub fn series_dates(start: &str, len: SeriesLength) -> CliResult<(Vec<NaiveDate>, Option<Vec<Block>>)> {
    let start = NaiveDate::parse_from_str(start, "%Y-%m-%d")
        .map_err(|e| CliError::usage(format!("bad --start '{start}': {e}")))?;
    if !len.blocked {
        let dates = start.iter_days().take(len.d).collect();
        return Ok((dates, None));
    }
    if len.d > 365 {
        return Err(CliError::usage("blocks longer than 365 days would overlap the next year"));
    }
    let mut dates = Vec::with_capacity(len.n * len.d);
    let mut blocks = Vec::with_capacity(len.n);
    for b in 0..len.n {
        let year = start.year() + b as i32;
        let first = start
            .with_year(year)
            .ok_or_else(|| CliError::usage(format!("{start} has no anniversary in {year}")))?;
        blocks.push(Block {
            id: year,
            start: b * len.d,
            len: len.d,
        });
        dates.extend(first.iter_days().take(len.d));
    }
    Ok((dates, Some(blocks)))
}

pub fn default_locations(l: usize) -> Vec<Location> {
    (1..=l)
        .map(|i| Location {
            id: format!("L{i}"),
            lat: 0.0,
            lon: 0.0,
        })
        .collect()
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Observer that prints every `every`-th trace entry to stderr.
pub fn progress(every: usize) -> impl FnMut(&TraceEntry) {
    move |e: &TraceEntry| {
        if every == 0 || e.iteration % every != 0 {
            return;
        }
        let phase = match e.phase {
            Phase::Svb => "svb",
            Phase::Cavi => "cavi",
        };
        let kind = if e.estimate { " (estimate)" } else { "" };
        eprintln!("{phase} {:>6}  elbo {:.6}{kind}", e.iteration, e.elbo);
    }
}
