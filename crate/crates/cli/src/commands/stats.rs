use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, Axis};
use serde::Serialize;
use spg_core::dataio::{load_long_csv, read_states_csv, PrecipDataset};
use spg_core::stats::{
    location_stats, monthly_state_distribution, rmse, LocationStats, MonthlyDistribution, StateMask,
};

use crate::args::StatsArgs;
use crate::common::{ensure_dir, load_dataset, write_json};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Serialize)]
struct Comparison {
    dry_proportion_rmse: f64,
    /// Over locations that have wet days in both datasets.
    mean_intensity_rmse: Option<f64>,
    mean_intensity_locations: usize,
}

#[derive(Serialize)]
struct PerState {
    state: usize,
    #[serde(flatten)]
    stats: Option<LocationStats>,
}

#[derive(Serialize)]
struct StatsReport {
    location_ids: Vec<String>,
    a: LocationStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<LocationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_state: Option<Vec<PerState>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monthly: Option<MonthlyDistribution>,
}

fn read_dates(path: &Path) -> CliResult<HashSet<NaiveDate>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split(',').next().map(str::trim) == Some("date") => {}
        _ => return Err(CliError::data(format!("{}:1: expected a date column", path.display()))),
    }
    let mut out = HashSet::new();
    for (i, line) in lines {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        let d = NaiveDate::parse_from_str(field, "%Y-%m-%d")
            .map_err(|e| CliError::data(format!("{}:{}: bad date '{field}': {e}", path.display(), i + 1)))?;
        out.insert(d);
    }
    Ok(out)
}

fn select_rows(values: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    values.select(Axis(0), rows)
}

/// Rows of `ds` whose date is in `keep`.
fn filter_rows(ds: &PrecipDataset, keep: Option<&HashSet<NaiveDate>>) -> Vec<usize> {
    (0..ds.t())
        .filter(|&t| keep.is_none_or(|k| k.contains(&ds.dates[t])))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run(args: &StatsArgs) -> CliResult<i32> {
    let mut manifest = RunManifest::start("stats");
    manifest.input(&args.data.data);
    let a = load_dataset(
        &args.data,
        args.data.threshold.unwrap_or(0.0),
        args.data.season.as_deref(),
        args.data.block_days,
    )?;
    let keep = match &args.dates {
        Some(p) => {
            manifest.input(p);
            Some(read_dates(p)?)
        }
        None => None,
    };
    let rows_a = filter_rows(&a, keep.as_ref());
    if rows_a.is_empty() {
        return Err(CliError::data("no days of dataset A remain after the date filter"));
    }
    let values_a = select_rows(&a.values, &rows_a);
    let stats_a = location_stats(values_a.view(), None)?;
    let ids: Vec<String> = a.locations.iter().map(|l| l.id.clone()).collect();

    let mut stats_b = None;
    let mut comparison = None;
    if let Some(path_b) = &args.data_b {
        manifest.input(path_b);
        let b = load_long_csv(path_b, args.locations_b.as_deref(), args.data.threshold.unwrap_or(0.0))?;
        let index_b: HashMap<&str, usize> =
            b.locations.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
        let same_set = b.l() == a.l() && ids.iter().all(|id| index_b.contains_key(id.as_str()));
        if !same_set {
            return Err(CliError::data(format!(
                "incompatible location sets: A has {} locations, B has {} and they do not match by id",
                a.l(),
                b.l()
            )));
        }
        let cols: Vec<usize> = ids.iter().map(|id| index_b[id.as_str()]).collect();
        let rows_b = filter_rows(&b, keep.as_ref());
        if rows_b.is_empty() {
            return Err(CliError::data("no days of dataset B remain after the date filter"));
        }
        let values_b = select_rows(&b.values, &rows_b).select(Axis(1), &cols);
        let sb = location_stats(values_b.view(), None)?;
        let (wa, wb): (Vec<f64>, Vec<f64>) = stats_a
            .mean_intensity
            .iter()
            .zip(&sb.mean_intensity)
            .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
            .unzip();
        comparison = Some(Comparison {
            dry_proportion_rmse: rmse(&stats_a.dry_proportion, &sb.dry_proportion)?,
            mean_intensity_rmse: if wa.is_empty() { None } else { Some(rmse(&wa, &wb)?) },
            mean_intensity_locations: wa.len(),
        });
        stats_b = Some(sb);
    }

    let mut per_state = None;
    let mut monthly = None;
    if let Some(states_path) = &args.states {
        manifest.input(states_path);
        let series = read_states_csv(states_path)?;
        let row_of: HashMap<NaiveDate, usize> = a.dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();
        let mut rows = Vec::new();
        let mut states = Vec::new();
        let mut dates = Vec::new();
        for (d, &s) in series.dates.iter().zip(&series.states) {
            let t = *row_of
                .get(d)
                .ok_or_else(|| CliError::data(format!("states file has {d}, which is not in dataset A")))?;
            if keep.as_ref().is_none_or(|k| k.contains(d)) {
                rows.push(t);
                states.push(s);
                dates.push(*d);
            }
        }
        if rows.is_empty() {
            return Err(CliError::data("no state-labelled days remain after the date filter"));
        }
        let max_label = states.iter().copied().max().unwrap_or(0) + 1;
        let k = args.k.unwrap_or(max_label);
        if k < max_label {
            return Err(CliError::data(format!("states file has label {max_label} but --k is {k}")));
        }
        let values = select_rows(&a.values, &rows);
        let mut table = Vec::with_capacity(k);
        for j in 0..k {
            let mask = StateMask {
                states: &states,
                state: j,
            };
            table.push(PerState {
                state: j + 1,
                stats: location_stats(values.view(), Some(mask)).ok(),
            });
        }
        per_state = Some(table);
        monthly = Some(monthly_state_distribution(&states, &dates, k)?);
    }

    ensure_dir(&args.out)?;
    let mut outputs = Vec::new();

    let mut loc_csv = String::from("location_id,lat,lon,dry_proportion,mean_intensity\n");
    for (l, loc) in a.locations.iter().enumerate() {
        let _ = writeln!(
            loc_csv,
            "{},{},{},{},{}",
            loc.id,
            loc.lat,
            loc.lon,
            stats_a.dry_proportion[l],
            fmt_opt(stats_a.mean_intensity[l])
        );
    }
    outputs.push(("location_stats.csv", loc_csv));

    if let Some(sb) = &stats_b {
        let mut csv = String::from("location_id,lat,lon,dry_proportion_a,dry_proportion_b,mean_intensity_a,mean_intensity_b\n");
        for (l, loc) in a.locations.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                loc.id,
                loc.lat,
                loc.lon,
                stats_a.dry_proportion[l],
                sb.dry_proportion[l],
                fmt_opt(stats_a.mean_intensity[l]),
                fmt_opt(sb.mean_intensity[l])
            );
        }
        outputs.push(("scatter.csv", csv));
    }

    if let Some(table) = &per_state {
        let mut csv = String::from("state,location_id,days,dry_proportion,mean_intensity\n");
        for row in table {
            for (l, loc) in a.locations.iter().enumerate() {
                match &row.stats {
                    Some(s) => {
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{}",
                            row.state,
                            loc.id,
                            s.days,
                            s.dry_proportion[l],
                            fmt_opt(s.mean_intensity[l])
                        );
                    }
                    None => {
                        let _ = writeln!(csv, "{},{},0,,", row.state, loc.id);
                    }
                }
            }
        }
        outputs.push(("per_state.csv", csv));
    }

    if let Some(m) = &monthly {
        let k = m.percent.first().map_or(0, Vec::len);
        let mut csv = String::from("month");
        for j in 1..=k {
            let _ = write!(csv, ",state_{j}");
        }
        csv.push('\n');
        for (month, row) in m.months.iter().zip(&m.percent) {
            let _ = write!(csv, "{month}");
            for v in row {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        outputs.push(("monthly.csv", csv));
    }

    for (name, text) in outputs {
        let p = args.out.join(name);
        std::fs::write(&p, text)?;
        manifest.output(&p);
    }
    let report = StatsReport {
        location_ids: ids,
        a: stats_a,
        b: stats_b,
        comparison,
        per_state,
        monthly,
    };
    let json_path = args.out.join("stats.json");
    write_json(&json_path, &report)?;
    manifest.output(&json_path);
    manifest.finish(&args.out.join("manifest.json"), 0)?;
    Ok(0)
}
