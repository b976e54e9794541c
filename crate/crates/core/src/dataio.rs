//! Dataset ingestion, seasonal block structuring, model persistence and the
//! CSV outputs shared by the command-line tools.
//!
//! File formats:
//!
//! * `data.csv` — `date,location_id,precip_mm`, one row per (date, location).
//! * `locations.csv` — `location_id,lat,lon`.
//! * wide data CSV — `date,<location_id>,<location_id>,...`.
//! * decoded states — `date,block_id,state` with 1-based states.
//! * model file — versioned JSON, see `docs/model-schema.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use ndarray::{Array, Array2, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ModelDims};
use crate::vbem::FitTrace;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

/// A contiguous run of `len` days starting at row `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: i32,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// T×L precipitation matrix (mm/day) with its date and location metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipDataset {
    pub values: Array2<f64>,
    pub dates: Vec<NaiveDate>,
    pub locations: Vec<Location>,
    pub blocks: Option<Vec<Block>>,
}

impl PrecipDataset {
    pub fn new(
        values: Array2<f64>,
        dates: Vec<NaiveDate>,
        locations: Vec<Location>,
        blocks: Option<Vec<Block>>,
    ) -> Result<Self> {
        let ds = PrecipDataset {
            values,
            dates,
            locations,
            blocks,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    pub fn l(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dates.len() != self.values.nrows() || self.locations.len() != self.values.ncols() {
            return Err(Error::shape(format!(
                "dataset is {}×{} but has {} dates and {} locations",
                self.values.nrows(),
                self.values.ncols(),
                self.dates.len(),
                self.locations.len()
            )));
        }
        if let Some(((t, l), v)) = self
            .values
            .indexed_iter()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Data(format!(
                "invalid precipitation {v} on {} at location {}",
                self.dates[t], self.locations[l].id
            )));
        }
        match &self.blocks {
            None => {
                if self.dates.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Data("dates must be strictly increasing".into()));
                }
            }
            Some(blocks) => {
                let chains: Vec<Range<usize>> = blocks.iter().map(Block::range).collect();
                crate::forward_backward::check_chains(&chains, self.t())?;
                if blocks.iter().any(|b| b.len != blocks[0].len) {
                    return Err(Error::Data("all blocks must have the same length".into()));
                }
                for b in blocks {
                    if self.dates[b.range()].windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Data(format!(
                            "dates within block {} are not strictly increasing",
                            b.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Independent chains: one per block, or the whole series.
    pub fn chains(&self) -> Vec<Range<usize>> {
        match &self.blocks {
            Some(b) => b.iter().map(Block::range).collect(),
            None => vec![0..self.t()],
        }
    }

    /// Block id for each row (the calendar year of the first day when the
    /// dataset has no block structure).
    pub fn block_ids(&self) -> Vec<i32> {
        match &self.blocks {
            Some(blocks) => {
                let mut ids = vec![0; self.t()];
                for b in blocks {
                    ids[b.range()].fill(b.id);
                }
                ids
            }
            None => vec![self.dates.first().map_or(0, |d| d.year()); self.t()],
        }
    }

    /// Splits into `n` consecutive blocks of `d` days each.
    pub fn with_uniform_blocks(mut self, d: usize) -> Result<Self> {
        let chains = crate::forward_backward::block_chains(self.t(), d)?;
        self.blocks = Some(
            chains
                .into_iter()
                .enumerate()
                .map(|(i, r)| Block {
                    id: i as i32 + 1,
                    start: r.start,
                    len: r.len(),
                })
                .collect(),
        );
        self.validate()?;
        Ok(self)
    }
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date '{s}': {e}"))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// 1-based line of a record as counted by the CSV reader.
fn record_line(rec: &csv::StringRecord, index: usize) -> usize {
    rec.position().map_or(index + 2, |p| p.line() as usize)
}

fn reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    // Flexible so that short rows reach the per-line checks below.
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(BufReader::new(file)))
}

fn check_header(rdr: &mut csv::Reader<BufReader<File>>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header {}, found {}", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

pub fn load_locations(path: &Path) -> Result<Vec<Location>> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, path, &["location_id", "lat", "lon"])?;
    let mut out: Vec<Location> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k)
                .parse::<f64>()
                .map_err(|e| parse_err(path, line, format!("bad coordinate '{}': {e}", field(k))))
        };
        let id = field(0).to_string();
        if out.iter().any(|l| l.id == id) {
            return Err(parse_err(path, line, format!("duplicate location id '{id}'")));
        }
        out.push(Location {
            id,
            lat: num(1)?,
            lon: num(2)?,
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no locations"));
    }
    Ok(out)
}

/// Default companion path: `locations.csv` in the data file's directory.
pub fn default_locations_path(data_path: &Path) -> PathBuf {
    data_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("locations.csv")
}

fn clamp(v: f64, threshold: f64) -> f64 {
    if v < threshold {
        0.0
    } else {
        v
    }
}

/// Reads a long-format CSV and pivots it into a T×L matrix. Rows are the
/// distinct dates in ascending order; columns follow `locations.csv`.
/// Values below `dryness_threshold` become exactly zero.
pub fn load_long_csv(
    path: &Path,
    locations_path: Option<&Path>,
    dryness_threshold: f64,
) -> Result<PrecipDataset> {
    if !(dryness_threshold >= 0.0) {
        return Err(Error::domain("dryness threshold must be nonnegative"));
    }
    let loc_path = locations_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_locations_path(path));
    let locations = load_locations(&loc_path)?;
    let index: HashMap<&str, usize> = locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.as_str(), i))
        .collect();

    let mut rdr = reader(path)?;
    check_header(&mut rdr, path, &["date", "location_id", "precip_mm"])?;
    let mut cells: BTreeMap<NaiveDate, Vec<Option<(f64, usize)>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let date = parse_date(&rec[0]).map_err(|m| parse_err(path, line, m))?;
        let loc = *index
            .get(&rec[1])
            .ok_or_else(|| parse_err(path, line, format!("unknown location id '{}'", &rec[1])))?;
        let v: f64 = rec[2]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad precipitation '{}': {e}", &rec[2])))?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(parse_err(path, line, format!("precipitation must be nonnegative, found {v}")));
        }
        let row = cells
            .entry(date)
            .or_insert_with(|| vec![None; locations.len()]);
        if let Some((_, first)) = row[loc] {
            return Err(parse_err(
                path,
                line,
                format!("duplicate entry for {date} / {} (first on line {first})", &rec[1]),
            ));
        }
        row[loc] = Some((clamp(v, dryness_threshold), line));
    }
    if cells.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let t = cells.len();
    let mut values = Array2::zeros((t, locations.len()));
    let mut dates = Vec::with_capacity(t);
    for (r, (date, row)) in cells.into_iter().enumerate() {
        for (loc, cell) in row.into_iter().enumerate() {
            match cell {
                Some((v, _)) => values[[r, loc]] = v,
                None => {
                    return Err(Error::Data(format!(
                        "{}: missing value for date {date}, location {}",
                        path.display(),
                        locations[loc].id
                    )))
                }
            }
        }
        dates.push(date);
    }
    PrecipDataset::new(values, dates, locations, None)
}

/// Reads `date,<id>,<id>,...`. Locations come from `locations_path` when
/// given, otherwise they take their ids from the header with zero coordinates.
pub fn load_wide_csv(
    path: &Path,
    locations_path: Option<&Path>,
    dryness_threshold: f64,
) -> Result<PrecipDataset> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("date") || header.len() < 2 {
        return Err(parse_err(path, 1, "wide CSV header must be date,<location ids...>"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let locations = match locations_path {
        Some(p) => {
            let locs = load_locations(p)?;
            let by_id: HashMap<&str, &Location> = locs.iter().map(|l| (l.id.as_str(), l)).collect();
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|l| (*l).clone())
                        .ok_or_else(|| parse_err(path, 1, format!("unknown location id '{id}'")))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => ids
            .iter()
            .map(|id| Location {
                id: id.clone(),
                lat: 0.0,
                lon: 0.0,
            })
            .collect(),
    };
    let mut rows: Vec<(NaiveDate, Vec<f64>, usize)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != ids.len() + 1 {
            return Err(parse_err(path, line, "row length differs from header (missing cells)"));
        }
        let date = parse_date(&rec[0]).map_err(|m| parse_err(path, line, m))?;
        let mut vals = Vec::with_capacity(ids.len());
        for f in rec.iter().skip(1) {
            let v: f64 = f
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad precipitation '{f}': {e}")))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(parse_err(path, line, format!("precipitation must be nonnegative, found {v}")));
            }
            vals.push(clamp(v, dryness_threshold));
        }
        rows.push((date, vals, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(path, w[1].2, format!("duplicate date {}", w[1].0)));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let mut values = Array2::zeros((rows.len(), ids.len()));
    for (r, (_, vals, _)) in rows.iter().enumerate() {
        for (c, &v) in vals.iter().enumerate() {
            values[[r, c]] = v;
        }
    }
    let dates = rows.into_iter().map(|r| r.0).collect();
    PrecipDataset::new(values, dates, locations, None)
}

/// Seasonal window, inclusive on both ends, as (month, day) pairs. A window
/// whose end precedes its start wraps over the new year and is assigned to
/// the year in which it starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonRule {
    pub start: (u32, u32),
    pub end: (u32, u32),
}

impl SeasonRule {
    pub const JULY_TO_SEPTEMBER: SeasonRule = SeasonRule {
        start: (7, 1),
        end: (9, 30),
    };

    /// Parses `MM-DD:MM-DD`.
    pub fn parse(s: &str) -> Result<SeasonRule> {
        let bad = || Error::Config(format!("season must look like 07-01:09-30, got '{s}'"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let md = |p: &str| -> Result<(u32, u32)> {
            let (m, d) = p.split_once('-').ok_or_else(bad)?;
            let m: u32 = m.parse().map_err(|_| bad())?;
            let d: u32 = d.parse().map_err(|_| bad())?;
            if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
                return Err(bad());
            }
            Ok((m, d))
        };
        Ok(SeasonRule {
            start: md(a)?,
            end: md(b)?,
        })
    }

    fn wraps(&self) -> bool {
        self.end < self.start
    }

    /// Season year the date belongs to, or `None` when out of season.
    pub fn season_of(&self, date: NaiveDate) -> Option<i32> {
        let md = (date.month(), date.day());
        if self.wraps() {
            if md >= self.start {
                Some(date.year())
            } else if md <= self.end {
                Some(date.year() - 1)
            } else {
                None
            }
        } else if md >= self.start && md <= self.end {
            Some(date.year())
        } else {
            None
        }
    }
}

/// Keeps in-season dates and groups them by season year into equal-length
/// blocks. The block length is inferred from the data.
pub fn make_blocks(dataset: &PrecipDataset, season: SeasonRule) -> Result<PrecipDataset> {
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (row, &d) in dataset.dates.iter().enumerate() {
        if let Some(y) = season.season_of(d) {
            by_year.entry(y).or_default().push(row);
        }
    }
    if by_year.is_empty() {
        return Err(Error::Data("no dates fall inside the season window".into()));
    }
    let lengths: BTreeMap<i32, usize> = by_year.iter().map(|(y, r)| (*y, r.len())).collect();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &n in lengths.values() {
        *counts.entry(n).or_default() += 1;
    }
    if counts.len() > 1 {
        let (&modal, _) = counts.iter().max_by_key(|(len, c)| (**c, **len)).expect("non-empty");
        let offenders: Vec<String> = lengths
            .iter()
            .filter(|(_, &n)| n != modal)
            .map(|(y, n)| format!("{y} ({n} days)"))
            .collect();
        return Err(Error::Data(format!(
            "seasonal blocks have unequal lengths; expected {modal} days, offending years: {}",
            offenders.join(", ")
        )));
    }
    let d = *counts.keys().next().expect("non-empty");
    let rows: Vec<usize> = by_year.values().flatten().copied().collect();
    let values = dataset.values.select(ndarray::Axis(0), &rows);
    let dates = rows.iter().map(|&r| dataset.dates[r]).collect();
    let blocks = by_year
        .keys()
        .enumerate()
        .map(|(i, &y)| Block {
            id: y,
            start: i * d,
            len: d,
        })
        .collect();
    PrecipDataset::new(values, dates, dataset.locations.clone(), Some(blocks))
}

fn fmt_value(v: f64) -> String {
    // `{}` prints the shortest representation that round-trips.
    format!("{v}")
}

pub fn write_long_csv(dataset: &PrecipDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "date,location_id,precip_mm")?;
    for (t, date) in dataset.dates.iter().enumerate() {
        for (l, loc) in dataset.locations.iter().enumerate() {
            writeln!(w, "{date},{},{}", loc.id, fmt_value(dataset.values[[t, l]]))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_locations_csv(locations: &[Location], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "location_id,lat,lon")?;
    for l in locations {
        writeln!(w, "{},{},{}", l.id, fmt_value(l.lat), fmt_value(l.lon))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date,block_id,state`; states are written 1-based.
pub fn write_states_csv(path: &Path, dates: &[NaiveDate], block_ids: &[i32], states: &[usize]) -> Result<()> {
    if dates.len() != states.len() || block_ids.len() != states.len() {
        return Err(Error::shape("dates, block ids and states differ in length"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "date,block_id,state")?;
    for ((d, b), s) in dates.iter().zip(block_ids).zip(states) {
        writeln!(w, "{d},{b},{}", s + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Decoded or simulated states as read back from a states CSV; `states` is 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    pub dates: Vec<NaiveDate>,
    pub block_ids: Vec<i32>,
    pub states: Vec<usize>,
}

pub fn read_states_csv(path: &Path) -> Result<StateSeries> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, path, &["date", "block_id", "state"])?;
    let mut out = StateSeries {
        dates: Vec::new(),
        block_ids: Vec::new(),
        states: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != 3 {
            return Err(parse_err(path, line, "expected 3 fields"));
        }
        out.dates.push(parse_date(&rec[0]).map_err(|m| parse_err(path, line, m))?);
        out.block_ids.push(
            rec[1]
                .parse()
                .map_err(|e| parse_err(path, line, format!("bad block id: {e}")))?,
        );
        let s: usize = rec[2]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad state: {e}")))?;
        if s == 0 {
            return Err(parse_err(path, line, "states are 1-based"));
        }
        out.states.push(s - 1);
    }
    Ok(out)
}

/// Writes `iteration,phase,elbo,delta,estimate,step_size`.
pub fn write_trace_csv(trace: &FitTrace, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,phase,elbo,delta,estimate,step_size")?;
    let mut prev: Option<f64> = None;
    for e in &trace.entries {
        let delta = prev.map(|p| fmt_value(e.elbo - p)).unwrap_or_default();
        let phase = match e.phase {
            crate::vbem::Phase::Svb => "svb",
            crate::vbem::Phase::Cavi => "cavi",
        };
        let step = e.step_size.map(fmt_value).unwrap_or_default();
        writeln!(
            w,
            "{},{phase},{},{delta},{},{step}",
            e.iteration,
            fmt_value(e.elbo),
            e.estimate
        )?;
        prev = Some(e.elbo);
    }
    w.flush()?;
    Ok(())
}

/// Row-major array with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayRecord {
    pub fn from_array<D: Dimension>(a: &Array<f64, D>) -> Self {
        ArrayRecord {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array<D: Dimension>(&self, name: &str) -> Result<Array<f64, D>> {
        let dynamic = Array::from_shape_vec(IxDyn(&self.shape), self.data.clone())
            .map_err(|e| Error::ModelFile(format!("{name}: {e}")))?;
        dynamic
            .into_dimensionality::<D>()
            .map_err(|e| Error::ModelFile(format!("{name}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparametersRecord {
    pub xi: ArrayRecord,
    pub alpha: ArrayRecord,
    pub zeta: ArrayRecord,
    pub gamma_shape: ArrayRecord,
    pub delta_rate: ArrayRecord,
}

impl From<&Hyperparameters> for HyperparametersRecord {
    fn from(h: &Hyperparameters) -> Self {
        HyperparametersRecord {
            xi: ArrayRecord::from_array(&h.xi),
            alpha: ArrayRecord::from_array(&h.alpha),
            zeta: ArrayRecord::from_array(&h.zeta),
            gamma_shape: ArrayRecord::from_array(&h.gamma_shape),
            delta_rate: ArrayRecord::from_array(&h.delta_rate),
        }
    }
}

impl HyperparametersRecord {
    pub fn to_hyperparameters(&self, dims: &ModelDims) -> Result<Hyperparameters> {
        let h = Hyperparameters {
            xi: self.xi.to_array("xi")?,
            alpha: self.alpha.to_array("alpha")?,
            zeta: self.zeta.to_array("zeta")?,
            gamma_shape: self.gamma_shape.to_array("gamma_shape")?,
            delta_rate: self.delta_rate.to_array("delta_rate")?,
        };
        h.validate().map_err(|e| Error::ModelFile(e.to_string()))?;
        let hd = h.dims();
        if (hd.k, hd.l, hd.m) != (dims.k, dims.l, dims.m) {
            return Err(Error::ModelFile(format!(
                "arrays are sized for K={}, L={}, M={} but dims say K={}, L={}, M={}",
                hd.k, hd.l, hd.m, dims.k, dims.l, dims.m
            )));
        }
        Ok(h)
    }
}

/// Everything persisted for a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub dims: ModelDims,
    pub prior: Hyperparameters,
    pub posterior: Hyperparameters,
    /// `state_order[i]` is the label the fit originally gave to saved state `i`.
    pub state_order: Vec<usize>,
    pub trace: FitTrace,
    pub seed: u64,
    pub locations: Option<Vec<Location>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    model_version: u32,
    dims: ModelDims,
    prior: HyperparametersRecord,
    posterior: HyperparametersRecord,
    state_order: Vec<usize>,
    elbo_trace: Vec<crate::vbem::TraceEntry>,
    converged: bool,
    iterations_run: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    locations: Option<Vec<Location>>,
}

pub fn model_to_json(model: &ModelFile) -> Result<String> {
    let doc = ModelDocument {
        model_version: MODEL_VERSION,
        dims: model.dims,
        prior: (&model.prior).into(),
        posterior: (&model.posterior).into(),
        state_order: model.state_order.clone(),
        elbo_trace: model.trace.entries.clone(),
        converged: model.trace.converged,
        iterations_run: model.trace.iterations_run,
        seed: model.seed,
        locations: model.locations.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn model_from_json(text: &str) -> Result<ModelFile> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(format!("malformed model file: {e}")))?;
    if doc.model_version != MODEL_VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported model_version {} (expected {MODEL_VERSION})",
            doc.model_version
        )));
    }
    doc.dims
        .validate()
        .map_err(|e| Error::ModelFile(e.to_string()))?;
    let prior = doc.prior.to_hyperparameters(&doc.dims)?;
    let posterior = doc.posterior.to_hyperparameters(&doc.dims)?;
    crate::model::check_permutation(&doc.state_order, doc.dims.k)
        .map_err(|e| Error::ModelFile(format!("state_order: {e}")))?;
    if let Some(locs) = &doc.locations {
        if locs.len() != doc.dims.l {
            return Err(Error::ModelFile(format!(
                "{} locations listed but L = {}",
                locs.len(),
                doc.dims.l
            )));
        }
    }
    Ok(ModelFile {
        dims: doc.dims,
        prior,
        posterior,
        state_order: doc.state_order,
        trace: FitTrace {
            entries: doc.elbo_trace,
            converged: doc.converged,
            iterations_run: doc.iterations_run,
        },
        seed: doc.seed,
        locations: doc.locations,
    })
}

/// Writes the model atomically: the JSON goes to a temporary sibling first.
pub fn save_model(model: &ModelFile, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}
