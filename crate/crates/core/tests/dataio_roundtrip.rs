use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spg_core::dataio::{
    load_long_csv, load_model, make_blocks, model_to_json, read_states_csv, save_model, write_locations_csv,
    write_long_csv, write_states_csv, Location, ModelFile, PrecipDataset, SeasonRule,
};
use spg_core::model::{Hyperparameters, ModelDims};
use spg_core::vbem::{FitTrace, Phase, TraceEntry};
use spg_core::Error;

fn wild(rng: &mut ChaCha8Rng) -> f64 {
    // Positive values across many magnitudes with full mantissas.
    rng.random::<f64>().max(f64::MIN_POSITIVE) * 10f64.powi(rng.random_range(-8..9))
}

fn random_model(rng: &mut ChaCha8Rng) -> ModelFile {
    let (k, l, m) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..4));
    let mut hyper = || Hyperparameters {
        xi: Array1::from_shape_fn(k, |_| wild(rng)),
        alpha: Array2::from_shape_fn((k, k), |_| wild(rng)),
        zeta: Array3::from_shape_fn((k, l, m + 1), |_| wild(rng)),
        gamma_shape: Array3::from_shape_fn((k, l, m), |_| wild(rng)),
        delta_rate: Array3::from_shape_fn((k, l, m), |_| wild(rng)),
    };
    let prior = hyper();
    let posterior = hyper();
    let mut state_order: Vec<usize> = (0..k).collect();
    state_order.rotate_left(rng.random_range(0..k));
    let entries = (0..rng.random_range(0..20))
        .map(|i| TraceEntry {
            iteration: i,
            phase: if i % 2 == 0 { Phase::Svb } else { Phase::Cavi },
            elbo: -wild(rng) * 1e3,
            estimate: i % 2 == 0,
            step_size: (i % 2 == 0).then(|| rng.random_range(0.01..1.0)),
        })
        .collect();
    let locations = rng.random_bool(0.5).then(|| {
        (0..l)
            .map(|i| Location {
                id: format!("g{i}"),
                lat: rng.random_range(-90.0..90.0),
                lon: rng.random_range(-180.0..180.0),
            })
            .collect()
    });
    let mut dims = ModelDims::new(k, l, m).unwrap();
    if rng.random_bool(0.5) {
        dims = dims.with_series(92 * 20, 20, 92).unwrap();
    }
    ModelFile {
        dims,
        prior,
        posterior,
        state_order,
        trace: FitTrace {
            entries,
            converged: rng.random_bool(0.5),
            iterations_run: rng.random_range(0..1000),
        },
        seed: rng.random(),
        locations,
    }
}

#[test]
fn models_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for i in 0..50 {
        let model = random_model(&mut rng);
        let path = dir.path().join(format!("m{i}.json"));
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }
}

#[test]
fn model_files_follow_schema() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/model-schema.json");
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..10 {
        let doc: serde_json::Value = serde_json::from_str(&model_to_json(&random_model(&mut rng)).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
    let mut doc: serde_json::Value = serde_json::from_str(&model_to_json(&random_model(&mut rng)).unwrap()).unwrap();
    doc["model_version"] = 2.into();
    assert!(!validator.is_valid(&doc));
}

#[test]
fn damaged_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let model = random_model(&mut rng);
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let truncated = dir.path().join("truncated.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_model(&truncated), Err(Error::ModelFile(_))));
    let bumped = dir.path().join("v2.json");
    fs::write(&bumped, text.replacen("\"model_version\": 1", "\"model_version\": 2", 1)).unwrap();
    assert!(matches!(load_model(&bumped), Err(Error::ModelFile(m)) if m.contains("model_version")));
    let reshaped = dir.path().join("reshaped.json");
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["dims"]["k"] = (model.dims.k + 1).into();
    fs::write(&reshaped, doc.to_string()).unwrap();
    assert!(matches!(load_model(&reshaped), Err(Error::ModelFile(_))));
    assert!(!dir.path().join("model.json.tmp").exists());
}

fn daily_dataset(start: NaiveDate, days: usize, l: usize, rng: &mut ChaCha8Rng) -> PrecipDataset {
    let dates = (0..days).map(|i| start + chrono::Days::new(i as u64)).collect();
    let values = Array2::from_shape_fn((days, l), |_| if rng.random_bool(0.4) { 0.0 } else { wild(rng) });
    let locations = (0..l)
        .map(|i| Location {
            id: format!("cell-{i}"),
            lat: rng.random_range(36.0..43.0),
            lon: rng.random_range(-80.0..-74.0),
        })
        .collect();
    PrecipDataset::new(values, dates, locations, None).unwrap()
}

#[test]
fn long_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let ds = daily_dataset(NaiveDate::from_ymd_opt(1999, 12, 20).unwrap(), 40, 5, &mut rng);
    let data = dir.path().join("data.csv");
    write_long_csv(&ds, &data).unwrap();
    write_locations_csv(&ds.locations, &dir.path().join("locations.csv")).unwrap();
    let back = load_long_csv(&data, None, 0.0).unwrap();
    assert_eq!(back, ds);
    let data2 = dir.path().join("again.csv");
    write_long_csv(&back, &data2).unwrap();
    assert_eq!(fs::read_to_string(&data).unwrap(), fs::read_to_string(&data2).unwrap());

    let clamped = load_long_csv(&data, None, 0.5).unwrap();
    write_long_csv(&clamped, &data2).unwrap();
    assert_eq!(load_long_csv(&data2, Some(&dir.path().join("locations.csv")), 0.5).unwrap(), clamped);
    assert!(clamped.values.iter().all(|&v| v == 0.0 || v >= 0.5));
}

#[test]
fn ingest_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("locations.csv"), "location_id,lat,lon\nA,1,2\nB,3,4\n").unwrap();
    let cases = [
        ("2001-07-01,A,1\n2001-07-01,C,2\n", 3, "unknown location"),
        ("2001-07-01,A,1\n2001-07-01,A,2\n", 3, "duplicate"),
        ("2001-07-01,A,-1\n", 2, "nonnegative"),
        ("2001-07-01,A\n", 2, "fields"),
        ("2001-13-01,A,1\n", 2, "date"),
        ("2001-07-01,A,1\n2001-07-01,B,x\n", 3, "bad precipitation"),
    ];
    for (body, want_line, needle) in cases {
        let p = dir.path().join("bad.csv");
        fs::write(&p, format!("date,location_id,precip_mm\n{body}")).unwrap();
        match load_long_csv(&p, None, 0.0) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, want_line, "{msg}");
                assert!(msg.contains(needle), "{msg}");
            }
            other => panic!("expected parse error for {body:?}, got {other:?}"),
        }
    }
    let p = dir.path().join("gap.csv");
    fs::write(&p, "date,location_id,precip_mm\n2001-07-01,A,1\n2001-07-01,B,1\n2001-07-02,A,0\n").unwrap();
    match load_long_csv(&p, None, 0.0) {
        Err(Error::Data(m)) => assert!(m.contains("2001-07-02") && m.contains('B'), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn season_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let start = NaiveDate::from_ymd_opt(1998, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2017, 12, 31).unwrap();
    let days = (end - start).num_days() as usize + 1;
    let ds = daily_dataset(start, days, 2, &mut rng);
    let blocked = make_blocks(&ds, SeasonRule::JULY_TO_SEPTEMBER).unwrap();
    let blocks = blocked.blocks.as_ref().unwrap();
    assert_eq!(blocks.len(), 20);
    assert!(blocks.iter().all(|b| b.len == 92));
    assert_eq!(blocks[0].id, 1998);
    assert_eq!(blocked.dates[92], NaiveDate::from_ymd_opt(1999, 7, 1).unwrap());

    let one = daily_dataset(NaiveDate::from_ymd_opt(2005, 6, 1).unwrap(), 150, 1, &mut rng);
    assert_eq!(make_blocks(&one, SeasonRule::JULY_TO_SEPTEMBER).unwrap().blocks.unwrap().len(), 1);

    let keep: Vec<usize> = (0..days).filter(|&i| ds.dates[i] != NaiveDate::from_ymd_opt(2003, 8, 15).unwrap()).collect();
    let gappy = PrecipDataset::new(
        ds.values.select(ndarray::Axis(0), &keep),
        keep.iter().map(|&i| ds.dates[i]).collect(),
        ds.locations.clone(),
        None,
    )
    .unwrap();
    match make_blocks(&gappy, SeasonRule::JULY_TO_SEPTEMBER) {
        Err(Error::Data(m)) => assert!(m.contains("2003 (91 days)"), "{m}"),
        other => panic!("{other:?}"),
    }

    // Winters wrap the new year; the partial ones at either end are reported.
    let winter = SeasonRule::parse("12-01:02-28").unwrap();
    match make_blocks(&ds, winter) {
        Err(Error::Data(m)) => assert!(m.contains("1997 (59 days)") && m.contains("2017 (31 days)"), "{m}"),
        other => panic!("{other:?}"),
    }
    let trimmed: Vec<usize> = (0..days).filter(|&i| ds.dates[i] >= NaiveDate::from_ymd_opt(1998, 3, 1).unwrap() && ds.dates[i] < NaiveDate::from_ymd_opt(2017, 12, 1).unwrap()).collect();
    let inner = PrecipDataset::new(
        ds.values.select(ndarray::Axis(0), &trimmed),
        trimmed.iter().map(|&i| ds.dates[i]).collect(),
        ds.locations.clone(),
        None,
    )
    .unwrap();
    let wb = make_blocks(&inner, winter).unwrap().blocks.unwrap();
    assert!(wb.iter().all(|b| b.len == 90));
    assert_eq!(wb.len(), 19);
    assert_eq!(wb[0].id, 1998);
}

#[test]
fn states_csv_is_one_based() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("states.csv");
    let dates: Vec<NaiveDate> = (0..4).map(|i| NaiveDate::from_ymd_opt(2001, 7, 1 + i).unwrap()).collect();
    write_states_csv(&p, &dates, &[2001; 4], &[0, 2, 1, 0]).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("date,block_id,state\n2001-07-01,2001,1\n2001-07-02,2001,3\n"));
    let back = read_states_csv(&p).unwrap();
    assert_eq!(back.states, vec![0, 2, 1, 0]);
    assert_eq!(back.dates, dates);
}
