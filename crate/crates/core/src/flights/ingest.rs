//! Raw BTS on-time extracts → UTC-normalised feature table.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, LocalResult, NaiveDate, NaiveDateTime, NaiveTime, TimeZone};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::directory::AirportDirectory;
use super::features::*;
use crate::error::{Error, Result};
use crate::table::{Column, ColumnKind, ColumnSchema, Table};

pub const FLIGHT_DATE: &str = "Flight Date";
pub const CANCELLED: &str = "Cancelled";
pub const DIVERTED: &str = "Diverted";

/// Reported and recomputed durations may differ by this much (HHMM
/// rounding) before a row is dropped.
pub const DURATION_TOLERANCE_MIN: f64 = 1.0;

/// Local clock-time fields.
const LOCAL_TIMES: [&str; 6] = [SCHED_DEP, ACTUAL_DEP, WHEELS_OFF, WHEELS_ON, SCHED_ARR, ACTUAL_ARR];

const RAW_TEXT: [&str; 5] = [FLIGHT_DATE, CARRIER, TAIL, ORIGIN_ID, DEST_ID];
const RAW_NUMERIC: [&str; 16] = [
    SCHED_DEP,
    ACTUAL_DEP,
    DEP_DELTA,
    TAXI_OUT,
    WHEELS_OFF,
    WHEELS_ON,
    TAXI_IN,
    SCHED_ARR,
    ACTUAL_ARR,
    ARR_DELTA,
    CANCELLED,
    DIVERTED,
    SCHED_ELAPSED,
    ACTUAL_ELAPSED,
    AIR_TIME,
    DISTANCE,
];

/// Raw CSV header → canonical feature name.
pub type RawMapping = BTreeMap<String, String>;

/// Column names of the BTS "Reporting Carrier On-Time Performance" download.
pub fn default_mapping() -> RawMapping {
    [
        ("FlightDate", FLIGHT_DATE),
        ("Reporting_Airline", CARRIER),
        ("Tail_Number", TAIL),
        ("OriginAirportID", ORIGIN_ID),
        ("DestAirportID", DEST_ID),
        ("CRSDepTime", SCHED_DEP),
        ("DepTime", ACTUAL_DEP),
        ("DepDelay", DEP_DELTA),
        ("TaxiOut", TAXI_OUT),
        ("WheelsOff", WHEELS_OFF),
        ("WheelsOn", WHEELS_ON),
        ("TaxiIn", TAXI_IN),
        ("CRSArrTime", SCHED_ARR),
        ("ArrTime", ACTUAL_ARR),
        ("ArrDelay", ARR_DELTA),
        ("Cancelled", CANCELLED),
        ("Diverted", DIVERTED),
        ("CRSElapsedTime", SCHED_ELAPSED),
        ("ActualElapsedTime", ACTUAL_ELAPSED),
        ("AirTime", AIR_TIME),
        ("Distance", DISTANCE),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

pub fn read_mapping(path: impl AsRef<Path>) -> Result<RawMapping> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a raw extract, keeping only mapped columns and renaming them to
/// canonical names. Clock times stay as local HHMM numbers.
pub fn read_raw_flights(path: impl AsRef<Path>, mapping: &RawMapping) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_flights_from(file, mapping).map_err(|e| match e {
        Error::Csv { message, .. } => Error::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn read_raw_flights_from<R: std::io::Read>(reader: R, mapping: &RawMapping) -> Result<Table> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<raw flights>".into(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (raw, canon) in mapping {
        if let Some(i) = headers.iter().position(|h| h.trim() == raw) {
            index.insert(canon.as_str(), i);
        }
    }
    for role in RAW_TEXT.iter().chain(RAW_NUMERIC.iter()) {
        if !index.contains_key(role) {
            let raw = mapping.iter().find(|(_, c)| c.as_str() == *role).map(|(r, _)| r.as_str());
            return Err(Error::Ingest(match raw {
                Some(r) => format!("raw extract lacks column `{r}` (feeds `{role}`)"),
                None => format!("mapping has no raw column for `{role}`"),
            }));
        }
    }
    let mut text: Vec<Vec<Option<String>>> = vec![Vec::new(); RAW_TEXT.len()];
    let mut nums: Vec<Vec<Option<f64>>> = vec![Vec::new(); RAW_NUMERIC.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (k, role) in RAW_TEXT.iter().enumerate() {
            let v = rec.get(index[role]).map(str::trim).filter(|s| !s.is_empty());
            text[k].push(v.map(str::to_string));
        }
        for (k, role) in RAW_NUMERIC.iter().enumerate() {
            let cell = rec.get(index[role]).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                nums[k].push(None);
            } else {
                let v = parse_number(cell).ok_or_else(|| Error::Parse {
                    row: r + 1,
                    column: role.to_string(),
                    value: cell.to_string(),
                    expected: "number",
                })?;
                nums[k].push(Some(v));
            }
        }
    }
    let mut cols = Vec::new();
    for (k, role) in RAW_TEXT.iter().enumerate() {
        cols.push(Column::categorical(role, &text[k])?);
    }
    for (k, role) in RAW_NUMERIC.iter().enumerate() {
        cols.push(Column::numeric(role, &nums[k])?);
    }
    Table::new(cols)
}

fn hhmm(v: f64) -> Option<(u32, u32, bool)> {
    let v = v.round() as i64;
    if !(0..=2400).contains(&v) {
        return None;
    }
    if v == 2400 {
        return Some((0, 0, true));
    }
    let (h, m) = ((v / 100) as u32, (v % 100) as u32);
    (h < 24 && m < 60).then_some((h, m, false))
}

/// Local wall-clock `HHMM` on `date + day_offset` in `tz`, as epoch seconds.
/// `2400` is midnight at the end of the day. Ambiguous times take the
/// earlier instant; times inside a spring-forward gap move one hour later.
pub fn local_to_utc(date: NaiveDate, hhmm_value: f64, day_offset: i64, tz: Tz) -> Option<i64> {
    let (h, m, next) = hhmm(hhmm_value)?;
    let day = date + Duration::days(day_offset + next as i64);
    let naive = NaiveDateTime::new(day, NaiveTime::from_hms_opt(h, m, 0)?);
    let dt = match tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => t,
        LocalResult::Ambiguous(a, _) => a,
        LocalResult::None => tz.from_local_datetime(&(naive + Duration::hours(1))).earliest()?,
    };
    Some(dt.timestamp())
}

/// Picks the day offset in {-1, 0, 1, 2} whose instant best matches
/// `reference + expected` minutes, or the earliest instant not before
/// `reference` when no expectation is known.
fn resolve(date: NaiveDate, hhmm_value: f64, tz: Tz, reference: i64, expected_min: Option<f64>) -> Option<i64> {
    let candidates = (-1..=2).filter_map(|d| local_to_utc(date, hhmm_value, d, tz));
    match expected_min {
        Some(e) => candidates.min_by(|a, b| {
            let da = ((a - reference) as f64 / 60.0 - e).abs();
            let db = ((b - reference) as f64 / 60.0 - e).abs();
            da.total_cmp(&db)
        }),
        None => candidates.filter(|&t| t >= reference).min(),
    }
}

/// Converts local HHMM clock fields to UTC datetimes. Each time is anchored
/// to its predecessor in the flight's timeline (scheduled departure →
/// scheduled arrival; departure → wheels off → wheels on → arrival) and the
/// day offset is inferred from the reported duration between them.
pub fn localize_and_convert(raw: &Table, airports: &AirportDirectory) -> Result<Table> {
    let n = raw.n_rows();
    let date_col = raw.column(FLIGHT_DATE)?;
    let origin = raw.column(ORIGIN_ID)?;
    let dest = raw.column(DEST_ID)?;
    let num = |name: &str| -> Result<Vec<Option<f64>>> { Ok(raw.column(name)?.numbers()) };
    let clocks: BTreeMap<&str, Vec<Option<f64>>> = LOCAL_TIMES
        .iter()
        .map(|f| num(f).map(|v| (*f, v)))
        .collect::<Result<_>>()?;
    let dep_delta = num(DEP_DELTA)?;
    let taxi_out = num(TAXI_OUT)?;
    let air = num(AIR_TIME)?;
    let taxi_in = num(TAXI_IN)?;
    let sched_elapsed = num(SCHED_ELAPSED)?;

    let mut out: BTreeMap<&str, Vec<Option<i64>>> = LOCAL_TIMES.iter().map(|f| (*f, vec![None; n])).collect();
    for r in 0..n {
        let row_err = |what: String| Error::Ingest(format!("row {}: {what}", r + 1));
        let date_text = date_col.text(r).ok_or_else(|| row_err("missing flight date".into()))?;
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
            .map_err(|_| row_err(format!("flight date `{date_text}` is not YYYY-MM-DD")))?;
        let (o, d) = match (origin.text(r), dest.text(r)) {
            (Some(o), Some(d)) => (o, d),
            _ => continue,
        };
        let (otz, dtz) = (airports.tz(o)?, airports.tz(d)?);
        let clock = |f: &str| clocks[f][r];
        let bad_clock = |f: &str, v: f64| row_err(format!("`{f}` value {v} is not a valid HHMM time"));

        let sched_dep = match clock(SCHED_DEP) {
            Some(v) => Some(local_to_utc(date, v, 0, otz).ok_or_else(|| bad_clock(SCHED_DEP, v))?),
            None => None,
        };
        out.get_mut(SCHED_DEP).unwrap()[r] = sched_dep;
        let mut place = |f: &'static str, tz: Tz, anchor: Option<i64>, expected: Option<f64>| -> Result<Option<i64>> {
            let (Some(v), Some(anchor)) = (clock(f), anchor) else {
                return Ok(None);
            };
            hhmm(v).ok_or_else(|| bad_clock(f, v))?;
            let t = resolve(date, v, tz, anchor, expected).ok_or_else(|| {
                row_err(format!("`{f}` precedes its anchor for every candidate day offset"))
            })?;
            if expected.is_none() && t < anchor {
                return Err(row_err(format!("negative inferred duration for `{f}`")));
            }
            out.get_mut(f).unwrap()[r] = Some(t);
            Ok(Some(t))
        };
        let sched_arr = place(SCHED_ARR, dtz, sched_dep, sched_elapsed[r])?;
        if let (Some(a), Some(b)) = (sched_dep, sched_arr) {
            if b < a {
                return Err(row_err("scheduled arrival precedes scheduled departure".into()));
            }
        }
        let dep = place(ACTUAL_DEP, otz, sched_dep, dep_delta[r])?;
        let off = place(WHEELS_OFF, otz, dep, taxi_out[r])?;
        let on = place(WHEELS_ON, dtz, off, air[r])?;
        place(ACTUAL_ARR, dtz, on, taxi_in[r])?;
    }

    let mut cols = Vec::new();
    for name in [CARRIER, TAIL, ORIGIN_ID, DEST_ID] {
        cols.push(raw.column(name)?.clone());
    }
    for f in LOCAL_TIMES {
        cols.push(Column::from_times(ColumnSchema::new(f, ColumnKind::Datetime, true), &out[f])?);
    }
    for name in [DEP_DELTA, TAXI_OUT, TAXI_IN, ARR_DELTA, SCHED_ELAPSED, ACTUAL_ELAPSED, AIR_TIME, DISTANCE] {
        cols.push(raw.column(name)?.clone());
    }
    for name in [CANCELLED, DIVERTED] {
        let c = raw.column(name)?;
        let flags: Vec<Option<bool>> = (0..n).map(|r| Some(c.as_f64(r).unwrap_or(0.0) != 0.0)).collect();
        cols.push(Column::from_bools(ColumnSchema::new(name, ColumnKind::Boolean, false), &flags)?);
    }
    Table::with_rows(cols, n)
}

/// Row accounting for [`engineer_features`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub input_rows: usize,
    pub dropped_missing_identity: usize,
    pub dropped_diverted: usize,
    pub dropped_inconsistent: usize,
    /// Missing scheduled times or distance.
    pub dropped_incomplete_schedule: usize,
    pub output_rows: usize,
    pub cancelled_rows: usize,
}

fn minutes(a: i64, b: i64) -> f64 {
    (b - a) as f64 / 60.0
}

fn label(delta: Option<f64>) -> Option<&'static str> {
    delta.map(|d| if d >= DELAY_THRESHOLD_MIN { DELAYED } else { ON_TIME })
}

/// Builds the 30-feature table from UTC-normalised flights: airport
/// lookups, calendar fields from the origin-local scheduled departure, ΔT
/// and duration columns recomputed from the timestamps (after checking
/// them against the reported values), and 15-minute delay labels.
pub fn engineer_features(flights: &Table, airports: &AirportDirectory) -> Result<(Table, IngestReport)> {
    let n = flights.n_rows();
    let mut report = IngestReport {
        input_rows: n,
        ..Default::default()
    };
    let text = |c: &str| flights.column(c);
    let (carrier, tail, origin, dest) = (text(CARRIER)?, text(TAIL)?, text(ORIGIN_ID)?, text(DEST_ID)?);
    let time = |c: &str| -> Result<Vec<Option<i64>>> {
        let col = flights.column(c)?;
        Ok((0..n).map(|r| col.as_time(r)).collect())
    };
    let (sd, ad, wf, wn, sa, aa) = (
        time(SCHED_DEP)?,
        time(ACTUAL_DEP)?,
        time(WHEELS_OFF)?,
        time(WHEELS_ON)?,
        time(SCHED_ARR)?,
        time(ACTUAL_ARR)?,
    );
    let rep = |c: &str| -> Result<Vec<Option<f64>>> { Ok(flights.column(c)?.numbers()) };
    let (r_dep, r_out, r_in, r_arr, r_sel, r_ael, r_air, dist) = (
        rep(DEP_DELTA)?,
        rep(TAXI_OUT)?,
        rep(TAXI_IN)?,
        rep(ARR_DELTA)?,
        rep(SCHED_ELAPSED)?,
        rep(ACTUAL_ELAPSED)?,
        rep(AIR_TIME)?,
        rep(DISTANCE)?,
    );
    let cancelled = flights.column(CANCELLED)?;
    let diverted = flights.column(DIVERTED)?;

    let mut keep = Vec::new();
    let mut derived: Vec<[Option<f64>; 7]> = Vec::new();
    for r in 0..n {
        if carrier.is_missing(r) || tail.is_missing(r) || origin.is_missing(r) || dest.is_missing(r) {
            report.dropped_missing_identity += 1;
            continue;
        }
        if diverted.as_bool(r) == Some(true) {
            report.dropped_diverted += 1;
            continue;
        }
        let (Some(s_dep), Some(s_arr), Some(_)) = (sd[r], sa[r], dist[r]) else {
            report.dropped_incomplete_schedule += 1;
            continue;
        };
        let diff = |a: Option<i64>, b: Option<i64>| a.zip(b).map(|(a, b)| minutes(a, b));
        let d = [
            Some(minutes(s_dep, s_arr)),
            diff(Some(s_dep), ad[r]),
            diff(ad[r], wf[r]),
            diff(wf[r], wn[r]),
            diff(wn[r], aa[r]),
            diff(Some(s_arr), aa[r]),
            diff(ad[r], aa[r]),
        ];
        let reported = [r_sel[r], r_dep[r], r_out[r], r_air[r], r_in[r], r_arr[r], r_ael[r]];
        let consistent = d.iter().zip(&reported).all(|(c, rpt)| match (c, rpt) {
            (Some(c), Some(rpt)) => (c - rpt).abs() <= DURATION_TOLERANCE_MIN,
            _ => true,
        });
        let identity = match (r_ael[r], r_out[r], r_air[r], r_in[r]) {
            (Some(e), Some(o), Some(a), Some(i)) => (e - (o + a + i)).abs() <= DURATION_TOLERANCE_MIN,
            _ => true,
        };
        if !consistent || !identity {
            report.dropped_inconsistent += 1;
            continue;
        }
        if cancelled.as_bool(r) == Some(true) {
            report.cancelled_rows += 1;
        }
        keep.push(r);
        derived.push(d);
    }
    report.output_rows = keep.len();

    let pick_text = |c: &Column| -> Vec<Option<String>> { keep.iter().map(|&r| c.text(r).map(str::to_string)).collect() };
    let mut lookup: [Vec<Option<String>>; 8] = Default::default();
    let mut quarter = Vec::with_capacity(keep.len());
    let mut dow = Vec::with_capacity(keep.len());
    for &r in &keep {
        let o = airports.get(origin.text(r).unwrap())?;
        let d = airports.get(dest.text(r).unwrap())?;
        for (k, v) in [&o.icao, &o.city, &o.state_code, &o.state_name, &d.icao, &d.city, &d.state_code, &d.state_name]
            .into_iter()
            .enumerate()
        {
            lookup[k].push(Some(v.clone()));
        }
        let local = airports
            .tz(&o.id)?
            .timestamp_opt(sd[r].unwrap(), 0)
            .single()
            .ok_or_else(|| Error::Ingest(format!("row {}: scheduled departure out of range", r + 1)))?;
        quarter.push(Some(((local.month() - 1) / 3 + 1).to_string()));
        dow.push(Some(local.weekday().number_from_monday().to_string()));
    }
    let times = |v: &Vec<Option<i64>>| -> Vec<Option<i64>> { keep.iter().map(|&r| v[r]).collect() };
    let der = |k: usize| -> Vec<Option<f64>> { derived.iter().map(|d| d[k]).collect() };
    let dep_delta = der(1);
    let arr_delta = der(5);
    let labels = |v: &[Option<f64>]| -> Vec<Option<&str>> { v.iter().map(|d| label(*d)).collect() };

    let schema = feature_schema();
    let by_name = |name: &str| schema.iter().find(|s| s.name == name).unwrap().clone();
    let mut cols = Vec::with_capacity(30);
    for name in ALL_FEATURES {
        let s = by_name(name);
        let col = match name {
            CARRIER => Column::from_text(s, &pick_text(carrier))?,
            TAIL => Column::from_text(s, &pick_text(tail))?,
            ORIGIN_ID => Column::from_text(s, &pick_text(origin))?,
            DEST_ID => Column::from_text(s, &pick_text(dest))?,
            ORIGIN_ICAO => Column::from_text(s, &lookup[0])?,
            ORIGIN_CITY => Column::from_text(s, &lookup[1])?,
            ORIGIN_STATE_CODE => Column::from_text(s, &lookup[2])?,
            ORIGIN_STATE_NAME => Column::from_text(s, &lookup[3])?,
            DEST_ICAO => Column::from_text(s, &lookup[4])?,
            DEST_CITY => Column::from_text(s, &lookup[5])?,
            DEST_STATE_CODE => Column::from_text(s, &lookup[6])?,
            DEST_STATE_NAME => Column::from_text(s, &lookup[7])?,
            QUARTER => Column::from_text(s, &quarter)?,
            DAY_OF_WEEK => Column::from_text(s, &dow)?,
            SCHED_DEP => Column::from_times(s, &times(&sd))?,
            ACTUAL_DEP => Column::from_times(s, &times(&ad))?,
            WHEELS_OFF => Column::from_times(s, &times(&wf))?,
            WHEELS_ON => Column::from_times(s, &times(&wn))?,
            SCHED_ARR => Column::from_times(s, &times(&sa))?,
            ACTUAL_ARR => Column::from_times(s, &times(&aa))?,
            SCHED_ELAPSED => Column::from_numbers(s, &der(0))?,
            DEP_DELTA => Column::from_numbers(s, &dep_delta)?,
            TAXI_OUT => Column::from_numbers(s, &der(2))?,
            AIR_TIME => Column::from_numbers(s, &der(3))?,
            TAXI_IN => Column::from_numbers(s, &der(4))?,
            ARR_DELTA => Column::from_numbers(s, &arr_delta)?,
            ACTUAL_ELAPSED => Column::from_numbers(s, &der(6))?,
            DEP_LABEL => Column::from_text(s, &labels(&dep_delta))?,
            ARR_LABEL => Column::from_text(s, &labels(&arr_delta))?,
            DISTANCE => Column::from_numbers(s, &keep.iter().map(|&r| dist[r]).collect::<Vec<_>>())?,
            other => unreachable!("unhandled feature {other}"),
        };
        cols.push(col);
    }
    log::info!(
        "ingest: {} rows in, {} out ({} missing identity, {} diverted, {} inconsistent, {} incomplete schedule)",
        report.input_rows,
        report.output_rows,
        report.dropped_missing_identity,
        report.dropped_diverted,
        report.dropped_inconsistent,
        report.dropped_incomplete_schedule
    );
    Ok((Table::with_rows(cols, keep.len())?, report))
}
