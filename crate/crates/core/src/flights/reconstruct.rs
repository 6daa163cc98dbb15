//! Rebuilding the full feature table from a generated frame, then route
//! rejection and physical-consistency cleaning.

use chrono::{Datelike, TimeZone};
use serde::{Deserialize, Serialize};

use super::directory::{AirportDirectory, RouteDirectory};
use super::features::*;
use crate::error::{Error, Result};
use crate::table::{Column, ColumnKind, ColumnSchema, Table};

pub const REJECTION_REASON: &str = "rejection_reason";

fn times(t: &Table, name: &str) -> Result<Vec<Option<i64>>> {
    let c = t.column(name)?;
    Ok((0..t.n_rows()).map(|r| c.as_time(r)).collect())
}

fn nums(t: &Table, name: &str) -> Result<Vec<Option<f64>>> {
    Ok(t.column(name)?.numbers())
}

fn plus(t: &[Option<i64>], m: &[Option<f64>]) -> Vec<Option<i64>> {
    t.iter()
        .zip(m)
        .map(|(t, m)| Some(t.as_ref()? + (m.as_ref()? * 60.0).round() as i64))
        .collect()
}

fn minus(t: &[Option<i64>], m: &[Option<f64>]) -> Vec<Option<i64>> {
    let neg: Vec<Option<f64>> = m.iter().map(|v| v.map(|x| -x)).collect();
    plus(t, &neg)
}

fn between(a: &[Option<i64>], b: &[Option<i64>]) -> Vec<Option<f64>> {
    a.iter()
        .zip(b)
        .map(|(a, b)| Some((b.as_ref()? - a.as_ref()?) as f64 / 60.0))
        .collect()
}

/// Rebuilds the 30-feature table from a generated frame. Routes missing
/// from `routes` keep a masked distance; [`reject_invalid`] removes them.
pub fn reconstruct(frame: &Table, variant: FrameVariant, airports: &AirportDirectory, routes: &RouteDirectory) -> Result<Table> {
    let expected = variant.columns();
    if frame.names() != expected {
        return Err(Error::Schema(format!(
            "frame columns {:?} do not match the {variant} column set {:?}",
            frame.names(),
            expected
        )));
    }
    let n = frame.n_rows();
    let sched_dep = times(frame, SCHED_DEP)?;
    let (actual_dep, wheels_off, wheels_on, sched_arr, actual_arr);
    let (dep_delta, taxi_out, taxi_in, arr_delta, sched_elapsed, actual_elapsed, air_time);
    match variant {
        FrameVariant::UtcTs => {
            actual_dep = times(frame, ACTUAL_DEP)?;
            wheels_off = times(frame, WHEELS_OFF)?;
            wheels_on = times(frame, WHEELS_ON)?;
            sched_arr = times(frame, SCHED_ARR)?;
            actual_arr = times(frame, ACTUAL_ARR)?;
            dep_delta = between(&sched_dep, &actual_dep);
            taxi_out = between(&actual_dep, &wheels_off);
            air_time = between(&wheels_off, &wheels_on);
            taxi_in = between(&wheels_on, &actual_arr);
            arr_delta = between(&sched_arr, &actual_arr);
            sched_elapsed = between(&sched_dep, &sched_arr);
            actual_elapsed = between(&actual_dep, &actual_arr);
        }
        FrameVariant::UtcD2 => {
            actual_dep = times(frame, ACTUAL_DEP)?;
            dep_delta = nums(frame, DEP_DELTA)?;
            taxi_out = nums(frame, TAXI_OUT)?;
            taxi_in = nums(frame, TAXI_IN)?;
            arr_delta = nums(frame, ARR_DELTA)?;
            sched_elapsed = nums(frame, SCHED_ELAPSED)?;
            actual_elapsed = nums(frame, ACTUAL_ELAPSED)?;
            air_time = nums(frame, AIR_TIME)?;
            sched_arr = plus(&sched_dep, &sched_elapsed);
            actual_arr = plus(&sched_arr, &arr_delta);
            wheels_off = plus(&actual_dep, &taxi_out);
            wheels_on = minus(&actual_arr, &taxi_in);
        }
        FrameVariant::UtcD => {
            dep_delta = nums(frame, DEP_DELTA)?;
            taxi_out = nums(frame, TAXI_OUT)?;
            sched_elapsed = nums(frame, SCHED_ELAPSED)?;
            actual_elapsed = nums(frame, ACTUAL_ELAPSED)?;
            air_time = nums(frame, AIR_TIME)?;
            actual_dep = plus(&sched_dep, &dep_delta);
            sched_arr = plus(&sched_dep, &sched_elapsed);
            actual_arr = plus(&actual_dep, &actual_elapsed);
            arr_delta = between(&sched_arr, &actual_arr);
            taxi_in = (0..n)
                .map(|r| Some(actual_elapsed[r]? - taxi_out[r]? - air_time[r]?))
                .collect();
            wheels_off = plus(&actual_dep, &taxi_out);
            wheels_on = minus(&actual_arr, &taxi_in);
        }
    }

    let origin = frame.column(ORIGIN_ID)?;
    let dest = frame.column(DEST_ID)?;
    let mut lookup: [Vec<Option<String>>; 8] = Default::default();
    let mut quarter = Vec::with_capacity(n);
    let mut dow = Vec::with_capacity(n);
    let mut distance = Vec::with_capacity(n);
    for r in 0..n {
        let (Some(o_id), Some(d_id)) = (origin.text(r), dest.text(r)) else {
            return Err(Error::Schema(format!("row {}: origin and destination are required", r + 1)));
        };
        let o = airports.get(o_id)?;
        let d = airports.get(d_id)?;
        for (k, v) in [&o.icao, &o.city, &o.state_code, &o.state_name, &d.icao, &d.city, &d.state_code, &d.state_name]
            .into_iter()
            .enumerate()
        {
            lookup[k].push(Some(v.clone()));
        }
        let sd = sched_dep[r].ok_or_else(|| Error::Schema(format!("row {}: scheduled departure missing", r + 1)))?;
        let local = airports
            .tz(o_id)?
            .timestamp_opt(sd, 0)
            .single()
            .ok_or_else(|| Error::Schema(format!("row {}: scheduled departure out of range", r + 1)))?;
        quarter.push(Some(((local.month() - 1) / 3 + 1).to_string()));
        dow.push(Some(local.weekday().number_from_monday().to_string()));
        distance.push(routes.distance(o_id, d_id));
    }
    let label = |v: &[Option<f64>]| -> Vec<Option<&str>> {
        v.iter()
            .map(|d| d.map(|d| if d >= DELAY_THRESHOLD_MIN { DELAYED } else { ON_TIME }))
            .collect()
    };

    let schema = feature_schema();
    let mut cols = Vec::with_capacity(30);
    for s in schema {
        let declared = s.nullable;
        // Generated values can be missing where real ones never are.
        let s = ColumnSchema { nullable: true, ..s };
        let name = s.name.clone();
        let col = match name.as_str() {
            CARRIER | TAIL | ORIGIN_ID | DEST_ID => Column::from_text(s, &frame.column(&name)?.labels())?,
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
            SCHED_DEP => Column::from_times(s, &sched_dep)?,
            ACTUAL_DEP => Column::from_times(s, &actual_dep)?,
            WHEELS_OFF => Column::from_times(s, &wheels_off)?,
            WHEELS_ON => Column::from_times(s, &wheels_on)?,
            SCHED_ARR => Column::from_times(s, &sched_arr)?,
            ACTUAL_ARR => Column::from_times(s, &actual_arr)?,
            DEP_DELTA => Column::from_numbers(s, &dep_delta)?,
            DEP_LABEL => Column::from_text(s, &label(&dep_delta))?,
            TAXI_OUT => Column::from_numbers(s, &taxi_out)?,
            TAXI_IN => Column::from_numbers(s, &taxi_in)?,
            ARR_DELTA => Column::from_numbers(s, &arr_delta)?,
            ARR_LABEL => Column::from_text(s, &label(&arr_delta))?,
            SCHED_ELAPSED => Column::from_numbers(s, &sched_elapsed)?,
            ACTUAL_ELAPSED => Column::from_numbers(s, &actual_elapsed)?,
            AIR_TIME => Column::from_numbers(s, &air_time)?,
            DISTANCE => Column::from_numbers(s, &distance)?,
            other => unreachable!("unhandled feature {other}"),
        };
        let relaxed = declared || col.missing_count() > 0;
        cols.push(col.with_nullable(relaxed)?);
    }
    Table::with_rows(cols, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub non_negative: bool,
    pub elapsed_consistency: bool,
    pub elapsed_tolerance_min: f64,
    pub speed: bool,
    pub speed_min_mph: f64,
    pub speed_max_mph: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            non_negative: true,
            elapsed_consistency: true,
            elapsed_tolerance_min: 5.0,
            speed: true,
            speed_min_mph: 100.0,
            speed_max_mph: 700.0,
        }
    }
}

impl FilterConfig {
    /// Route rejection only; every consistency filter off.
    pub fn route_only() -> Self {
        FilterConfig {
            non_negative: false,
            elapsed_consistency: false,
            speed: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_rows: usize,
    pub route_rejected: usize,
    pub negative_duration: usize,
    pub elapsed_inconsistent: usize,
    pub implausible_speed: usize,
    pub output_rows: usize,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.route_rejected + self.negative_duration + self.elapsed_inconsistent + self.implausible_speed
    }

    pub fn balances(&self) -> bool {
        self.input_rows == self.output_rows + self.dropped()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    Route,
    NegativeDuration,
    ElapsedInconsistent,
    ImplausibleSpeed,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::Route => "route_not_in_history",
            Rejection::NegativeDuration => "negative_duration",
            Rejection::ElapsedInconsistent => "elapsed_inconsistent",
            Rejection::ImplausibleSpeed => "implausible_speed",
        }
    }
}

struct RowView {
    origin: Option<String>,
    dest: Option<String>,
    taxi_out: Option<f64>,
    taxi_in: Option<f64>,
    air: Option<f64>,
    elapsed: Option<f64>,
    sched_elapsed: Option<f64>,
    distance: Option<f64>,
}

/// First rule a row breaks, checked in fixed order. Cells that are missing
/// cannot violate a rule.
pub fn classify(
    origin: Option<&str>,
    dest: Option<&str>,
    durations: [Option<f64>; 5],
    distance: Option<f64>,
    routes: &RouteDirectory,
    cfg: &FilterConfig,
) -> Option<Rejection> {
    let v = RowView {
        origin: origin.map(str::to_string),
        dest: dest.map(str::to_string),
        taxi_out: durations[0],
        taxi_in: durations[1],
        air: durations[2],
        elapsed: durations[3],
        sched_elapsed: durations[4],
        distance,
    };
    match (&v.origin, &v.dest) {
        (Some(o), Some(d)) if routes.contains(o, d) => {}
        _ => return Some(Rejection::Route),
    }
    if cfg.non_negative
        && [v.taxi_out, v.taxi_in, v.air, v.elapsed, v.sched_elapsed]
            .iter()
            .flatten()
            .any(|&x| x < 0.0)
    {
        return Some(Rejection::NegativeDuration);
    }
    if cfg.elapsed_consistency {
        if let (Some(e), Some(o), Some(a), Some(i)) = (v.elapsed, v.taxi_out, v.air, v.taxi_in) {
            if (e - (o + a + i)).abs() > cfg.elapsed_tolerance_min {
                return Some(Rejection::ElapsedInconsistent);
            }
        }
    }
    if cfg.speed {
        if let (Some(m), Some(a)) = (v.distance, v.air) {
            let mph = if a > 0.0 { m / (a / 60.0) } else { f64::INFINITY };
            if !(cfg.speed_min_mph..=cfg.speed_max_mph).contains(&mph) {
                return Some(Rejection::ImplausibleSpeed);
            }
        }
    }
    None
}

/// Drops rows on routes absent from `routes`, then rows failing the active
/// filters. Returns the kept rows, the rejected rows with a
/// `rejection_reason` column, and the accounting.
pub fn reject_invalid(table: &Table, routes: &RouteDirectory, cfg: &FilterConfig) -> Result<(Table, Table, CleaningReport)> {
    let n = table.n_rows();
    let origin = table.column(ORIGIN_ID)?;
    let dest = table.column(DEST_ID)?;
    let get = |c: &str| -> Result<Vec<Option<f64>>> { nums(table, c) };
    let (taxi_out, taxi_in, air, elapsed, sched_elapsed, distance) = (
        get(TAXI_OUT)?,
        get(TAXI_IN)?,
        get(AIR_TIME)?,
        get(ACTUAL_ELAPSED)?,
        get(SCHED_ELAPSED)?,
        get(DISTANCE)?,
    );
    let mut report = CleaningReport {
        input_rows: n,
        ..Default::default()
    };
    let mut keep = Vec::new();
    let mut rejected = Vec::new();
    let mut reasons = Vec::new();
    for r in 0..n {
        let verdict = classify(
            origin.text(r),
            dest.text(r),
            [taxi_out[r], taxi_in[r], air[r], elapsed[r], sched_elapsed[r]],
            distance[r],
            routes,
            cfg,
        );
        match verdict {
            None => keep.push(r),
            Some(why) => {
                match why {
                    Rejection::Route => report.route_rejected += 1,
                    Rejection::NegativeDuration => report.negative_duration += 1,
                    Rejection::ElapsedInconsistent => report.elapsed_inconsistent += 1,
                    Rejection::ImplausibleSpeed => report.implausible_speed += 1,
                }
                rejected.push(r);
                reasons.push(Some(why.as_str()));
            }
        }
    }
    report.output_rows = keep.len();
    debug_assert!(report.balances());
    let reason_col = Column::from_text(ColumnSchema::new(REJECTION_REASON, ColumnKind::Categorical, false), &reasons)?;
    let rejected_table = table.take_rows(&rejected).with_column(reason_col)?;
    Ok((table.take_rows(&keep), rejected_table, report))
}
