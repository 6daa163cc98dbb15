//! Canonical feature names and the generator input frames.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::table::{ColumnKind, ColumnSchema, Table};

pub const CARRIER: &str = "Unique Carrier Code";
pub const TAIL: &str = "Tail Number";
pub const ORIGIN_ID: &str = "Origin Airport ID";
pub const ORIGIN_ICAO: &str = "ICAO Origin Airport";
pub const ORIGIN_CITY: &str = "Origin City";
pub const ORIGIN_STATE_CODE: &str = "Origin State Code";
pub const ORIGIN_STATE_NAME: &str = "Origin State Name";
pub const DEST_ID: &str = "Destination Airport ID";
pub const DEST_ICAO: &str = "ICAO Destination Airport";
pub const DEST_CITY: &str = "Destination City";
pub const DEST_STATE_CODE: &str = "Destination State Code";
pub const DEST_STATE_NAME: &str = "Destination State Name";
pub const QUARTER: &str = "Quarter";
pub const DAY_OF_WEEK: &str = "Day of Week";
pub const SCHED_DEP: &str = "Scheduled Departure Time UTC";
pub const ACTUAL_DEP: &str = "Actual Departure Time UTC";
pub const DEP_DELTA: &str = "Departure ΔT (min)";
pub const DEP_LABEL: &str = "Departure Delay Label";
pub const TAXI_OUT: &str = "Taxi Out Time (min)";
pub const WHEELS_OFF: &str = "Wheels Off Time UTC";
pub const WHEELS_ON: &str = "Wheels On Time UTC";
pub const TAXI_IN: &str = "Taxi In Time (min)";
pub const SCHED_ARR: &str = "Scheduled Arrival Time UTC";
pub const ACTUAL_ARR: &str = "Actual Arrival Time UTC";
pub const ARR_DELTA: &str = "Arrival ΔT (min)";
pub const ARR_LABEL: &str = "Arrival Delay Label";
pub const SCHED_ELAPSED: &str = "Scheduled Elapsed Time (min)";
pub const ACTUAL_ELAPSED: &str = "Actual Elapsed Time (min)";
pub const AIR_TIME: &str = "Air Time (min)";
pub const DISTANCE: &str = "Distance (miles)";

/// Departure or arrival ΔT at or above this many minutes counts as delayed.
pub const DELAY_THRESHOLD_MIN: f64 = 15.0;
pub const DELAYED: &str = "1";
pub const ON_TIME: &str = "0";

/// The 30 features in table order.
pub const ALL_FEATURES: [&str; 30] = [
    CARRIER,
    TAIL,
    ORIGIN_ID,
    ORIGIN_ICAO,
    ORIGIN_CITY,
    ORIGIN_STATE_CODE,
    ORIGIN_STATE_NAME,
    DEST_ID,
    DEST_ICAO,
    DEST_CITY,
    DEST_STATE_CODE,
    DEST_STATE_NAME,
    QUARTER,
    DAY_OF_WEEK,
    SCHED_DEP,
    ACTUAL_DEP,
    DEP_DELTA,
    DEP_LABEL,
    TAXI_OUT,
    WHEELS_OFF,
    WHEELS_ON,
    TAXI_IN,
    SCHED_ARR,
    ACTUAL_ARR,
    ARR_DELTA,
    ARR_LABEL,
    SCHED_ELAPSED,
    ACTUAL_ELAPSED,
    AIR_TIME,
    DISTANCE,
];

/// Prediction features (the target is [`ARR_DELTA`]).
pub const PREDICTION_FEATURES: [&str; 14] = [
    CARRIER,
    TAIL,
    ORIGIN_ICAO,
    DEST_ICAO,
    QUARTER,
    DAY_OF_WEEK,
    SCHED_DEP,
    ACTUAL_DEP,
    DEP_DELTA,
    TAXI_OUT,
    WHEELS_OFF,
    SCHED_ARR,
    SCHED_ELAPSED,
    DISTANCE,
];
pub const PREDICTION_TARGET: &str = ARR_DELTA;

/// Schema of the full feature table.
pub fn feature_schema() -> Vec<ColumnSchema> {
    ALL_FEATURES
        .iter()
        .map(|&name| {
            let (kind, nullable, unit) = match name {
                SCHED_DEP | SCHED_ARR => (ColumnKind::Datetime, false, None),
                ACTUAL_DEP | WHEELS_OFF | WHEELS_ON | ACTUAL_ARR => (ColumnKind::Datetime, true, None),
                SCHED_ELAPSED => (ColumnKind::Numeric, false, Some("min")),
                DEP_DELTA | TAXI_OUT | TAXI_IN | ARR_DELTA | ACTUAL_ELAPSED | AIR_TIME => {
                    (ColumnKind::Numeric, true, Some("min"))
                }
                DISTANCE => (ColumnKind::Numeric, false, Some("miles")),
                DEP_LABEL | ARR_LABEL => (ColumnKind::Categorical, true, None),
                _ => (ColumnKind::Categorical, false, None),
            };
            let s = ColumnSchema::new(name, kind, nullable);
            match unit {
                Some(u) => s.with_unit(u),
                None => s,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameVariant {
    UtcTs,
    UtcD,
    #[serde(rename = "utc_d_2")]
    UtcD2,
}

impl FrameVariant {
    pub const ALL: [FrameVariant; 3] = [FrameVariant::UtcTs, FrameVariant::UtcD, FrameVariant::UtcD2];

    pub fn name(self) -> &'static str {
        match self {
            FrameVariant::UtcTs => "utc_ts",
            FrameVariant::UtcD => "utc_d",
            FrameVariant::UtcD2 => "utc_d_2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Generator input columns, in table order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            FrameVariant::UtcTs => &[
                CARRIER, TAIL, ORIGIN_ID, DEST_ID, SCHED_DEP, ACTUAL_DEP, WHEELS_OFF, WHEELS_ON, SCHED_ARR,
                ACTUAL_ARR,
            ],
            FrameVariant::UtcD => &[
                CARRIER,
                TAIL,
                ORIGIN_ID,
                DEST_ID,
                SCHED_DEP,
                DEP_DELTA,
                TAXI_OUT,
                SCHED_ELAPSED,
                ACTUAL_ELAPSED,
                AIR_TIME,
            ],
            FrameVariant::UtcD2 => &[
                CARRIER,
                TAIL,
                ORIGIN_ID,
                DEST_ID,
                SCHED_DEP,
                ACTUAL_DEP,
                DEP_DELTA,
                TAXI_OUT,
                TAXI_IN,
                ARR_DELTA,
                SCHED_ELAPSED,
                ACTUAL_ELAPSED,
                AIR_TIME,
            ],
        }
    }
}

impl std::fmt::Display for FrameVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Projects the full feature table onto a generator frame.
pub fn build_frame(flights: &Table, variant: FrameVariant) -> Result<Table> {
    flights.select_columns(variant.columns())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn frame_sizes() {
        assert_eq!(FrameVariant::UtcTs.columns().len(), 10);
        assert_eq!(FrameVariant::UtcD.columns().len(), 10);
        assert_eq!(FrameVariant::UtcD2.columns().len(), 13);
    }

    #[test]
    fn frames_are_subsets_in_table_order() {
        let pos = |n: &str| ALL_FEATURES.iter().position(|&f| f == n).unwrap();
        for v in FrameVariant::ALL {
            let p: Vec<usize> = v.columns().iter().map(|c| pos(c)).collect();
            assert!(p.windows(2).all(|w| w[0] < w[1]), "{v}");
        }
        for f in PREDICTION_FEATURES {
            pos(f);
        }
    }

    #[test]
    fn names_unique() {
        let s: HashSet<_> = ALL_FEATURES.iter().collect();
        assert_eq!(s.len(), 30);
        assert_eq!(feature_schema().len(), 30);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in FrameVariant::ALL {
            assert_eq!(FrameVariant::parse(v.name()), Some(v));
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
    }
}
