//! Flight-record ingest: raw on-time extracts, airport and route
//! directories, the 30-feature table and generator frames.

mod directory;
mod features;
mod ingest;
mod reconstruct;

pub use directory::{build_route_directory, Airport, AirportDirectory, RouteDirectory, DISTANCE_TOLERANCE_MILES};
pub use features::*;
pub use ingest::{
    default_mapping, engineer_features, local_to_utc, localize_and_convert, read_mapping, read_raw_flights,
    read_raw_flights_from, IngestReport, RawMapping, CANCELLED, DIVERTED, DURATION_TOLERANCE_MIN, FLIGHT_DATE,
};
pub use reconstruct::{
    classify, reconstruct, reject_invalid, CleaningReport, FilterConfig, Rejection, REJECTION_REASON,
};
