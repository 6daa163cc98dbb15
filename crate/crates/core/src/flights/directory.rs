//! Airport lookups and the historical route directory.

use std::collections::BTreeMap;
use std::path::Path;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::features::{DEST_ID, DISTANCE, ORIGIN_ID};
use crate::error::{Error, Result};
use crate::table::Table;

/// Routes whose recorded distances differ by more than this are rejected.
pub const DISTANCE_TOLERANCE_MILES: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Airport {
    pub id: String,
    pub icao: String,
    pub city: String,
    pub state_code: String,
    pub state_name: String,
    pub tz_name: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AirportDirectory {
    airports: BTreeMap<String, (Airport, Tz)>,
}

impl AirportDirectory {
    pub fn new(airports: impl IntoIterator<Item = Airport>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for a in airports {
            let tz: Tz = a.tz_name.parse().map_err(|_| {
                Error::Lookup(format!("airport {}: `{}` is not an IANA time zone", a.id, a.tz_name))
            })?;
            if map.contains_key(&a.id) {
                return Err(Error::Lookup(format!("airport {} listed twice", a.id)));
            }
            map.insert(a.id.clone(), (a, tz));
        }
        Ok(AirportDirectory { airports: map })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let rows = rdr
            .deserialize::<Airport>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_err(path, e))?;
        Self::new(rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for (a, _) in self.airports.values() {
            w.serialize(a).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, id: &str) -> Result<&Airport> {
        self.airports
            .get(id)
            .map(|(a, _)| a)
            .ok_or_else(|| Error::Lookup(format!("airport {id} is not in the airport directory")))
    }

    pub fn tz(&self, id: &str) -> Result<Tz> {
        self.airports
            .get(id)
            .map(|(_, tz)| *tz)
            .ok_or_else(|| Error::Lookup(format!("no time zone for airport {id}: not in the airport directory")))
    }

    pub fn len(&self) -> usize {
        self.airports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.airports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Airport> {
        self.airports.values().map(|(a, _)| a)
    }
}

/// Directed (origin, destination) pairs seen historically, with distances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteDirectory {
    routes: BTreeMap<(String, String), f64>,
}

#[derive(Serialize, Deserialize)]
struct RouteRow {
    origin_id: String,
    dest_id: String,
    distance_miles: f64,
}

impl RouteDirectory {
    pub fn insert(&mut self, origin: &str, dest: &str, distance: f64) -> Result<()> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::Ingest(format!(
                "route {origin}→{dest} has non-positive distance {distance}"
            )));
        }
        match self.routes.get(&(origin.to_string(), dest.to_string())) {
            Some(&d) if (d - distance).abs() > DISTANCE_TOLERANCE_MILES => Err(Error::Ingest(format!(
                "route {origin}→{dest} recorded with conflicting distances {d} and {distance} miles"
            ))),
            Some(_) => Ok(()),
            None => {
                self.routes.insert((origin.to_string(), dest.to_string()), distance);
                Ok(())
            }
        }
    }

    pub fn contains(&self, origin: &str, dest: &str) -> bool {
        self.routes.contains_key(&(origin.to_string(), dest.to_string()))
    }

    pub fn distance(&self, origin: &str, dest: &str) -> Option<f64> {
        self.routes.get(&(origin.to_string(), dest.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.routes.iter().map(|((o, d), &m)| (o.as_str(), d.as_str(), m))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut dir = RouteDirectory::default();
        for row in rdr.deserialize::<RouteRow>() {
            let row = row.map_err(|e| csv_err(path, e))?;
            dir.insert(&row.origin_id, &row.dest_id, row.distance_miles)?;
        }
        Ok(dir)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for (o, d, m) in self.iter() {
            w.serialize(RouteRow {
                origin_id: o.to_string(),
                dest_id: d.to_string(),
                distance_miles: m,
            })
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Collects every observed (origin, destination) pair and its distance.
pub fn build_route_directory(flights: &Table) -> Result<RouteDirectory> {
    let o = flights.column(ORIGIN_ID)?;
    let d = flights.column(DEST_ID)?;
    let dist = flights.column(DISTANCE)?;
    let mut dir = RouteDirectory::default();
    for r in 0..flights.n_rows() {
        match (o.text(r), d.text(r), dist.as_f64(r)) {
            (Some(a), Some(b), Some(m)) => dir.insert(a, b, m)?,
            _ => {
                return Err(Error::Ingest(format!(
                    "row {}: route needs origin, destination and distance",
                    r + 1
                )))
            }
        }
    }
    Ok(dir)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    fn airport(id: &str, tz: &str) -> Airport {
        Airport {
            id: id.into(),
            icao: format!("K{id}"),
            city: "City".into(),
            state_code: "NY".into(),
            state_name: "New York".into(),
            tz_name: tz.into(),
        }
    }

    fn routes(rows: &[(&str, &str, f64)]) -> Table {
        Table::new(vec![
            Column::categorical(ORIGIN_ID, &rows.iter().map(|r| Some(r.0)).collect::<Vec<_>>()).unwrap(),
            Column::categorical(DEST_ID, &rows.iter().map(|r| Some(r.1)).collect::<Vec<_>>()).unwrap(),
            Column::numeric(DISTANCE, &rows.iter().map(|r| Some(r.2)).collect::<Vec<_>>()).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn bad_timezone_rejected() {
        assert!(AirportDirectory::new([airport("1", "Mars/Olympus")]).is_err());
        let d = AirportDirectory::new([airport("1", "America/New_York")]).unwrap();
        assert_eq!(d.tz("1").unwrap(), chrono_tz::America::New_York);
        assert!(d.get("2").is_err());
    }

    #[test]
    fn single_flight_one_route() {
        let dir = build_route_directory(&routes(&[("A", "B", 100.0)])).unwrap();
        assert_eq!(dir.len(), 1);
    }

    #[test]
    fn directed_pairs_counted_separately() {
        let dir = build_route_directory(&routes(&[("A", "B", 100.0), ("B", "A", 100.0), ("A", "B", 100.4)])).unwrap();
        assert_eq!(dir.len(), 2);
        assert!(dir.contains("B", "A"));
        assert!(!dir.contains("A", "C"));
    }

    #[test]
    fn conflicting_distance_is_an_error() {
        assert!(build_route_directory(&routes(&[("A", "B", 100.0), ("A", "B", 102.0)])).is_err());
        assert!(build_route_directory(&routes(&[("A", "B", 0.0)])).is_err());
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let routes_dir = build_route_directory(&routes(&[("A", "B", 100.5), ("C", "A", 7.0)])).unwrap();
        let p = dir.path().join("routes.csv");
        routes_dir.write_csv(&p).unwrap();
        assert_eq!(RouteDirectory::read_csv(&p).unwrap(), routes_dir);

        let airports = AirportDirectory::new([airport("1", "America/New_York"), airport("2", "America/Denver")]).unwrap();
        let p = dir.path().join("airports.csv");
        airports.write_csv(&p).unwrap();
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("id,icao,city,state_code,state_name,tz_name\n"));
        assert_eq!(AirportDirectory::read_csv(&p).unwrap(), airports);
    }
}
