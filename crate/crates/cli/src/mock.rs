//! Deterministic BTS-like mock extract: New York airports and their
//! routes, January 2023, with delays, cancellations, diversions and the
//! occasional missing tail number.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Duration, NaiveDate, TimeZone, Timelike};
use chrono_tz::Tz;
use flightsynth::flights::{Airport, AirportDirectory};
use flightsynth::numkit::{derive_seed, rng_stream, RngStream};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp, Normal};

pub const BTS_FILE: &str = "bts.csv";
pub const AIRPORTS_FILE: &str = "airports.csv";

struct MockAirport {
    id: &'static str,
    code: &'static str,
    icao: &'static str,
    city: &'static str,
    state_code: &'static str,
    state_name: &'static str,
    tz: &'static str,
    lat: f64,
    lon: f64,
}

#[rustfmt::skip]
const AIRPORTS: [MockAirport; 24] = [
    MockAirport { id: "12478", code: "JFK", icao: "KJFK", city: "New York, NY", state_code: "NY", state_name: "New York", tz: "America/New_York", lat: 40.6398, lon: -73.7789 },
    MockAirport { id: "12953", code: "LGA", icao: "KLGA", city: "New York, NY", state_code: "NY", state_name: "New York", tz: "America/New_York", lat: 40.7772, lon: -73.8726 },
    MockAirport { id: "10792", code: "BUF", icao: "KBUF", city: "Buffalo, NY", state_code: "NY", state_name: "New York", tz: "America/New_York", lat: 42.9405, lon: -78.7322 },
    MockAirport { id: "14576", code: "ROC", icao: "KROC", city: "Rochester, NY", state_code: "NY", state_name: "New York", tz: "America/New_York", lat: 43.1189, lon: -77.6724 },
    MockAirport { id: "15096", code: "SYR", icao: "KSYR", city: "Syracuse, NY", state_code: "NY", state_name: "New York", tz: "America/New_York", lat: 43.1112, lon: -76.1063 },
    MockAirport { id: "10257", code: "ALB", icao: "KALB", city: "Albany, NY", state_code: "NY", state_name: "New York", tz: "America/New_York", lat: 42.7483, lon: -73.8017 },
    MockAirport { id: "13930", code: "ORD", icao: "KORD", city: "Chicago, IL", state_code: "IL", state_name: "Illinois", tz: "America/Chicago", lat: 41.9786, lon: -87.9048 },
    MockAirport { id: "10397", code: "ATL", icao: "KATL", city: "Atlanta, GA", state_code: "GA", state_name: "Georgia", tz: "America/New_York", lat: 33.6367, lon: -84.4281 },
    MockAirport { id: "11292", code: "DEN", icao: "KDEN", city: "Denver, CO", state_code: "CO", state_name: "Colorado", tz: "America/Denver", lat: 39.8617, lon: -104.6731 },
    MockAirport { id: "12892", code: "LAX", icao: "KLAX", city: "Los Angeles, CA", state_code: "CA", state_name: "California", tz: "America/Los_Angeles", lat: 33.9425, lon: -118.4081 },
    MockAirport { id: "14771", code: "SFO", icao: "KSFO", city: "San Francisco, CA", state_code: "CA", state_name: "California", tz: "America/Los_Angeles", lat: 37.6190, lon: -122.3749 },
    MockAirport { id: "13303", code: "MIA", icao: "KMIA", city: "Miami, FL", state_code: "FL", state_name: "Florida", tz: "America/New_York", lat: 25.7932, lon: -80.2906 },
    MockAirport { id: "13204", code: "MCO", icao: "KMCO", city: "Orlando, FL", state_code: "FL", state_name: "Florida", tz: "America/New_York", lat: 28.4294, lon: -81.3090 },
    MockAirport { id: "11697", code: "FLL", icao: "KFLL", city: "Fort Lauderdale, FL", state_code: "FL", state_name: "Florida", tz: "America/New_York", lat: 26.0726, lon: -80.1527 },
    MockAirport { id: "10721", code: "BOS", icao: "KBOS", city: "Boston, MA", state_code: "MA", state_name: "Massachusetts", tz: "America/New_York", lat: 42.3643, lon: -71.0052 },
    MockAirport { id: "11298", code: "DFW", icao: "KDFW", city: "Dallas/Fort Worth, TX", state_code: "TX", state_name: "Texas", tz: "America/Chicago", lat: 32.8968, lon: -97.0380 },
    MockAirport { id: "11057", code: "CLT", icao: "KCLT", city: "Charlotte, NC", state_code: "NC", state_name: "North Carolina", tz: "America/New_York", lat: 35.2140, lon: -80.9431 },
    MockAirport { id: "14107", code: "PHX", icao: "KPHX", city: "Phoenix, AZ", state_code: "AZ", state_name: "Arizona", tz: "America/Phoenix", lat: 33.4343, lon: -112.0116 },
    MockAirport { id: "14747", code: "SEA", icao: "KSEA", city: "Seattle, WA", state_code: "WA", state_name: "Washington", tz: "America/Los_Angeles", lat: 47.4490, lon: -122.3093 },
    MockAirport { id: "12889", code: "LAS", icao: "KLAS", city: "Las Vegas, NV", state_code: "NV", state_name: "Nevada", tz: "America/Los_Angeles", lat: 36.0801, lon: -115.1522 },
    MockAirport { id: "12173", code: "HNL", icao: "PHNL", city: "Honolulu, HI", state_code: "HI", state_name: "Hawaii", tz: "Pacific/Honolulu", lat: 21.3187, lon: -157.9225 },
    MockAirport { id: "14843", code: "SJU", icao: "TJSJ", city: "San Juan, PR", state_code: "PR", state_name: "Puerto Rico", tz: "America/Puerto_Rico", lat: 18.4394, lon: -66.0018 },
    MockAirport { id: "15304", code: "TPA", icao: "KTPA", city: "Tampa, FL", state_code: "FL", state_name: "Florida", tz: "America/New_York", lat: 27.9755, lon: -82.5332 },
    MockAirport { id: "11278", code: "DCA", icao: "KDCA", city: "Washington, DC", state_code: "VA", state_name: "Virginia", tz: "America/New_York", lat: 38.8521, lon: -77.0377 },
];

/// Airport pairs flown in both directions, with a relative frequency.
const PAIRS: [(&str, &str, u32); 22] = [
    ("JFK", "LAX", 3),
    ("JFK", "SFO", 3),
    ("JFK", "MIA", 2),
    ("JFK", "MCO", 3),
    ("JFK", "ATL", 2),
    ("JFK", "SJU", 2),
    ("JFK", "HNL", 1),
    ("JFK", "LAS", 2),
    ("JFK", "SEA", 1),
    ("JFK", "PHX", 1),
    ("LGA", "ORD", 3),
    ("LGA", "ATL", 3),
    ("LGA", "DCA", 2),
    ("LGA", "BOS", 2),
    ("LGA", "DFW", 2),
    ("LGA", "CLT", 2),
    ("LGA", "DEN", 1),
    ("BUF", "MCO", 1),
    ("BUF", "ORD", 1),
    ("ROC", "ATL", 1),
    ("SYR", "FLL", 1),
    ("ALB", "CLT", 1),
];

const CARRIERS: [&str; 6] = ["AA", "DL", "UA", "B6", "WN", "NK"];
const TAILS_PER_CARRIER: usize = 28;

const CANCEL_RATE: f64 = 0.02;
const DIVERT_RATE: f64 = 0.003;
const MISSING_TAIL_RATE: f64 = 0.005;

const HEADER: [&str; 28] = [
    "Year",
    "Month",
    "DayofMonth",
    "FlightDate",
    "Reporting_Airline",
    "Tail_Number",
    "Flight_Number_Reporting_Airline",
    "OriginAirportID",
    "Origin",
    "DestAirportID",
    "Dest",
    "CRSDepTime",
    "DepTime",
    "DepDelay",
    "TaxiOut",
    "WheelsOff",
    "WheelsOn",
    "TaxiIn",
    "CRSArrTime",
    "ArrTime",
    "ArrDelay",
    "Cancelled",
    "Diverted",
    "CRSElapsedTime",
    "ActualElapsedTime",
    "AirTime",
    "Distance",
    "DistanceGroup",
];

struct Route {
    origin: usize,
    dest: usize,
    weight: u32,
    distance: f64,
    /// Typical ground speed; also sets the scheduled block time.
    speed_mph: f64,
    /// (carrier index, scheduled local departure minute, flight number).
    slots: Vec<(usize, u32, u32)>,
}

fn airport_index(code: &str) -> usize {
    AIRPORTS.iter().position(|a| a.code == code).expect("mock airport code")
}

fn haversine_miles(a: &MockAirport, b: &MockAirport) -> f64 {
    let (la1, lo1, la2, lo2) = (a.lat.to_radians(), a.lon.to_radians(), b.lat.to_radians(), b.lon.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * 3958.8 * h.sqrt().asin()
}

fn build_routes(rng: &mut RngStream) -> Vec<Route> {
    let mut routes = Vec::new();
    let mut flight_no = 100;
    for &(a, b, weight) in &PAIRS {
        let (ia, ib) = (airport_index(a), airport_index(b));
        let distance = haversine_miles(&AIRPORTS[ia], &AIRPORTS[ib]).round();
        let speed_mph = rng.gen_range(350.0..500.0);
        for (origin, dest) in [(ia, ib), (ib, ia)] {
            let mut carriers: Vec<usize> = (0..CARRIERS.len()).collect();
            carriers.shuffle(rng);
            let n_carriers = rng.gen_range(1..=3);
            let mut slots = Vec::new();
            for &c in &carriers[..n_carriers] {
                for _ in 0..rng.gen_range(1..=3) {
                    // 06:00 to 21:55 local, on five-minute marks.
                    let minute = 360 + 5 * rng.gen_range(0..192);
                    flight_no += rng.gen_range(1..40);
                    slots.push((c, minute, flight_no));
                }
            }
            routes.push(Route {
                origin,
                dest,
                weight,
                distance,
                speed_mph,
                slots,
            });
        }
    }
    routes
}

pub fn airport_directory() -> AirportDirectory {
    AirportDirectory::new(AIRPORTS.iter().map(|a| Airport {
        id: a.id.to_string(),
        icao: a.icao.to_string(),
        city: a.city.to_string(),
        state_code: a.state_code.to_string(),
        state_name: a.state_name.to_string(),
        tz_name: a.tz.to_string(),
    }))
    .expect("mock airport table is valid")
}

/// Number of directed routes in the mock network.
pub fn route_count() -> usize {
    2 * PAIRS.len()
}

fn hhmm(t: DateTime<Tz>) -> String {
    format!("{:02}{:02}", t.hour(), t.minute())
}

/// BTS writes actual times at midnight as 2400.
fn actual_hhmm(t: DateTime<Tz>) -> String {
    match hhmm(t).as_str() {
        "0000" => "2400".to_string(),
        s => s.to_string(),
    }
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

/// Generates `rows` flight records. The same seed always gives the same
/// bytes.
pub fn generate_bts(rows: usize, seed: u64) -> Result<Vec<u8>> {
    let mut net_rng = rng_stream(derive_seed(seed, "network"), 0);
    let routes = build_routes(&mut net_rng);
    let route_pick = WeightedIndex::new(routes.iter().map(|r| r.weight * r.slots.len() as u32))?;
    let tzs: Vec<Tz> = AIRPORTS
        .iter()
        .map(|a| a.tz.parse().map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<Result<_>>()?;
    // Carrier-level punctuality, so labels carry learnable signal.
    let carrier_delay: Vec<f64> = (0..CARRIERS.len()).map(|_| net_rng.gen_range(0.12..0.28)).collect();
    let tails: Vec<Vec<String>> = CARRIERS
        .iter()
        .enumerate()
        .map(|(c, code)| {
            (0..TAILS_PER_CARRIER)
                .map(|k| format!("N{}{}{}", 100 + 37 * c + 3 * k, (b'A' + (k % 26) as u8) as char, &code[..1]))
                .collect()
        })
        .collect();

    let mut rng = rng_stream(derive_seed(seed, "flights"), 0);
    let late = Exp::<f64>::new(1.0 / 40.0)?;
    let early = Normal::<f64>::new(-3.0, 4.0)?;
    let taxi_out = Exp::<f64>::new(1.0 / 9.0)?;
    let taxi_in = Exp::<f64>::new(1.0 / 5.0)?;
    let wind = Normal::<f64>::new(0.0, 0.04)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for _ in 0..rows {
        let route = &routes[route_pick.sample(&mut rng)];
        let &(carrier, slot_minute, flight_no) = route.slots.choose(&mut rng).expect("route has slots");
        let day = rng.gen_range(1..=31);
        let date = NaiveDate::from_ymd_opt(2023, 1, day).expect("January date");
        let (otz, dtz) = (tzs[route.origin], tzs[route.dest]);
        let local = date.and_hms_opt(slot_minute / 60, slot_minute % 60, 0).expect("slot time");
        let sched_dep = otz.from_local_datetime(&local).single().context("ambiguous mock departure")?;
        let block_air = route.distance / route.speed_mph * 60.0;
        let sched_elapsed = (5.0 * ((block_air + 35.0) / 5.0).round()).max(30.0);
        let sched_arr = (sched_dep + Duration::minutes(sched_elapsed as i64)).with_timezone(&dtz);

        let tail = if rng.gen_bool(MISSING_TAIL_RATE) {
            String::new()
        } else {
            tails[carrier].choose(&mut rng).expect("fleet").clone()
        };
        let a = &AIRPORTS[route.origin];
        let b = &AIRPORTS[route.dest];
        let mut rec: Vec<String> = vec![
            "2023".into(),
            "1".into(),
            day.to_string(),
            date.format("%Y-%m-%d").to_string(),
            CARRIERS[carrier].into(),
            tail,
            flight_no.to_string(),
            a.id.into(),
            a.code.into(),
            b.id.into(),
            b.code.into(),
            hhmm(sched_dep),
        ];
        let evening = f64::from(slot_minute) / 1440.0;
        let p_late = (carrier_delay[carrier] + 0.15 * (evening - 0.5)).clamp(0.02, 0.6);
        let cancelled = rng.gen_bool(CANCEL_RATE);
        let diverted = !cancelled && rng.gen_bool(DIVERT_RATE);
        if cancelled {
            rec.extend(std::iter::repeat(String::new()).take(6));
            rec.push(hhmm(sched_arr));
            rec.extend([String::new(), String::new(), num(1.0), num(0.0), num(sched_elapsed)]);
            rec.extend([String::new(), String::new()]);
        } else {
            let dep_delay = if rng.gen_bool(p_late) {
                (15.0 + late.sample(&mut rng)).round().min(600.0)
            } else {
                early.sample(&mut rng).round().clamp(-20.0, 14.0)
            };
            let t_out = (6.0 + taxi_out.sample(&mut rng)).round().min(90.0);
            let air = (block_air * (1.0 + wind.sample(&mut rng))).round().max(15.0);
            let t_in = (2.0 + taxi_in.sample(&mut rng)).round().min(60.0);
            let dep = sched_dep + Duration::minutes(dep_delay as i64);
            let off = dep + Duration::minutes(t_out as i64);
            let on = (off + Duration::minutes(air as i64)).with_timezone(&dtz);
            let arr = on + Duration::minutes(t_in as i64);
            rec.extend([actual_hhmm(dep), num(dep_delay), num(t_out), actual_hhmm(off)]);
            if diverted {
                rec.extend([String::new(), String::new(), hhmm(sched_arr), String::new(), String::new()]);
                rec.extend([num(0.0), num(1.0), num(sched_elapsed), String::new(), String::new()]);
            } else {
                let elapsed = t_out + air + t_in;
                let arr_delay = dep_delay + elapsed - sched_elapsed;
                rec.extend([actual_hhmm(on), num(t_in), hhmm(sched_arr), actual_hhmm(arr), num(arr_delay)]);
                rec.extend([num(0.0), num(0.0), num(sched_elapsed), num(elapsed), num(air)]);
            }
        }
        rec.push(num(route.distance));
        rec.push(((route.distance / 250.0).floor() as i64 + 1).min(11).to_string());
        w.write_record(&rec)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

/// Writes `bts.csv` and `airports.csv` into `dir`.
pub fn write_mock(dir: &Path, rows: usize, seed: u64) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let bts = dir.join(BTS_FILE);
    std::fs::write(&bts, generate_bts(rows, seed)?).with_context(|| format!("writing {}", bts.display()))?;
    let airports = dir.join(AIRPORTS_FILE);
    airport_directory().write_csv(&airports)?;
    Ok((bts, airports))
}
