//! Timetabled bus baseline.
//!
//! A bus passenger's waiting time is unknown, so it is simulated: the gap
//! back to the preceding direct departure between the same two stops gives a
//! maximum wait, and the actual wait is uniform below it.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate, QualityReport, ServiceTimes, TripMetrics};
use crate::network::{Stop, StopId, StopNetwork};

/// Waiting times are capped at two hours.
pub const MAX_WAIT_MIN: f64 = 120.0;
/// Boarding time at the origin stop.
pub const BUS_SERVICE_MIN: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopVisit {
    pub stop: StopId,
    pub time_s: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub id: String,
    pub visits: Vec<StopVisit>,
}

#[derive(Debug, Clone)]
pub struct Timetable {
    pub stops: Vec<Stop>,
    trips: Vec<Trip>,
    /// (origin, destination) -> sorted departure times at the origin.
    direct: HashMap<(StopId, StopId), Vec<i64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    trip_id: String,
    seq: u32,
    stop_id: StopId,
    time_s: i64,
}

impl Timetable {
    pub fn new(stops: Vec<Stop>, trips: Vec<Trip>) -> Result<Self> {
        let mut direct: HashMap<(StopId, StopId), Vec<i64>> = HashMap::new();
        for t in &trips {
            if t.visits.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
                return Err(Error::InvalidTimetable(format!("trip {}: stop times are not strictly increasing", t.id)));
            }
            for (i, a) in t.visits.iter().enumerate() {
                for b in &t.visits[i + 1..] {
                    if a.stop != b.stop {
                        direct.entry((a.stop, b.stop)).or_default().push(a.time_s);
                    }
                }
            }
        }
        for v in direct.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Ok(Timetable { stops, trips, direct })
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn departures(&self, origin: StopId, dest: StopId) -> Option<&[i64]> {
        self.direct.get(&(origin, dest)).map(Vec::as_slice)
    }

    /// Reads `stops.csv` (stop_id,name,x_km,y_km) and `trips.csv` (trip_id,seq,stop_id,time_s).
    pub fn from_csv(stops_csv: &Path, trips_csv: &Path) -> Result<Self> {
        let stops = crate::network::read_stops_csv(stops_csv)?;
        let mut rows: BTreeMap<String, Vec<(u32, StopVisit)>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_path(trips_csv)?;
        for (i, rec) in rdr.deserialize::<TripRow>().enumerate() {
            let r = rec.map_err(|e| Error::Schema {
                path: trips_csv.to_path_buf(),
                row: i + 2,
                msg: e.to_string(),
            })?;
            rows.entry(r.trip_id).or_default().push((
                r.seq,
                StopVisit {
                    stop: r.stop_id,
                    time_s: r.time_s,
                },
            ));
        }
        let trips = rows
            .into_iter()
            .map(|(id, mut v)| {
                v.sort_by_key(|(seq, _)| *seq);
                Trip {
                    id,
                    visits: v.into_iter().map(|(_, s)| s).collect(),
                }
            })
            .collect();
        Timetable::new(stops, trips)
    }

    pub fn write_trips_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.trips {
            for (k, v) in t.visits.iter().enumerate() {
                w.serialize(TripRow {
                    trip_id: t.id.clone(),
                    seq: k as u32,
                    stop_id: v.stop,
                    time_s: v.time_s,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Minutes back to the last direct departure strictly before `boarding_s`,
/// capped at [`MAX_WAIT_MIN`]. Without any earlier departure the cap applies.
pub fn max_wait(tt: &Timetable, origin: StopId, dest: StopId, boarding_s: i64) -> Result<f64> {
    let deps = tt
        .departures(origin, dest)
        .ok_or(Error::NoConnection { origin, dest })?;
    let idx = deps.partition_point(|&d| d < boarding_s);
    Ok(match idx {
        0 => MAX_WAIT_MIN,
        k => ((boarding_s - deps[k - 1]) as f64 / 60.0).min(MAX_WAIT_MIN),
    })
}

pub fn sample_wait<R: Rng + ?Sized>(max_wait: f64, rng: &mut R) -> f64 {
    if max_wait <= 0.0 {
        0.0
    } else {
        rng.random_range(0.0..=max_wait)
    }
}

/// One observed bus ride; times in seconds on the timetable clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusTrip {
    pub origin: StopId,
    pub dest: StopId,
    #[serde(rename = "B_s")]
    pub b_s: i64,
    #[serde(rename = "A_s")]
    pub a_s: i64,
    /// Optional weekday label used to group reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusTripOutcome {
    pub max_wait: f64,
    pub wait: f64,
    pub e_pick: f64,
    pub e_drop: f64,
    pub times: ServiceTimes,
    pub metrics: TripMetrics,
}

/// Evaluates one trip given its sampled wait; times in minutes.
pub fn evaluate_trip(trip: &BusTrip, max_wait: f64, wait: f64, net: &StopNetwork) -> BusTripOutcome {
    let b = trip.b_s as f64 / 60.0;
    let a = trip.a_s as f64 / 60.0;
    let e_pick = b - wait;
    let e_drop = e_pick + BUS_SERVICE_MIN + net.time(trip.origin, trip.dest);
    let times = ServiceTimes {
        b,
        d: b + BUS_SERVICE_MIN,
        a,
    };
    BusTripOutcome {
        max_wait,
        wait,
        e_pick,
        e_drop,
        times,
        metrics: TripMetrics::new(e_pick, e_drop, times),
    }
}

/// `(trip index, outcome)` pairs; trips without a direct connection are
/// skipped with a warning. Trip `k` draws from RNG stream `k`, so results do
/// not depend on thread scheduling.
pub fn simulate_bus_trips(trips: &[BusTrip], tt: &Timetable, net: &StopNetwork, seed: u64) -> Result<Vec<(usize, BusTripOutcome)>> {
    for t in trips {
        net.check(t.origin)?;
        net.check(t.dest)?;
        if t.a_s <= t.b_s {
            return Err(Error::Input(format!(
                "bus trip {} -> {} arrives at {} before boarding at {}",
                t.origin, t.dest, t.a_s, t.b_s
            )));
        }
    }
    let out: Vec<Option<(usize, BusTripOutcome)>> = trips
        .par_iter()
        .enumerate()
        .map(|(k, t)| match max_wait(tt, t.origin, t.dest, t.b_s) {
            Ok(mw) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                Some((k, evaluate_trip(t, mw, sample_wait(mw, &mut rng), net)))
            }
            Err(e) => {
                warn!("skipping bus trip {k}: {e}");
                None
            }
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

pub fn bus_report(trips: &[BusTrip], tt: &Timetable, net: &StopNetwork, seed: u64) -> Result<QualityReport> {
    if trips.is_empty() {
        return Err(Error::Input("bus log is empty".into()));
    }
    let out = simulate_bus_trips(trips, tt, net, seed)?;
    let m: Vec<TripMetrics> = out.iter().map(|(_, o)| o.metrics).collect();
    aggregate(&m, m.len(), 0.0)
}

pub fn read_bus_log(path: &Path) -> Result<Vec<BusTrip>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                row: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_bus_log(path: &Path, trips: &[BusTrip]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let with_day = trips.iter().any(|t| t.day.is_some());
    if with_day {
        w.write_record(["origin", "dest", "B_s", "A_s", "day"])?;
    } else {
        w.write_record(["origin", "dest", "B_s", "A_s"])?;
    }
    for t in trips {
        let mut rec = vec![t.origin.to_string(), t.dest.to_string(), t.b_s.to_string(), t.a_s.to_string()];
        if with_day {
            rec.push(t.day.clone().unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticLines {
    pub lines: usize,
    pub stops_per_line: usize,
    pub headway_min: f64,
    /// First and last departure from the line terminus, seconds.
    pub first_s: i64,
    pub last_s: i64,
    /// Bus running time as a multiple of the car travel time.
    pub slowdown: f64,
    pub dwell_s: i64,
}

impl Default for SyntheticLines {
    fn default() -> Self {
        SyntheticLines {
            lines: 8,
            stops_per_line: 10,
            headway_min: 60.0,
            first_s: -3600,
            last_s: 6 * 3600,
            slowdown: 1.2,
            dwell_s: 45,
        }
    }
}

/// Lines built by chaining nearest unvisited stops from a random terminus,
/// served in both directions at a fixed headway.
pub fn synthetic_timetable(net: &StopNetwork, cfg: &SyntheticLines, seed: u64) -> Result<Timetable> {
    let service = net.service_stops();
    if service.len() < 2 || cfg.stops_per_line < 2 || cfg.headway_min <= 0.0 {
        return Err(Error::Input("synthetic lines need two stops per line and a positive headway".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trips = Vec::new();
    for line in 0..cfg.lines {
        let mut seq = vec![service[rng.random_range(0..service.len())]];
        while seq.len() < cfg.stops_per_line.min(service.len()) {
            let cur = *seq.last().unwrap();
            let next = service
                .iter()
                .filter(|s| !seq.contains(s))
                .min_by(|a, b| net.cost(cur, **a).total_cmp(&net.cost(cur, **b)))
                .copied()
                .unwrap();
            seq.push(next);
        }
        for (dir, stops) in [seq.clone(), seq.iter().rev().copied().collect()].into_iter().enumerate() {
            let mut k = 0;
            loop {
                let start = cfg.first_s + (k as f64 * cfg.headway_min * 60.0).round() as i64;
                if start > cfg.last_s {
                    break;
                }
                let mut t = start;
                let mut visits = vec![StopVisit { stop: stops[0], time_s: t }];
                for w in stops.windows(2) {
                    let run = (net.time(w[0], w[1]) * cfg.slowdown * 60.0).round() as i64;
                    t += run.max(1) + cfg.dwell_s;
                    visits.push(StopVisit { stop: w[1], time_s: t });
                }
                trips.push(Trip {
                    id: format!("L{line}-{dir}-{k}"),
                    visits,
                });
                k += 1;
            }
        }
    }
    Timetable::new(net.stops().to_vec(), trips)
}

/// Random rides on the timetable: a random trip, then a random pair of its
/// stops in travel order.
pub fn synthetic_bus_log(tt: &Timetable, n: usize, seed: u64) -> Vec<BusTrip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trips = tt.trips();
    if trips.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let t = &trips[rng.random_range(0..trips.len())];
            let i = rng.random_range(0..t.visits.len() - 1);
            let j = rng.random_range(i + 1..t.visits.len());
            BusTrip {
                origin: t.visits[i].stop,
                dest: t.visits[j].stop,
                b_s: t.visits[i].time_s,
                a_s: t.visits[j].time_s,
                day: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> StopNetwork {
        let stops = (0..4)
            .map(|i| Stop {
                id: i,
                name: format!("s{i}"),
                x_km: i as f64,
                y_km: 0.0,
            })
            .collect();
        StopNetwork::from_coordinates(stops, 1.0).unwrap()
    }

    fn tt(deps: &[i64]) -> Timetable {
        let trips = deps
            .iter()
            .enumerate()
            .map(|(k, &d)| Trip {
                id: format!("t{k}"),
                visits: vec![
                    StopVisit { stop: 1, time_s: d },
                    StopVisit { stop: 2, time_s: d + 300 },
                    StopVisit { stop: 3, time_s: d + 600 },
                ],
            })
            .collect();
        Timetable::new(net().stops().to_vec(), trips).unwrap()
    }

    #[test]
    fn headway_gap() {
        // Departures at 22:00 and 23:00 (seconds since 22:00).
        let t = tt(&[0, 3600]);
        assert_eq!(max_wait(&t, 1, 3, 3600).unwrap(), 60.0);
        assert_eq!(max_wait(&t, 2, 3, 3900).unwrap(), 60.0);
    }

    #[test]
    fn cap_and_missing_predecessor() {
        let t = tt(&[0, 3 * 3600]);
        assert_eq!(max_wait(&t, 1, 2, 3 * 3600).unwrap(), 120.0);
        assert_eq!(max_wait(&t, 1, 2, 0).unwrap(), 120.0);
    }

    #[test]
    fn no_direct_connection() {
        let t = tt(&[0]);
        assert!(matches!(max_wait(&t, 3, 1, 100), Err(Error::NoConnection { origin: 3, dest: 1 })));
    }

    #[test]
    fn non_increasing_trip_rejected() {
        let trips = vec![Trip {
            id: "x".into(),
            visits: vec![StopVisit { stop: 1, time_s: 10 }, StopVisit { stop: 2, time_s: 10 }],
        }];
        assert!(matches!(Timetable::new(vec![], trips), Err(Error::InvalidTimetable(_))));
    }

    #[test]
    fn sample_wait_range_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_wait(0.0, &mut rng), 0.0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let w = sample_wait(60.0, &mut rng);
            assert!((0.0..=60.0).contains(&w));
            sum += w;
        }
        assert!((sum / n as f64 - 30.0).abs() < 0.6);
    }

    #[test]
    fn car_speed_bus_without_wait_has_no_regret() {
        let n = net();
        let trip = BusTrip {
            origin: 1,
            dest: 3,
            b_s: 600,
            a_s: 600 + ((BUS_SERVICE_MIN + n.time(1, 3)) * 60.0) as i64,
            day: None,
        };
        let o = evaluate_trip(&trip, 0.0, 0.0, &n);
        assert!(o.metrics.regret.abs() < 1.0 / 60.0);
        let o = evaluate_trip(&trip, 30.0, 12.0, &n);
        let m = o.metrics;
        assert!((m.transport - (m.wait + BUS_SERVICE_MIN + m.ride)).abs() < 1e-9);
        assert!((m.wait - 12.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let n = net();
        let t = synthetic_timetable(&n, &SyntheticLines { lines: 2, stops_per_line: 3, ..Default::default() }, 4).unwrap();
        let sp = dir.path().join("stops.csv");
        let tp = dir.path().join("trips.csv");
        n.write_stops_csv(&sp).unwrap();
        t.write_trips_csv(&tp).unwrap();
        let back = Timetable::from_csv(&sp, &tp).unwrap();
        let by_id = |x: &Timetable| x.trips().iter().map(|t| (t.id.clone(), t.visits.clone())).collect::<BTreeMap<_, _>>();
        assert_eq!(by_id(&back), by_id(&t));

        let log = synthetic_bus_log(&t, 50, 2);
        let lp = dir.path().join("bus.csv");
        write_bus_log(&lp, &log).unwrap();
        assert_eq!(read_bus_log(&lp).unwrap(), log);
        let rep = bus_report(&log, &t, &n, 9).unwrap();
        assert_eq!(rep.n_accepted, 50);
        assert_eq!(bus_report(&log, &t, &n, 9).unwrap(), rep);
    }
}
