//! Service-quality measures: regret, waiting, ride and transportation time.
//!
//! For an accepted request `i` with service start `B` at pick-up, departure
//! `D = B + s` and arrival `A` (service start at the drop-off stop):
//!
//! * regret `A - e_drop`
//! * wait `B - e_pick`
//! * ride `A - D`
//! * transport `A - e_pick`
//!
//! All averages are over accepted requests only.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::request_model::{Request, RequestId};
use crate::rolling_horizon::{LogRecord, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceTimes {
    /// Beginning of service at the pick-up stop.
    pub b: f64,
    /// Departure from the pick-up stop.
    pub d: f64,
    /// Arrival at the destination.
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripOutcome {
    pub request: RequestId,
    /// `None` for denied requests.
    pub times: Option<ServiceTimes>,
}

impl TripOutcome {
    pub fn accepted(&self) -> bool {
        self.times.is_some()
    }
}

/// Per-passenger measures in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripMetrics {
    pub regret: f64,
    pub wait: f64,
    pub ride: f64,
    pub transport: f64,
}

impl TripMetrics {
    /// `e_drop` is the arrival time of a direct private-car trip started at `e_pick`.
    pub fn new(e_pick: f64, e_drop: f64, t: ServiceTimes) -> Self {
        TripMetrics {
            regret: t.a - e_drop,
            wait: t.b - e_pick,
            ride: t.a - t.d,
            transport: t.a - e_pick,
        }
    }

    pub fn for_request(r: &Request, t: ServiceTimes) -> Self {
        TripMetrics::new(r.e_pick, r.e_drop, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub n_requests: usize,
    pub n_accepted: usize,
    pub avg_regret: f64,
    pub avg_wait: f64,
    pub avg_ride: f64,
    pub avg_transport: f64,
    pub total_routing_cost_km: f64,
    pub pct_denied: f64,
}

/// Averages a set of per-passenger measures; `n_requests` includes denied ones.
pub fn aggregate(metrics: &[TripMetrics], n_requests: usize, total_routing_cost_km: f64) -> Result<QualityReport> {
    if metrics.is_empty() {
        return Err(Error::EmptyAcceptedSet);
    }
    let n = metrics.len() as f64;
    let mean = |f: fn(&TripMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    Ok(QualityReport {
        n_requests,
        n_accepted: metrics.len(),
        avg_regret: mean(|m| m.regret),
        avg_wait: mean(|m| m.wait),
        avg_ride: mean(|m| m.ride),
        avg_transport: mean(|m| m.transport),
        total_routing_cost_km,
        pct_denied: pct_denied(metrics.len(), n_requests),
    })
}

pub fn pct_denied(accepted: usize, n_requests: usize) -> f64 {
    if n_requests == 0 {
        0.0
    } else {
        100.0 * (1.0 - accepted as f64 / n_requests as f64)
    }
}

pub fn trip_metrics(outcomes: &[TripOutcome], requests: &BTreeMap<RequestId, Request>) -> Result<Vec<(RequestId, TripMetrics)>> {
    outcomes
        .iter()
        .filter_map(|o| o.times.map(|t| (o.request, t)))
        .map(|(id, t)| {
            let r = requests.get(&id).ok_or(Error::UnknownRequest(id))?;
            Ok((id, TripMetrics::for_request(r, t)))
        })
        .collect()
}

pub fn compute_report(
    outcomes: &[TripOutcome],
    requests: &BTreeMap<RequestId, Request>,
    total_routing_cost_km: f64,
) -> Result<QualityReport> {
    let m: Vec<TripMetrics> = trip_metrics(outcomes, requests)?.into_iter().map(|(_, m)| m).collect();
    aggregate(&m, requests.len(), total_routing_cost_km)
}

/// One outcome per request of the run, read from the final routes.
pub fn outcomes_from_run(out: &RunOutcome) -> Vec<TripOutcome> {
    let mut pick = BTreeMap::new();
    let mut drop = BTreeMap::new();
    for e in out.solution.routes.iter().flat_map(|r| &r.events) {
        match e.node.location {
            crate::event_graph::Location::Pickup(r) => {
                pick.insert(r, e.time);
            }
            crate::event_graph::Location::Dropoff(r) => {
                drop.insert(r, e.time);
            }
            crate::event_graph::Location::Depot => {}
        }
    }
    out.requests
        .values()
        .map(|r| {
            let times = match (out.state.accepted.contains(&r.id), pick.get(&r.id), drop.get(&r.id)) {
                (true, Some(&b), Some(&a)) => Some(ServiceTimes { b, d: b + r.service, a }),
                _ => None,
            };
            TripOutcome { request: r.id, times }
        })
        .collect()
}

pub fn report_for_run(out: &RunOutcome) -> Result<QualityReport> {
    compute_report(&outcomes_from_run(out), &out.requests, out.total_cost())
}

/// Recomputes the report from the raw event log without touching routes.
pub fn replay_log(log: &[LogRecord]) -> Result<QualityReport> {
    struct Rev {
        e_pick: f64,
        e_drop: f64,
        service: f64,
    }
    let mut revealed: BTreeMap<RequestId, Rev> = BTreeMap::new();
    let mut picked: BTreeMap<RequestId, f64> = BTreeMap::new();
    let mut arrived: BTreeMap<RequestId, f64> = BTreeMap::new();
    let mut accepted: BTreeSet<RequestId> = BTreeSet::new();
    let mut cost = 0.0;
    for rec in log {
        match *rec {
            LogRecord::Reveal {
                request,
                e_pick,
                e_drop,
                service,
                ..
            } => {
                revealed.insert(request, Rev { e_pick, e_drop, service });
            }
            LogRecord::Accept { request, .. } => {
                accepted.insert(request);
            }
            LogRecord::Pickup {
                t, request, leg_cost_km, ..
            } => {
                picked.insert(request, t);
                cost += leg_cost_km;
            }
            LogRecord::Dropoff {
                t, request, leg_cost_km, ..
            } => {
                arrived.insert(request, t);
                cost += leg_cost_km;
            }
            LogRecord::DepotReturn { leg_cost_km, .. } => cost += leg_cost_km,
            _ => {}
        }
    }
    let mut metrics = Vec::with_capacity(accepted.len());
    for id in &accepted {
        let (Some(r), Some(&b), Some(&a)) = (revealed.get(id), picked.get(id), arrived.get(id)) else {
            return Err(Error::Input(format!("log has no complete trip for accepted request {id}")));
        };
        metrics.push(TripMetrics::new(
            r.e_pick,
            r.e_drop,
            ServiceTimes {
                b,
                d: b + r.service,
                a,
            },
        ));
    }
    aggregate(&metrics, revealed.len(), cost)
}

/// Report restricted to requests whose earliest pick-up falls in one clock hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRow {
    /// Clock hour, 0..24.
    pub hour: u32,
    pub n_requests: usize,
    pub n_accepted: usize,
    pub pct_denied: f64,
    pub avg_regret: Option<f64>,
    pub avg_wait: Option<f64>,
    pub avg_ride: Option<f64>,
    pub avg_transport: Option<f64>,
}

/// `start_hour` is the clock hour of time zero (22 for the evening window).
pub fn hourly_breakdown(
    outcomes: &[TripOutcome],
    requests: &BTreeMap<RequestId, Request>,
    start_hour: u32,
) -> Result<Vec<HourlyRow>> {
    let mut groups: BTreeMap<i64, (usize, Vec<TripMetrics>)> = BTreeMap::new();
    for o in outcomes {
        let r = requests.get(&o.request).ok_or(Error::UnknownRequest(o.request))?;
        let slot = (r.e_pick / 60.0).floor() as i64;
        let g = groups.entry(slot).or_default();
        g.0 += 1;
        if let Some(t) = o.times {
            g.1.push(TripMetrics::for_request(r, t));
        }
    }
    Ok(groups
        .into_iter()
        .map(|(slot, (n, m))| {
            let rep = aggregate(&m, n, 0.0).ok();
            HourlyRow {
                hour: (start_hour as i64 + slot).rem_euclid(24) as u32,
                n_requests: n,
                n_accepted: m.len(),
                pct_denied: pct_denied(m.len(), n),
                avg_regret: rep.map(|r| r.avg_regret),
                avg_wait: rep.map(|r| r.avg_wait),
                avg_ride: rep.map(|r| r.avg_ride),
                avg_transport: rep.map(|r| r.avg_transport),
            }
        })
        .collect())
}

/// One line of the report CSV. Averages are empty when nothing was accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub day: String,
    pub vehicles: usize,
    pub total_routing_cost_km: f64,
    pub pct_denied: f64,
    pub avg_regret: Option<f64>,
    pub avg_wait: Option<f64>,
    pub avg_ride: Option<f64>,
    pub avg_transport: Option<f64>,
}

pub const REPORT_HEADER: [&str; 8] = [
    "day",
    "vehicles",
    "total_routing_cost_km",
    "pct_denied",
    "avg_regret",
    "avg_wait",
    "avg_ride",
    "avg_transport",
];

impl ReportRow {
    pub fn new(day: impl Into<String>, vehicles: usize, report: Result<QualityReport>, n_requests: usize, cost_km: f64) -> Result<Self> {
        let day = day.into();
        match report {
            Ok(r) => Ok(ReportRow {
                day,
                vehicles,
                total_routing_cost_km: r.total_routing_cost_km,
                pct_denied: r.pct_denied,
                avg_regret: Some(r.avg_regret),
                avg_wait: Some(r.avg_wait),
                avg_ride: Some(r.avg_ride),
                avg_transport: Some(r.avg_transport),
            }),
            Err(Error::EmptyAcceptedSet) => Ok(ReportRow {
                day,
                vehicles,
                total_routing_cost_km: cost_km,
                pct_denied: pct_denied(0, n_requests),
                avg_regret: None,
                avg_wait: None,
                avg_ride: None,
                avg_transport: None,
            }),
            Err(e) => Err(e),
        }
    }

    /// Mean of several rows for the same day, ignoring absent averages.
    pub fn mean(day: impl Into<String>, rows: &[ReportRow]) -> Option<ReportRow> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let opt_mean = |f: fn(&ReportRow) -> Option<f64>| {
            let v: Vec<f64> = rows.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some(ReportRow {
            day: day.into(),
            vehicles: rows[0].vehicles,
            total_routing_cost_km: rows.iter().map(|r| r.total_routing_cost_km).sum::<f64>() / n,
            pct_denied: rows.iter().map(|r| r.pct_denied).sum::<f64>() / n,
            avg_regret: opt_mean(|r| r.avg_regret),
            avg_wait: opt_mean(|r| r.avg_wait),
            avg_ride: opt_mean(|r| r.avg_ride),
            avg_transport: opt_mean(|r| r.avg_transport),
        })
    }
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            row: 1,
            msg: format!("expected header {}", REPORT_HEADER.join(",")),
        });
    }
    rd.deserialize()
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
