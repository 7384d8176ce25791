//! Full dial-a-ride request data derived from sampled request records.
//!
//! All times in this module and downstream are minutes since the start of
//! the scenario (22:00 of the evening).

use serde::{Deserialize, Serialize};

use crate::demand_sim::RequestRecord;
use crate::error::{Error, Result};
use crate::network::{StopId, StopNetwork};

pub type RequestId = u32;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestParams {
    /// Boarding / alighting time per stop, minutes.
    pub service_min: f64,
    /// Length of the pick-up window, minutes.
    pub pickup_window_min: f64,
    /// Maximum ride time as a multiple of the direct travel time ...
    pub ride_factor: f64,
    /// ... but never less than the direct travel time plus this many minutes.
    pub ride_slack_min: f64,
    /// Maximum postponement of a communicated pick-up time, minutes.
    pub max_postpone_min: f64,
}

impl Default for RequestParams {
    fn default() -> Self {
        RequestParams {
            service_min: 0.75,
            pickup_window_min: 25.0,
            ride_factor: 2.0,
            ride_slack_min: 10.0,
            max_postpone_min: 10.0,
        }
    }
}

/// Depot time window: vehicles leave no earlier than `e0` and return no later than `l0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceWindow {
    pub e0: f64,
    pub l0: f64,
}

impl Default for ServiceWindow {
    /// 22:00 to 05:00; requests arrive until 04:00, the last hour lets vehicles finish.
    fn default() -> Self {
        ServiceWindow { e0: 0.0, l0: 420.0 }
    }
}

impl ServiceWindow {
    pub fn horizon(&self) -> f64 {
        self.l0 - self.e0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub pickup: StopId,
    pub dropoff: StopId,
    pub group_size: u32,
    /// Time the request becomes known to the dispatcher.
    pub reveal_time: f64,
    pub e_pick: f64,
    pub l_pick: f64,
    pub e_drop: f64,
    pub l_drop: f64,
    pub service: f64,
    pub max_ride: f64,
    /// Direct travel time from pick-up to drop-off.
    pub direct_time: f64,
}

impl Request {
    /// Drop-off service start when picked up at `e_pick` and driven directly.
    pub fn solo_arrival(&self) -> f64 {
        self.e_pick + self.service + self.direct_time
    }
}

pub fn derive_request(
    rec: &RequestRecord,
    net: &StopNetwork,
    params: &RequestParams,
    window: &ServiceWindow,
) -> Result<Request> {
    net.check(rec.pickup_stop)?;
    net.check(rec.dropoff_stop)?;
    let direct = net.time(rec.pickup_stop, rec.dropoff_stop);
    let s = params.service_min;
    let e_pick = rec.earliest_pickup_s as f64 / 60.0;
    let latest_start = window.l0 - s - direct;
    if e_pick < window.e0 || e_pick > latest_start {
        return Err(Error::OutOfService {
            id: rec.request_id,
            e_pick,
            lo: window.e0,
            hi: latest_start,
        });
    }
    let max_ride = (params.ride_factor * direct).max(direct + params.ride_slack_min);
    let l_pick = e_pick + params.pickup_window_min;
    let req = Request {
        id: rec.request_id,
        pickup: rec.pickup_stop,
        dropoff: rec.dropoff_stop,
        group_size: rec.group_size,
        reveal_time: rec.submission_time_s as f64 / 60.0,
        e_pick,
        l_pick,
        e_drop: e_pick + s + direct,
        l_drop: l_pick + s + max_ride,
        service: s,
        max_ride,
        direct_time: direct,
    };
    let solo = req.solo_arrival();
    assert!(
        solo >= req.e_drop && solo <= req.l_drop && req.max_ride >= direct,
        "solo trip of request {} violates its own windows",
        req.id
    );
    Ok(req)
}

/// Derives all records, skipping (and logging) requests outside the service window.
pub fn derive_all(
    records: &[RequestRecord],
    net: &StopNetwork,
    params: &RequestParams,
    window: &ServiceWindow,
) -> Result<Vec<Request>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        match derive_request(rec, net, params, window) {
            Ok(r) => out.push(r),
            Err(e @ Error::OutOfService { .. }) => log::warn!("skipping: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Stop;

    fn line_network(km: f64) -> StopNetwork {
        let stops = (0..3)
            .map(|i| Stop {
                id: i,
                name: String::new(),
                x_km: i as f64 * km,
                y_km: 0.0,
            })
            .collect();
        StopNetwork::from_coordinates(stops, 1.0).unwrap()
    }

    /// Network whose 1 -> 2 travel time is exactly `minutes`.
    fn net_with_time(minutes: f64) -> StopNetwork {
        let km = (minutes - crate::network::TIME_INTERCEPT) / crate::network::TIME_PER_KM;
        line_network(km)
    }

    fn record(e_s: i64) -> RequestRecord {
        RequestRecord {
            request_id: 1,
            submission_time_s: e_s - 45,
            pickup_stop: 1,
            dropoff_stop: 2,
            group_size: 1,
            earliest_pickup_s: e_s,
        }
    }

    #[test]
    fn drop_window_and_pickup_window() {
        let net = net_with_time(10.0);
        let r = derive_request(&record(0), &net, &RequestParams::default(), &ServiceWindow::default()).unwrap();
        assert!((r.direct_time - 10.0).abs() < 1e-12);
        assert!((r.e_drop - 10.75).abs() < 1e-12);
        assert_eq!(r.l_pick - r.e_pick, 25.0);
        assert!((r.max_ride - 20.0).abs() < 1e-12);
        assert!((r.reveal_time + 0.75).abs() < 1e-12);
    }

    #[test]
    fn ride_floor_binds_for_short_trips() {
        let net = net_with_time(4.0);
        let r = derive_request(&record(600), &net, &RequestParams::default(), &ServiceWindow::default()).unwrap();
        assert!((r.max_ride - 14.0).abs() < 1e-12);
        assert!((r.l_drop - (r.l_pick + 0.75 + 14.0)).abs() < 1e-12);
    }

    #[test]
    fn out_of_service() {
        let net = net_with_time(10.0);
        let w = ServiceWindow { e0: 0.0, l0: 60.0 };
        let p = RequestParams::default();
        assert!(matches!(derive_request(&record(-60), &net, &p, &w), Err(Error::OutOfService { .. })));
        assert!(matches!(derive_request(&record(55 * 60), &net, &p, &w), Err(Error::OutOfService { .. })));
        assert!(derive_request(&record(49 * 60), &net, &p, &w).is_ok());
    }
}
