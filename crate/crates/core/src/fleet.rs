//! Fleet sizing from simulated demand: one vehicle per eight requests in the
//! busiest hour, plus the one-smaller and one-larger variants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::covariates::Weekday;
use crate::demand_sim::EveningScenario;

pub const REQUESTS_PER_VEHICLE_HOUR: f64 = 8.0;

pub fn size_fleet(max_avg_requests: f64) -> usize {
    ((max_avg_requests / REQUESTS_PER_VEHICLE_HOUR).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FleetScenario {
    A,
    B,
    C,
}

impl FleetScenario {
    pub const ALL: [FleetScenario; 3] = [FleetScenario::A, FleetScenario::B, FleetScenario::C];
}

impl std::fmt::Display for FleetScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetSize {
    pub max_avg_hourly_requests: f64,
    pub vehicles_a: usize,
    pub vehicles_b: usize,
    pub vehicles_c: usize,
}

impl FleetSize {
    pub fn from_demand(max_avg_hourly_requests: f64) -> Self {
        let a = size_fleet(max_avg_hourly_requests);
        FleetSize {
            max_avg_hourly_requests,
            vehicles_a: a,
            vehicles_b: a.saturating_sub(1).max(1),
            vehicles_c: a + 1,
        }
    }

    pub fn vehicles(&self, s: FleetScenario) -> usize {
        match s {
            FleetScenario::A => self.vehicles_a,
            FleetScenario::B => self.vehicles_b,
            FleetScenario::C => self.vehicles_c,
        }
    }
}

pub type FleetPlan = BTreeMap<Weekday, FleetSize>;

/// For each weekday: request counts per hour slot averaged over all
/// evenings of that weekday, then the maximum over slots.
///
/// Requests are binned by earliest pick-up, in hours since the start of the
/// evening.
pub fn max_avg_hourly(scenarios: &[EveningScenario]) -> BTreeMap<Weekday, f64> {
    let mut sums: BTreeMap<Weekday, (usize, BTreeMap<i64, usize>)> = BTreeMap::new();
    for sc in scenarios {
        let e = sums.entry(sc.weekday).or_default();
        e.0 += 1;
        for r in &sc.requests {
            *e.1.entry(r.earliest_pickup_s.div_euclid(3600)).or_default() += 1;
        }
    }
    sums.into_iter()
        .map(|(d, (n, counts))| {
            let max = counts.values().copied().max().unwrap_or(0);
            (d, max as f64 / n as f64)
        })
        .collect()
}

pub fn plan_fleet(scenarios: &[EveningScenario]) -> FleetPlan {
    max_avg_hourly(scenarios)
        .into_iter()
        .map(|(d, x)| (d, FleetSize::from_demand(x)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand_sim::RequestRecord;
    use proptest::prelude::*;

    #[test]
    fn published_rows() {
        let rows = [(37.2, 5), (34.6, 5), (26.7, 4), (30.8, 4), (24.1, 4), (17.9, 3), (26.5, 4)];
        for (x, a) in rows {
            assert_eq!(size_fleet(x), a, "{x}");
        }
        assert_eq!(size_fleet(0.0), 1);
        assert_eq!(size_fleet(8.0), 1);
        assert_eq!(size_fleet(8.01), 2);
    }

    #[test]
    fn variants_differ_by_one() {
        let f = FleetSize::from_demand(37.2);
        assert_eq!((f.vehicles_a, f.vehicles_b, f.vehicles_c), (5, 4, 6));
        let f = FleetSize::from_demand(3.0);
        assert_eq!((f.vehicles_a, f.vehicles_b, f.vehicles_c), (1, 1, 2));
    }

    fn evening(weekday: Weekday, per_hour: &[usize]) -> EveningScenario {
        let mut requests = Vec::new();
        for (h, &n) in per_hour.iter().enumerate() {
            for k in 0..n {
                requests.push(RequestRecord {
                    request_id: requests.len() as u32 + 1,
                    submission_time_s: h as i64 * 3600 + k as i64 - 45,
                    pickup_stop: 1,
                    dropoff_stop: 2,
                    group_size: 1,
                    earliest_pickup_s: h as i64 * 3600 + k as i64,
                });
            }
        }
        EveningScenario {
            day_index: 0,
            weekday,
            holiday: false,
            requests,
        }
    }

    #[test]
    fn max_of_hourly_means() {
        let s = vec![evening(Weekday::Mon, &[8; 6])];
        assert_eq!(max_avg_hourly(&s)[&Weekday::Mon], 8.0);
        let s = vec![evening(Weekday::Fri, &[10, 20, 5])];
        assert_eq!(max_avg_hourly(&s)[&Weekday::Fri], 20.0);
        let s = vec![evening(Weekday::Fri, &[10, 20, 5]), evening(Weekday::Fri, &[30, 0, 5])];
        assert_eq!(max_avg_hourly(&s)[&Weekday::Fri], 20.0);
    }

    proptest! {
        #[test]
        fn size_fleet_is_monotone(a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(size_fleet(lo) <= size_fleet(hi));
        }
    }
}
