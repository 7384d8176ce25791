//! Earliest service-start times for a fixed sequence of stops.
//!
//! A route visits events in order. Each event has a window `[lo, hi]` and a
//! service duration; consecutive events are separated by a travel time, and
//! some (pick-up, drop-off) pairs carry a ride-time limit. All constraints
//! are of the form `B_x >= B_y + c`, so the componentwise least solution
//! exists whenever any solution does, and it minimises every drop-off time
//! simultaneously.

pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedEvent {
    pub lo: f64,
    pub hi: f64,
    pub service: f64,
}

/// `B[drop] - B[pick] - service(pick) <= max_ride`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RideLimit {
    pub pick: usize,
    pub drop: usize,
    pub max_ride: f64,
}

/// Least feasible service-start times, or `None` when the sequence is infeasible.
///
/// `travel[k]` is the travel time from event `k` to event `k + 1`.
pub fn least_schedule(events: &[TimedEvent], travel: &[f64], rides: &[RideLimit]) -> Option<Vec<f64>> {
    debug_assert_eq!(travel.len() + 1, events.len().max(1));
    let mut b: Vec<f64> = events.iter().map(|e| e.lo).collect();
    relax_from(&mut b, 0, events, travel, rides).then_some(b)
}

/// Raises `b` (already a valid least solution on `b[..start]`) to the least
/// solution of the whole sequence. Returns `false` if infeasible.
pub fn relax_from(b: &mut [f64], start: usize, events: &[TimedEvent], travel: &[f64], rides: &[RideLimit]) -> bool {
    let n = events.len();
    let mut from = start;
    // A positive cycle through ride limits raises times by a fixed amount per
    // round and is caught by the window check; non-positive cycles settle
    // within n rounds.
    for _ in 0..=n + 1 {
        for k in from..n {
            let mut t = b[k].max(events[k].lo);
            if k > 0 {
                t = t.max(b[k - 1] + events[k - 1].service + travel[k - 1]);
            }
            if t > events[k].hi + TIME_EPS {
                return false;
            }
            b[k] = t;
        }
        let mut lowest_raised = n;
        for r in rides {
            let need = b[r.drop] - events[r.pick].service - r.max_ride;
            if need > b[r.pick] + TIME_EPS {
                if need > events[r.pick].hi + TIME_EPS {
                    return false;
                }
                b[r.pick] = need;
                lowest_raised = lowest_raised.min(r.pick + 1);
            }
        }
        if lowest_raised == n {
            return true;
        }
        from = lowest_raised;
    }
    false
}
