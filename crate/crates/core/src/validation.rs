//! Independent feasibility check of final routes.
//!
//! Works only from the request data, the network and the reported event
//! times: it re-derives on-board sets, loads, ride times and depot returns
//! without using the event graph or the solver's schedule code.

use std::collections::{BTreeMap, BTreeSet};

use crate::event_graph::Location;
use crate::network::{StopNetwork, DEPOT};
use crate::request_model::{Request, RequestId, ServiceWindow};
use crate::rolling_horizon::{RunConfig, RunOutcome};
use crate::subproblem_solver::PlannedRoute;

const TOL: f64 = 1e-6;

pub struct ValidationInput<'a> {
    pub requests: &'a BTreeMap<RequestId, Request>,
    pub routes: &'a [PlannedRoute],
    pub accepted: &'a BTreeSet<RequestId>,
    pub denied: &'a BTreeSet<RequestId>,
    /// First communicated pick-up times.
    pub promised: &'a BTreeMap<RequestId, f64>,
    pub max_postpone: f64,
    pub capacity: u32,
    pub window: ServiceWindow,
    pub net: &'a StopNetwork,
}

/// Returns one message per violated constraint; empty means feasible.
pub fn validate_routes(input: &ValidationInput<'_>) -> Vec<String> {
    let mut errs = Vec::new();
    let mut picked: BTreeMap<RequestId, (usize, f64)> = BTreeMap::new();
    let mut dropped: BTreeSet<RequestId> = BTreeSet::new();
    for route in input.routes {
        let v = route.vehicle;
        let mut stop = DEPOT;
        let mut ready = input.window.e0;
        let mut onboard: BTreeSet<RequestId> = BTreeSet::new();
        let mut km = 0.0;
        for e in &route.events {
            let Some(r) = e.node.location.request() else {
                errs.push(format!("vehicle {v}: depot event inside route"));
                continue;
            };
            let Some(q) = input.requests.get(&r) else {
                errs.push(format!("vehicle {v}: unknown request {r}"));
                continue;
            };
            let is_pick = matches!(e.node.location, Location::Pickup(_));
            let expected_stop = if is_pick { q.pickup } else { q.dropoff };
            if e.stop != expected_stop {
                errs.push(format!("vehicle {v}: request {r} event at stop {} instead of {expected_stop}", e.stop));
            }
            let arrival = ready + input.net.time(stop, e.stop);
            if e.time + TOL < arrival {
                errs.push(format!("vehicle {v}: request {r} served at {:.4} before arrival {arrival:.4}", e.time));
            }
            km += input.net.cost(stop, e.stop);
            let (lo, hi) = if is_pick { (q.e_pick, q.l_pick) } else { (q.e_drop, q.l_drop) };
            if e.time + TOL < lo || e.time > hi + TOL {
                errs.push(format!("vehicle {v}: request {r} time {:.4} outside [{lo:.4}, {hi:.4}]", e.time));
            }
            if is_pick {
                if picked.insert(r, (v, e.time)).is_some() {
                    errs.push(format!("request {r} picked up twice"));
                }
                if let Some(p) = input.promised.get(&r) {
                    if e.time > p + input.max_postpone + TOL {
                        errs.push(format!("request {r} postponed from {p:.4} to {:.4}", e.time));
                    }
                }
                onboard.insert(r);
            } else {
                match picked.get(&r) {
                    Some(&(pv, pt)) if pv == v && onboard.contains(&r) => {
                        let ride = e.time - (pt + q.service);
                        if ride > q.max_ride + TOL {
                            errs.push(format!("request {r} ride {ride:.4} exceeds {:.4}", q.max_ride));
                        }
                    }
                    _ => errs.push(format!("vehicle {v}: request {r} dropped without pick-up")),
                }
                onboard.remove(&r);
                if !dropped.insert(r) {
                    errs.push(format!("request {r} dropped twice"));
                }
            }
            let load: u32 = onboard.iter().filter_map(|x| input.requests.get(x)).map(|x| x.group_size).sum();
            if load > input.capacity {
                errs.push(format!("vehicle {v}: load {load} exceeds capacity after request {r}"));
            }
            let node_onboard: BTreeSet<RequestId> = e.node.onboard().into_iter().collect();
            if node_onboard != onboard {
                errs.push(format!("vehicle {v}: node on-board set disagrees at request {r}"));
            }
            stop = e.stop;
            ready = e.time + q.service;
        }
        if !onboard.is_empty() {
            errs.push(format!("vehicle {v}: ends with passengers {onboard:?}"));
        }
        if !route.events.is_empty() {
            let back = ready + input.net.time(stop, DEPOT);
            if back > input.window.l0 + TOL {
                errs.push(format!("vehicle {v}: returns at {back:.4} after {:.4}", input.window.l0));
            }
            if (back - route.depot_arrival).abs() > TOL {
                errs.push(format!("vehicle {v}: reported depot arrival {:.4} differs from {back:.4}", route.depot_arrival));
            }
        }
        km += input.net.cost(stop, DEPOT);
        if (km - route.cost).abs() > 1e-6 * km.max(1.0) {
            errs.push(format!("vehicle {v}: reported cost {:.6} differs from {km:.6}", route.cost));
        }
    }
    for r in input.accepted {
        if !picked.contains_key(r) || !dropped.contains(r) {
            errs.push(format!("accepted request {r} not served"));
        }
    }
    for r in input.denied {
        if picked.contains_key(r) {
            errs.push(format!("denied request {r} appears in a route"));
        }
        if input.accepted.contains(r) {
            errs.push(format!("request {r} both accepted and denied"));
        }
    }
    for r in picked.keys() {
        if !input.accepted.contains(r) {
            errs.push(format!("request {r} served without acceptance"));
        }
    }
    errs
}

/// Every revealed request must be decided within `delta` of its reveal.
pub fn validate_decisions(
    requests: &BTreeMap<RequestId, Request>,
    decision_time: &BTreeMap<RequestId, f64>,
    delta: f64,
) -> Vec<String> {
    let mut errs = Vec::new();
    for (id, q) in requests {
        match decision_time.get(id) {
            None => errs.push(format!("request {id} never decided")),
            Some(&t) if t > q.reveal_time + delta + TOL => {
                errs.push(format!("request {id} decided at {t:.4}, revealed at {:.4}", q.reveal_time))
            }
            Some(_) => {}
        }
    }
    errs
}

/// Runs both checks on a rolling-horizon outcome.
pub fn validate_outcome(out: &RunOutcome, cfg: &RunConfig, net: &StopNetwork) -> Vec<String> {
    let denied: BTreeSet<RequestId> = out.state.denied.keys().copied().collect();
    let mut errs = validate_routes(&ValidationInput {
        requests: &out.requests,
        routes: &out.solution.routes,
        accepted: &out.state.accepted,
        denied: &denied,
        promised: &out.state.promised,
        max_postpone: cfg.params.max_postpone_min,
        capacity: cfg.capacity,
        window: cfg.window,
        net,
    });
    errs.extend(validate_decisions(&out.requests, &out.state.decision_time, cfg.delta_min()));
    errs
}
