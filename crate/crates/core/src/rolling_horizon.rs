//! Online dispatch loop: reveal requests, re-solve, commit decisions and
//! execute vehicle movements in simulated time.
//!
//! A movement `v -> w` is executed once its just-in-time departure
//! `B_w - t_vw` lies before the current clock. Executed events keep their
//! service-start times; a request whose drop-off has been executed leaves
//! the event graph. Vehicles wait at their last event location between
//! reveals and drive back to the depot when the evening ends.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_graph::{EventGraph, EventNode, HeuristicConfig, Location};
use crate::network::{StopId, StopNetwork, DEPOT};
use crate::request_model::{Request, RequestId, RequestParams, ServiceWindow};
use crate::schedule::TIME_EPS;
use crate::subproblem_solver::{
    build_instance, Fixings, PlannedEvent, PlannedRoute, SolveLimits, SubproblemSolution, VehicleStart, Weights,
};

pub const DEFAULT_CAPACITY: u32 = 6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Answer deadline after a reveal, seconds.
    pub delta_s: f64,
    pub weights: Weights,
    pub vehicles: usize,
    pub capacity: u32,
    pub heuristic: HeuristicConfig,
    pub params: RequestParams,
    pub window: ServiceWindow,
    pub limits: SolveLimits,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            delta_s: 45.0,
            weights: Weights::default(),
            vehicles: 4,
            capacity: DEFAULT_CAPACITY,
            heuristic: HeuristicConfig::default(),
            params: RequestParams::default(),
            window: ServiceWindow::default(),
            limits: SolveLimits::default(),
        }
    }
}

impl RunConfig {
    pub fn delta_min(&self) -> f64 {
        self.delta_s / 60.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenialReason {
    /// The optimal subproblem solution does not serve the request.
    Optimization,
    /// The solve hit its limit without an incumbent serving the request.
    Timeout,
}

/// One line of the JSON-lines event log. Times are minutes since 22:00.
///
/// Records appear in commit order: a pick-up or drop-off is logged as soon
/// as the vehicle departs for it, which can precede later reveals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Reveal {
        t: f64,
        request: RequestId,
        pickup_stop: StopId,
        dropoff_stop: StopId,
        group_size: u32,
        e_pick: f64,
        l_pick: f64,
        e_drop: f64,
        l_drop: f64,
        service: f64,
        direct_time: f64,
        max_ride: f64,
    },
    Solve {
        t: f64,
        open_requests: usize,
        optimal: bool,
        expansions: u64,
        objective: f64,
    },
    Accept {
        t: f64,
        request: RequestId,
        promised_pickup: f64,
    },
    Deny {
        t: f64,
        request: RequestId,
        reason: DenialReason,
    },
    /// Re-communicated pick-up time after a re-plan.
    Promise {
        t: f64,
        request: RequestId,
        pickup: f64,
    },
    Pickup {
        t: f64,
        request: RequestId,
        vehicle: usize,
        stop: StopId,
        leg_cost_km: f64,
    },
    Dropoff {
        t: f64,
        request: RequestId,
        vehicle: usize,
        stop: StopId,
        leg_cost_km: f64,
    },
    DepotReturn {
        t: f64,
        vehicle: usize,
        leg_cost_km: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrace {
    pub executed: Vec<PlannedEvent>,
    pub planned: Vec<PlannedEvent>,
}

/// Mutable state of a run between reveals.
#[derive(Debug, Clone)]
pub struct HorizonState {
    pub clock: f64,
    pub vehicles: Vec<VehicleTrace>,
    pub accepted: BTreeSet<RequestId>,
    pub denied: BTreeMap<RequestId, DenialReason>,
    pub completed: BTreeSet<RequestId>,
    /// First communicated pick-up time.
    pub promised: BTreeMap<RequestId, f64>,
    /// Most recently communicated pick-up time.
    pub communicated: BTreeMap<RequestId, f64>,
    pub decision_time: BTreeMap<RequestId, f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Final depot-to-depot routes with executed times; `accepted`/`denied` is p*.
    pub solution: SubproblemSolution,
    pub state: HorizonState,
    pub log: Vec<LogRecord>,
    pub requests: BTreeMap<RequestId, Request>,
    pub solves: usize,
    pub non_optimal_solves: usize,
}

impl RunOutcome {
    pub fn total_cost(&self) -> f64 {
        self.solution.routes.iter().map(|r| r.cost).sum()
    }

    pub fn total_regret(&self) -> f64 {
        self.solution.routes.iter().map(|r| r.regret).sum()
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for rec in &self.log {
            serde_json::to_writer(&mut f, rec)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    /// One CSV per vehicle: `vehicle_{k}.csv` in `dir`.
    pub fn write_route_traces(&self, dir: &Path, capacity: u32) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for route in &self.solution.routes {
            let mut w = csv::Writer::from_path(dir.join(format!("vehicle_{}.csv", route.vehicle)))?;
            w.write_record(["vehicle", "seq", "event", "stop", "service_start_min", "onboard"])?;
            for (k, e) in route.events.iter().enumerate() {
                let onboard: Vec<String> = e.node.onboard().iter().map(|r| r.to_string()).collect();
                w.write_record([
                    route.vehicle.to_string(),
                    k.to_string(),
                    e.node.render(capacity as usize),
                    e.stop.to_string(),
                    e.time.to_string(),
                    onboard.join(" "),
                ])?;
            }
            w.write_record([
                route.vehicle.to_string(),
                route.events.len().to_string(),
                EventNode::depot().render(capacity as usize),
                DEPOT.to_string(),
                route.depot_arrival.to_string(),
                String::new(),
            ])?;
            w.flush()?;
        }
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                row: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    net: Arc<StopNetwork>,
    graph: EventGraph,
    state: HorizonState,
    log: Vec<LogRecord>,
    requests: BTreeMap<RequestId, Request>,
    solves: usize,
    non_optimal: usize,
}

impl Runner<'_> {
    fn prev_stop(trace: &VehicleTrace) -> StopId {
        trace.executed.last().map_or(DEPOT, |e| e.stop)
    }

    fn execute(&mut self, v: usize, e: PlannedEvent) {
        let from = Self::prev_stop(&self.state.vehicles[v]);
        let leg = self.net.cost(from, e.stop);
        match e.node.location {
            Location::Pickup(r) => self.log.push(LogRecord::Pickup {
                t: e.time,
                request: r,
                vehicle: v,
                stop: e.stop,
                leg_cost_km: leg,
            }),
            Location::Dropoff(r) => {
                self.log.push(LogRecord::Dropoff {
                    t: e.time,
                    request: r,
                    vehicle: v,
                    stop: e.stop,
                    leg_cost_km: leg,
                });
                self.state.completed.insert(r);
                if self.graph.contains_request(r) {
                    self.graph.remove_request(r).expect("present");
                }
            }
            Location::Depot => {}
        }
        self.state.vehicles[v].executed.push(e);
    }

    /// Executes every movement whose just-in-time departure precedes `tau`.
    fn advance(&mut self, tau: f64) {
        for v in 0..self.state.vehicles.len() {
            loop {
                let trace = &self.state.vehicles[v];
                let Some(next) = trace.planned.first() else { break };
                let departure = next.time - self.net.time(Self::prev_stop(trace), next.stop);
                if departure >= tau - TIME_EPS {
                    break;
                }
                let e = self.state.vehicles[v].planned.remove(0);
                self.execute(v, e);
            }
        }
        self.state.clock = tau;
    }

    fn vehicle_start(&self, trace: &VehicleTrace) -> VehicleStart {
        let Some(last) = trace.executed.last() else {
            return VehicleStart::at_depot(self.cfg.window.e0);
        };
        let onboard = last
            .node
            .onboard()
            .into_iter()
            .map(|r| {
                let t = trace
                    .executed
                    .iter()
                    .find(|e| e.node.location == Location::Pickup(r))
                    .map(|e| e.time)
                    .expect("on-board request was picked up");
                (r, t)
            })
            .collect();
        VehicleStart {
            event: last.node.clone(),
            stop: last.stop,
            time: last.time,
            service: self.cfg.params.service_min,
            onboard,
        }
    }

    fn process_batch(&mut self, batch: &[Request]) -> Result<()> {
        let tau = batch[0].reveal_time + self.cfg.delta_min();
        self.advance(tau);
        for r in batch {
            self.log.push(LogRecord::Reveal {
                t: r.reveal_time,
                request: r.id,
                pickup_stop: r.pickup,
                dropoff_stop: r.dropoff,
                group_size: r.group_size,
                e_pick: r.e_pick,
                l_pick: r.l_pick,
                e_drop: r.e_drop,
                l_drop: r.l_drop,
                service: r.service,
                direct_time: r.direct_time,
                max_ride: r.max_ride,
            });
            self.requests.insert(r.id, r.clone());
            self.graph.add_request(r.clone(), &self.cfg.heuristic)?;
        }
        let keep: BTreeSet<EventNode> = self
            .state
            .vehicles
            .iter()
            .flat_map(|t| t.planned.iter().map(|e| e.node.clone()))
            .collect();
        self.graph.prune(&keep);

        let starts: Vec<VehicleStart> = self.state.vehicles.iter().map(|t| self.vehicle_start(t)).collect();
        let onboard: BTreeSet<RequestId> = starts.iter().flat_map(|s| s.onboard.iter().map(|(r, _)| *r)).collect();
        let required: BTreeSet<RequestId> = self
            .state
            .accepted
            .iter()
            .filter(|r| !self.state.completed.contains(r) && !onboard.contains(r))
            .copied()
            .collect();
        let hints = self
            .state
            .vehicles
            .iter()
            .map(|t| {
                t.planned
                    .iter()
                    .filter_map(|e| match e.node.location {
                        Location::Pickup(r) => Some(r),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let fixings = Fixings {
            vehicles: starts,
            required,
            optional: batch.iter().map(|r| r.id).collect(),
            denied: self.state.denied.keys().copied().collect(),
            promised: self.state.promised.clone(),
            clock: tau,
            hints: Some(hints),
        };
        let inst = build_instance(
            &self.graph,
            fixings,
            self.cfg.weights,
            self.cfg.params.max_postpone_min,
            self.cfg.limits.clone(),
        )?;
        let sol = inst.solve()?;
        self.solves += 1;
        if !sol.optimal {
            self.non_optimal += 1;
        }
        self.log.push(LogRecord::Solve {
            t: tau,
            open_requests: inst.open_requests().len(),
            optimal: sol.optimal,
            expansions: sol.expansions,
            objective: sol.objective,
        });
        drop(inst);

        for r in batch {
            self.state.decision_time.insert(r.id, tau);
            if sol.accepted.contains(&r.id) {
                let p = sol.pickup_time(r.id).expect("accepted request is picked up");
                self.state.accepted.insert(r.id);
                self.state.promised.insert(r.id, p);
                self.state.communicated.insert(r.id, p);
                self.log.push(LogRecord::Accept {
                    t: tau,
                    request: r.id,
                    promised_pickup: p,
                });
            } else {
                let reason = if sol.optimal {
                    DenialReason::Optimization
                } else {
                    DenialReason::Timeout
                };
                self.state.denied.insert(r.id, reason);
                self.graph.remove_request(r.id)?;
                self.log.push(LogRecord::Deny {
                    t: tau,
                    request: r.id,
                    reason,
                });
            }
        }
        for (v, trace) in self.state.vehicles.iter_mut().enumerate() {
            trace.planned = sol.routes.get(v).map(|r| r.events.clone()).unwrap_or_default();
        }
        let updates: Vec<(RequestId, f64)> = self
            .state
            .vehicles
            .iter()
            .flat_map(|t| &t.planned)
            .filter_map(|e| match e.node.location {
                Location::Pickup(r) => Some((r, e.time)),
                _ => None,
            })
            .filter(|(r, t)| self.state.communicated.get(r).is_some_and(|c| (c - t).abs() > TIME_EPS))
            .collect();
        for (r, t) in updates {
            self.state.communicated.insert(r, t);
            self.log.push(LogRecord::Promise {
                t: tau,
                request: r,
                pickup: t,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> RunOutcome {
        self.advance(f64::INFINITY);
        let mut routes = Vec::new();
        for v in 0..self.state.vehicles.len() {
            let trace = &self.state.vehicles[v];
            let mut cost = 0.0;
            let mut regret = 0.0;
            let mut prev = DEPOT;
            for e in &trace.executed {
                cost += self.net.cost(prev, e.stop);
                prev = e.stop;
                if let Location::Dropoff(r) = e.node.location {
                    regret += e.time - self.requests[&r].e_drop;
                }
            }
            let back = self.net.cost(prev, DEPOT);
            let depot_arrival = trace
                .executed
                .last()
                .map_or(self.cfg.window.e0, |e| e.time + self.cfg.params.service_min + self.net.time(prev, DEPOT));
            if !trace.executed.is_empty() {
                self.log.push(LogRecord::DepotReturn {
                    t: depot_arrival,
                    vehicle: v,
                    leg_cost_km: back,
                });
            }
            routes.push(PlannedRoute {
                vehicle: v,
                events: trace.executed.clone(),
                cost: cost + back,
                regret,
                depot_arrival,
            });
        }
        let w = self.cfg.weights;
        let cost: f64 = routes.iter().map(|r| r.cost).sum();
        let regret: f64 = routes.iter().map(|r| r.regret).sum();
        let objective = w.omega1 * cost + w.omega2 * regret + w.omega3 * self.state.denied.len() as f64;
        let solution = SubproblemSolution {
            accepted: self.state.accepted.clone(),
            denied: self.state.denied.keys().copied().collect(),
            routes,
            objective,
            optimal: self.non_optimal == 0,
            expansions: 0,
        };
        RunOutcome {
            solution,
            state: self.state,
            log: self.log,
            requests: self.requests,
            solves: self.solves,
            non_optimal_solves: self.non_optimal,
        }
    }
}

/// Runs the online loop over `scenario` (sorted by reveal time). Requests
/// revealed at the same instant are decided together.
pub fn run(scenario: &[Request], cfg: &RunConfig, net: Arc<StopNetwork>) -> Result<RunOutcome> {
    if cfg.delta_s <= 0.0 {
        return Err(Error::Input("answer deadline must be positive".into()));
    }
    if scenario.windows(2).any(|w| w[1].reveal_time < w[0].reveal_time) {
        return Err(Error::Input("scenario is not sorted by reveal time".into()));
    }
    let mut seen = BTreeSet::new();
    for r in scenario {
        if !seen.insert(r.id) {
            return Err(Error::DuplicateRequest(r.id));
        }
        if r.group_size > cfg.capacity {
            return Err(Error::Input(format!("request {} exceeds vehicle capacity", r.id)));
        }
    }
    let mut runner = Runner {
        cfg,
        graph: EventGraph::new(net.clone(), cfg.capacity, cfg.window),
        net,
        state: HorizonState {
            clock: cfg.window.e0,
            vehicles: vec![VehicleTrace::default(); cfg.vehicles],
            accepted: BTreeSet::new(),
            denied: BTreeMap::new(),
            completed: BTreeSet::new(),
            promised: BTreeMap::new(),
            communicated: BTreeMap::new(),
            decision_time: BTreeMap::new(),
        },
        log: Vec::new(),
        requests: BTreeMap::new(),
        solves: 0,
        non_optimal: 0,
    };
    for batch in scenario.chunk_by(|a, b| a.reveal_time == b.reveal_time) {
        runner.process_batch(batch)?;
    }
    Ok(runner.finish())
}
