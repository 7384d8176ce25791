//! Exact solution of one rolling-horizon subproblem over the event graph.
//!
//! Routes are depot-to-depot paths in the event graph. For every vehicle the
//! solver enumerates graph paths from the vehicle's committed state, times
//! each path with the least schedule (which minimises every drop-off time at
//! once), and keeps the cheapest route per set of served requests. Dominance
//! at empty-vehicle events keeps the enumeration small. A dynamic program
//! over vehicles then combines disjoint request sets. When the enumeration
//! budget is exhausted the best combination found so far is returned with
//! `optimal = false`; a warm start from the previous plan guarantees that a
//! feasible incumbent always exists.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::BuildHasherDefault;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_graph::{EventGraph, EventNode, Location};
use crate::network::{StopId, DEPOT};
use crate::request_model::RequestId;
use crate::schedule::{relax_from, RideLimit, TimedEvent, TIME_EPS};

type DetHashMap<K, V> = HashMap<K, V, BuildHasherDefault<std::collections::hash_map::DefaultHasher>>;

pub const MAX_ACTIVE_REQUESTS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    /// Per km of routing.
    pub omega1: f64,
    /// Per minute of regret.
    pub omega2: f64,
    /// Per denied request.
    pub omega3: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            omega1: 1.0,
            omega2: 1.0,
            omega3: 200.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveLimits {
    /// Route-extension steps per solve; the primary, deterministic limit.
    pub max_expansions: u64,
    /// Entries in the vehicle-combination table.
    pub max_combinations: usize,
    /// Wall-clock safety net.
    pub time_limit_s: f64,
    /// Shuffles successor order; the optimum value does not depend on it.
    pub shuffle_seed: Option<u64>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            max_expansions: 2_000_000,
            max_combinations: 2_000_000,
            time_limit_s: 30.0,
            shuffle_seed: None,
        }
    }
}

/// Committed state of one vehicle at the clock: the event it is at or
/// driving to (with a fixed service start) and who is on board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleStart {
    pub event: EventNode,
    pub stop: StopId,
    pub time: f64,
    pub service: f64,
    /// On-board requests and their fixed pick-up service start.
    pub onboard: Vec<(RequestId, f64)>,
}

impl VehicleStart {
    pub fn at_depot(e0: f64) -> Self {
        VehicleStart {
            event: EventNode::depot(),
            stop: DEPOT,
            time: e0,
            service: 0.0,
            onboard: Vec::new(),
        }
    }

    pub fn ready_time(&self) -> f64 {
        self.time + self.service
    }
}

/// Decisions fixed before the subproblem is solved.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Fixings {
    pub vehicles: Vec<VehicleStart>,
    /// Accepted requests whose pick-up is not yet committed; must be served.
    pub required: BTreeSet<RequestId>,
    /// Newly revealed requests; accepted or denied by the solve.
    pub optional: BTreeSet<RequestId>,
    /// Requests denied earlier; must not appear in the graph.
    pub denied: BTreeSet<RequestId>,
    /// First communicated pick-up time per accepted request.
    pub promised: BTreeMap<RequestId, f64>,
    pub clock: f64,
    /// Requests each vehicle served in the previous plan (warm start).
    pub hints: Option<Vec<BTreeSet<RequestId>>>,
}

impl Fixings {
    /// All graph requests open, `k` idle vehicles at the depot.
    pub fn fresh(graph: &EventGraph, k: usize, clock: f64) -> Self {
        let e0 = graph.service_window().e0;
        Fixings {
            vehicles: vec![VehicleStart::at_depot(e0); k],
            optional: graph.requests().keys().copied().collect(),
            clock,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
struct NodeInfo {
    node: EventNode,
    stop: StopId,
    event: TimedEvent,
    location: Location,
    onboard: Vec<RequestId>,
    bit: Option<usize>,
}

pub struct MilpInstance<'g> {
    pub graph: &'g EventGraph,
    pub fixings: Fixings,
    pub weights: Weights,
    pub max_postpone: f64,
    pub limits: SolveLimits,
    bits: Vec<RequestId>,
    bit_of: BTreeMap<RequestId, usize>,
    nodes: Vec<NodeInfo>,
    node_index: BTreeMap<EventNode, usize>,
    succ: Vec<Vec<usize>>,
}

fn inconsistent(msg: String) -> Error {
    Error::InconsistentFixing(msg)
}

pub fn build_instance<'g>(
    graph: &'g EventGraph,
    fixings: Fixings,
    weights: Weights,
    max_postpone: f64,
    limits: SolveLimits,
) -> Result<MilpInstance<'g>> {
    let f = &fixings;
    if let Some(r) = f.required.intersection(&f.optional).next() {
        return Err(inconsistent(format!("request {r} both required and optional")));
    }
    if let Some(r) = f.denied.iter().find(|r| graph.contains_request(**r)) {
        return Err(inconsistent(format!("denied request {r} still in the graph")));
    }
    let mut onboard_owner = BTreeMap::new();
    for (v, veh) in f.vehicles.iter().enumerate() {
        for &(r, pick_time) in &veh.onboard {
            let req = graph
                .request(r)
                .ok_or_else(|| inconsistent(format!("vehicle {v} carries unknown request {r}")))?;
            if onboard_owner.insert(r, v).is_some() || f.required.contains(&r) || f.optional.contains(&r) {
                return Err(inconsistent(format!("request {r} on board and open at once")));
            }
            let deadline = req.l_drop.min(pick_time + req.service + req.max_ride);
            let earliest = veh.ready_time() + graph.network().time(veh.stop, req.dropoff);
            if earliest > deadline + TIME_EPS {
                return Err(inconsistent(format!("vehicle {v} cannot drop request {r} in time")));
            }
        }
        let load: u32 = veh.onboard.iter().map(|(r, _)| graph.requests()[r].group_size).sum();
        if load > graph.capacity() {
            return Err(inconsistent(format!("vehicle {v} exceeds capacity")));
        }
        let ev_req = veh.event.location.request();
        if let Some(r) = ev_req.filter(|r| graph.contains_request(*r)) {
            let tw = graph.timing_of(&EventNode::new(veh.event.location, vec![]));
            if veh.time < tw.lo - TIME_EPS || veh.time > tw.hi + TIME_EPS {
                return Err(inconsistent(format!("vehicle {v} event of request {r} outside its window")));
            }
        }
    }
    for r in graph.requests().keys() {
        if !f.required.contains(r) && !f.optional.contains(r) && !onboard_owner.contains_key(r) {
            return Err(inconsistent(format!("request {r} in the graph but neither open nor on board")));
        }
    }
    let bits: Vec<RequestId> = f.required.iter().chain(&f.optional).copied().collect::<BTreeSet<_>>().into_iter().collect();
    for r in &bits {
        if !graph.contains_request(*r) {
            return Err(inconsistent(format!("open request {r} not in the graph")));
        }
    }
    if bits.len() > MAX_ACTIVE_REQUESTS {
        return Err(Error::Infeasible(format!(
            "{} open requests exceed the supported {MAX_ACTIVE_REQUESTS}",
            bits.len()
        )));
    }
    let bit_of: BTreeMap<RequestId, usize> = bits.iter().enumerate().map(|(i, r)| (*r, i)).collect();

    let mut nodes = Vec::new();
    let mut node_index = BTreeMap::new();
    for n in graph.nodes() {
        let mut event = graph.timing_of(n);
        if let Location::Pickup(r) = n.location {
            if let Some(p) = f.promised.get(&r) {
                event.hi = event.hi.min(p + max_postpone);
                if event.hi < event.lo - TIME_EPS {
                    return Err(inconsistent(format!("promise for request {r} precedes its window")));
                }
            }
        }
        node_index.insert(n.clone(), nodes.len());
        nodes.push(NodeInfo {
            node: n.clone(),
            stop: graph.stop_of(n),
            event,
            location: n.location,
            onboard: n.onboard(),
            bit: n.location.request().and_then(|r| bit_of.get(&r).copied()),
        });
    }
    let succ = graph
        .nodes()
        .map(|n| graph.successors(n).map(|w| node_index[w]).collect())
        .collect();
    Ok(MilpInstance {
        graph,
        fixings,
        weights,
        max_postpone,
        limits,
        bits,
        bit_of,
        nodes,
        node_index,
        succ,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedEvent {
    pub node: EventNode,
    pub stop: StopId,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRoute {
    pub vehicle: usize,
    /// Events after the committed start event, excluding the final depot.
    pub events: Vec<PlannedEvent>,
    /// Routing cost from the start event through the return to the depot, km.
    pub cost: f64,
    /// Sum over drop-offs on the route of `B_drop - e_drop`, minutes.
    pub regret: f64,
    pub depot_arrival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    /// p* restricted to the open requests.
    pub accepted: BTreeSet<RequestId>,
    pub denied: BTreeSet<RequestId>,
    pub routes: Vec<PlannedRoute>,
    pub objective: f64,
    pub optimal: bool,
    pub expansions: u64,
}

impl SubproblemSolution {
    pub fn service_start(&self, node: &EventNode) -> Option<f64> {
        self.routes
            .iter()
            .flat_map(|r| &r.events)
            .find(|e| &e.node == node)
            .map(|e| e.time)
    }

    pub fn pickup_time(&self, r: RequestId) -> Option<f64> {
        self.routes
            .iter()
            .flat_map(|rt| &rt.events)
            .find(|e| e.node.location == Location::Pickup(r))
            .map(|e| e.time)
    }
}

#[derive(Debug, Clone)]
struct RouteCand {
    value: f64,
    cost: f64,
    regret: f64,
    nodes: Vec<usize>,
    times: Vec<f64>,
    depot_arrival: f64,
}

type RouteTable = BTreeMap<u128, RouteCand>;

struct Budget {
    expansions: u64,
    max: u64,
    deadline: Instant,
    exhausted: bool,
}

impl Budget {
    fn tick(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        self.expansions += 1;
        if self.expansions > self.max || (self.expansions.is_multiple_of(4096) && Instant::now() > self.deadline) {
            self.exhausted = true;
            return false;
        }
        true
    }
}

struct Search<'a, 'g> {
    inst: &'a MilpInstance<'g>,
    start: &'a VehicleStart,
    allowed: u128,
    succ: &'a [Vec<usize>],
    first_succ: Vec<usize>,
    /// Drop-off deadline for requests on board at the start.
    start_deadline: BTreeMap<RequestId, f64>,
    table: RouteTable,
    dominance: DetHashMap<(usize, u128), Vec<(f64, f64)>>,
    // Current path state; index 0 is the start event.
    path: Vec<usize>,
    events: Vec<TimedEvent>,
    travel: Vec<f64>,
    rides: Vec<RideLimit>,
    b: Vec<f64>,
    stops: Vec<StopId>,
}

impl<'a, 'g> Search<'a, 'g> {
    fn new(inst: &'a MilpInstance<'g>, start: &'a VehicleStart, allowed: u128, succ: &'a [Vec<usize>]) -> Self {
        let start_onboard: Vec<RequestId> = {
            let mut v: Vec<RequestId> = start.onboard.iter().map(|(r, _)| *r).collect();
            v.sort_unstable();
            v
        };
        let own_onboard: BTreeSet<RequestId> = start_onboard.iter().copied().collect();
        let first_succ = if start.event.is_depot() && start_onboard.is_empty() {
            succ[inst.node_index[&EventNode::depot()]].clone()
        } else {
            (0..inst.nodes.len())
                .filter(|&w| {
                    let n = &inst.nodes[w];
                    match n.location {
                        Location::Depot => false,
                        Location::Pickup(k) => {
                            !own_onboard.contains(&k) && n.onboard.len() == start_onboard.len() + 1 && n.onboard.iter().all(|r| *r == k || own_onboard.contains(r))
                        }
                        Location::Dropoff(k) => {
                            own_onboard.contains(&k) && n.onboard.len() + 1 == start_onboard.len() && n.onboard.iter().all(|r| own_onboard.contains(r))
                        }
                    }
                })
                .collect()
        };
        let start_deadline = start
            .onboard
            .iter()
            .map(|&(r, pt)| {
                let q = &inst.graph.requests()[&r];
                (r, q.l_drop.min(pt + q.service + q.max_ride))
            })
            .collect();
        Search {
            inst,
            start,
            allowed,
            succ,
            first_succ,
            start_deadline,
            table: RouteTable::new(),
            dominance: DetHashMap::default(),
            path: Vec::new(),
            events: vec![TimedEvent {
                lo: start.time,
                hi: start.time,
                service: start.service,
            }],
            travel: Vec::new(),
            rides: Vec::new(),
            b: vec![start.time],
            stops: vec![start.stop],
        }
    }

    fn node_allowed(&self, w: usize, mask: u128) -> bool {
        let n = &self.inst.nodes[w];
        match n.location {
            Location::Depot => false,
            Location::Pickup(_) => match n.bit {
                Some(bit) => self.allowed & (1u128 << bit) != 0 && mask & (1u128 << bit) == 0,
                None => false,
            },
            Location::Dropoff(_) => true,
        }
    }

    fn regret(&self) -> f64 {
        let mut total = 0.0;
        for (k, &w) in self.path.iter().enumerate() {
            let n = &self.inst.nodes[w];
            if let Location::Dropoff(_) = n.location {
                total += self.b[k + 1] - n.event.lo;
            }
        }
        total
    }

    /// Appends `w`; returns false (leaving the state unchanged) if infeasible.
    fn push(&mut self, w: usize, saved: &mut Vec<f64>) -> bool {
        let net = self.inst.graph.network();
        let n = &self.inst.nodes[w];
        let prev_stop = *self.stops.last().expect("start stop");
        let t = net.time(prev_stop, n.stop);
        let mut ev = n.event;
        if self.path.is_empty() {
            ev.lo = ev.lo.max(self.inst.fixings.clock + t);
        }
        if let Location::Dropoff(r) = n.location {
            if let Some(&d) = self.start_deadline.get(&r) {
                ev.hi = ev.hi.min(d);
            }
        }
        saved.clear();
        saved.extend_from_slice(&self.b);
        let idx = self.events.len();
        self.events.push(ev);
        self.travel.push(t);
        self.stops.push(n.stop);
        self.b.push(ev.lo);
        let mut pushed_ride = false;
        if let Location::Dropoff(r) = n.location {
            if let Some(p) = self.path.iter().position(|&v| self.inst.nodes[v].location == Location::Pickup(r)) {
                let q = &self.inst.graph.requests()[&r];
                self.rides.push(RideLimit {
                    pick: p + 1,
                    drop: idx,
                    max_ride: q.max_ride,
                });
                pushed_ride = true;
            }
        }
        let ok = relax_from(&mut self.b, idx, &self.events, &self.travel, &self.rides) && self.lookahead(w, idx);
        if ok {
            self.path.push(w);
            true
        } else {
            self.events.pop();
            self.travel.pop();
            self.stops.pop();
            if pushed_ride {
                self.rides.pop();
            }
            self.b.clear();
            self.b.extend_from_slice(saved);
            false
        }
    }

    fn pop(&mut self, saved: &[f64]) {
        let idx = self.events.len() - 1;
        self.path.pop();
        self.events.pop();
        self.travel.pop();
        self.stops.pop();
        if self.rides.last().is_some_and(|r| r.drop == idx) {
            self.rides.pop();
        }
        self.b.clear();
        self.b.extend_from_slice(saved);
    }

    /// Every request on board after `w` can still reach its drop-off window.
    fn lookahead(&self, w: usize, idx: usize) -> bool {
        let net = self.inst.graph.network();
        let n = &self.inst.nodes[w];
        let ready = self.b[idx] + n.event.service;
        n.onboard.iter().all(|r| {
            let q = &self.inst.graph.requests()[r];
            let hi = self.start_deadline.get(r).copied().unwrap_or(q.l_drop);
            ready + net.time(n.stop, q.dropoff) <= hi + TIME_EPS
        })
    }

    fn record_completion(&mut self, mask: u128, arc_cost: f64) {
        let net = self.inst.graph.network();
        let last = self.b.len() - 1;
        let stop = *self.stops.last().expect("stop");
        let arrival = self.b[last] + self.events[last].service + net.time(stop, DEPOT);
        if arrival > self.inst.graph.service_window().l0 + TIME_EPS {
            return;
        }
        let cost = arc_cost + net.cost(stop, DEPOT);
        let regret = self.regret();
        let value = self.inst.weights.omega1 * cost + self.inst.weights.omega2 * regret;
        if self.table.get(&mask).is_some_and(|c| c.value <= value + 1e-12) {
            return;
        }
        self.table.insert(
            mask,
            RouteCand {
                value,
                cost,
                regret,
                nodes: self.path.clone(),
                times: self.b[1..].to_vec(),
                depot_arrival: arrival,
            },
        );
    }

    /// False if an equal-or-better partial route reached the same empty state.
    fn not_dominated(&mut self, w: usize, mask: u128, time: f64, value: f64) -> bool {
        let entry = self.dominance.entry((w, mask)).or_default();
        if entry.iter().any(|&(t, v)| t <= time + TIME_EPS && v <= value + 1e-12) {
            return false;
        }
        entry.retain(|&(t, v)| !(time <= t + TIME_EPS && value <= v + 1e-12));
        entry.push((time, value));
        true
    }

    fn run(&mut self, budget: &mut Budget) {
        let start_empty = self.start.onboard.is_empty();
        if start_empty {
            self.record_completion(0, 0.0);
        }
        let first = std::mem::take(&mut self.first_succ);
        let mut saved = Vec::new();
        for &w in &first {
            if !self.node_allowed(w, 0) {
                continue;
            }
            if !budget.tick() {
                break;
            }
            if self.push(w, &mut saved) {
                let n = &self.inst.nodes[w];
                let cost = self.inst.graph.network().cost(self.start.stop, n.stop);
                let mask = match n.location {
                    Location::Pickup(_) => n.bit.map_or(0, |b| 1u128 << b),
                    _ => 0,
                };
                let saved_here = saved.clone();
                self.extend(w, mask, cost, budget);
                self.pop(&saved_here);
            }
        }
    }

    fn extend(&mut self, v: usize, mask: u128, arc_cost: f64, budget: &mut Budget) {
        let node = &self.inst.nodes[v];
        if node.onboard.is_empty() {
            let time = *self.b.last().expect("time");
            let value = self.inst.weights.omega1 * arc_cost + self.inst.weights.omega2 * self.regret();
            if !self.not_dominated(v, mask, time, value) {
                return;
            }
            self.record_completion(mask, arc_cost);
        }
        let net = self.inst.graph.network();
        let mut saved = Vec::new();
        for &w in &self.succ[v] {
            if !self.node_allowed(w, mask) {
                continue;
            }
            if !budget.tick() {
                return;
            }
            if self.push(w, &mut saved) {
                let n = &self.inst.nodes[w];
                let add = match n.location {
                    Location::Pickup(_) => n.bit.map_or(0, |b| 1u128 << b),
                    _ => 0,
                };
                let cost = arc_cost + net.cost(self.inst.nodes[v].stop, n.stop);
                let saved_here = saved.clone();
                self.extend(w, mask | add, cost, budget);
                self.pop(&saved_here);
            }
        }
    }
}

impl<'g> MilpInstance<'g> {
    pub fn open_requests(&self) -> &[RequestId] {
        &self.bits
    }

    fn mask_of<'r>(&self, ids: impl IntoIterator<Item = &'r RequestId>) -> u128 {
        ids.into_iter()
            .filter_map(|r| self.bit_of.get(r))
            .fold(0, |m, b| m | (1u128 << b))
    }

    fn successor_lists(&self) -> Vec<Vec<usize>> {
        let mut succ = self.succ.clone();
        if let Some(seed) = self.limits.shuffle_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in &mut succ {
                s.shuffle(&mut rng);
            }
        }
        succ
    }

    fn enumerate(&self, v: usize, allowed: u128, succ: &[Vec<usize>], budget: &mut Budget) -> RouteTable {
        let mut search = Search::new(self, &self.fixings.vehicles[v], allowed, succ);
        search.run(budget);
        search.table
    }

    /// Cheapest combination of one route per vehicle covering the required
    /// requests, as (objective, served mask per vehicle). The outer `None`
    /// means the table limit was hit.
    #[allow(clippy::type_complexity)]
    fn combine(&self, tables: &[&RouteTable], limit: usize) -> Option<Option<(f64, Vec<u128>)>> {
        let required = self.mask_of(&self.fixings.required);
        let optional = self.mask_of(&self.fixings.optional);
        // layers[k]: served mask -> (cost, mask served by vehicle k).
        let mut layers: Vec<BTreeMap<u128, (f64, u128)>> = Vec::with_capacity(tables.len());
        let mut cur: BTreeMap<u128, (f64, u128)> = BTreeMap::from([(0, (0.0, 0))]);
        for table in tables {
            let mut next: BTreeMap<u128, (f64, u128)> = BTreeMap::new();
            for (&m, &(c, _)) in &cur {
                for (&r, cand) in table.iter() {
                    if m & r != 0 {
                        continue;
                    }
                    let total = c + cand.value;
                    let e = next.entry(m | r).or_insert((f64::INFINITY, 0));
                    if total < e.0 - 1e-12 {
                        *e = (total, r);
                    }
                }
                if next.len() > limit {
                    return None;
                }
            }
            layers.push(next.clone());
            cur = next;
        }
        let denial = |m: u128| self.weights.omega3 * (optional & !m).count_ones() as f64;
        let best = cur
            .iter()
            .filter(|(m, _)| *m & required == required)
            .map(|(&m, &(c, _))| (m, c + denial(m)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some((mut m, value)) = best else {
            return Some(None);
        };
        let mut choice = vec![0u128; tables.len()];
        for k in (0..tables.len()).rev() {
            let r = layers[k][&m].1;
            choice[k] = r;
            m &= !r;
        }
        Some(Some((value, choice)))
    }

    fn assemble(&self, tables: &[&RouteTable], choice: &[u128], value: f64, optimal: bool, expansions: u64) -> SubproblemSolution {
        let mut routes = Vec::new();
        let mut covered = 0u128;
        for (v, (&m, table)) in choice.iter().zip(tables).enumerate() {
            covered |= m;
            let cand = &table[&m];
            let events = cand
                .nodes
                .iter()
                .zip(&cand.times)
                .map(|(&w, &t)| PlannedEvent {
                    node: self.nodes[w].node.clone(),
                    stop: self.nodes[w].stop,
                    time: t,
                })
                .collect();
            routes.push(PlannedRoute {
                vehicle: v,
                events,
                cost: cand.cost,
                regret: cand.regret,
                depot_arrival: cand.depot_arrival,
            });
        }
        let accepted: BTreeSet<RequestId> = self
            .bits
            .iter()
            .enumerate()
            .filter(|(b, _)| covered & (1u128 << b) != 0)
            .map(|(_, r)| *r)
            .collect();
        let denied = self.fixings.optional.difference(&accepted).copied().collect();
        SubproblemSolution {
            accepted,
            denied,
            routes,
            objective: value,
            optimal,
            expansions,
        }
    }

    pub fn solve(&self) -> Result<SubproblemSolution> {
        let k = self.fixings.vehicles.len();
        let succ = self.successor_lists();
        let mut budget = Budget {
            expansions: 0,
            max: self.limits.max_expansions,
            deadline: Instant::now() + Duration::from_secs_f64(self.limits.time_limit_s.max(0.0)),
            exhausted: false,
        };
        let all = self.mask_of(&self.bits);
        let optional = self.mask_of(&self.fixings.optional);

        // Warm start: each vehicle keeps its previous requests and may take new ones.
        let mut warm: Vec<RouteTable> = Vec::new();
        if let Some(hints) = &self.fixings.hints {
            let mut warm_budget = Budget {
                expansions: 0,
                max: u64::MAX,
                deadline: budget.deadline + Duration::from_secs(3600),
                exhausted: false,
            };
            for v in 0..k {
                let allowed = hints.get(v).map_or(0, |h| self.mask_of(h)) | optional;
                warm.push(self.enumerate(v, allowed, &succ, &mut warm_budget));
            }
        }

        let mut full: Vec<RouteTable> = Vec::with_capacity(k);
        let mut cache: Vec<(usize, usize)> = Vec::new();
        for v in 0..k {
            let twin = cache.iter().find(|&&(u, _)| self.fixings.vehicles[u] == self.fixings.vehicles[v]);
            match twin {
                Some(&(_, idx)) => {
                    let t = full[idx].clone();
                    full.push(t);
                }
                None => {
                    cache.push((v, full.len()));
                    full.push(self.enumerate(v, all, &succ, &mut budget));
                }
            }
        }
        let mut merged = full;
        for (m, w) in merged.iter_mut().zip(&warm) {
            for (mask, cand) in w {
                if m.get(mask).is_none_or(|c| c.value > cand.value + 1e-12) {
                    m.insert(*mask, cand.clone());
                }
            }
        }
        let expansions = budget.expansions;
        let refs: Vec<&RouteTable> = merged.iter().collect();
        match self.combine(&refs, self.limits.max_combinations) {
            Some(Some((value, choice))) => Ok(self.assemble(&refs, &choice, value, !budget.exhausted, expansions)),
            Some(None) if !budget.exhausted => Err(Error::Infeasible(
                "no combination of routes serves every accepted request".into(),
            )),
            _ => {
                let wrefs: Vec<&RouteTable> = warm.iter().collect();
                match self.combine(&wrefs, usize::MAX) {
                    Some(Some((value, choice))) => Ok(self.assemble(&wrefs, &choice, value, false, expansions)),
                    _ => Err(Error::Infeasible("warm start does not cover the accepted requests".into())),
                }
            }
        }
    }

    /// Writes the mixed-integer formulation in LP text format.
    pub fn write_lp<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = self.graph;
        let net = g.network();
        let window = g.service_window();
        let big_m = window.l0 - window.e0;
        let w = &self.weights;
        let arcs: Vec<(usize, usize)> = self
            .succ
            .iter()
            .enumerate()
            .flat_map(|(v, ws)| ws.iter().map(move |&x| (v, x)))
            .collect();
        let depot = self.node_index[&EventNode::depot()];
        writeln!(out, "\\ event-graph subproblem, clock {}", self.fixings.clock)?;
        for (v, veh) in self.fixings.vehicles.iter().enumerate() {
            if !veh.event.is_depot() || !veh.onboard.is_empty() {
                writeln!(
                    out,
                    "\\ vehicle {v} committed at {} (stop {}, B = {}), on board {:?}",
                    veh.event.render(g.capacity() as usize),
                    veh.stop,
                    veh.time,
                    veh.onboard
                )?;
            }
        }
        let mut offset = 0.0;
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        for (a, &(v, x)) in arcs.iter().enumerate() {
            write!(out, " + {} x{a}", w.omega1 * net.cost(self.nodes[v].stop, self.nodes[x].stop))?;
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if matches!(n.location, Location::Dropoff(_)) {
                write!(out, " + {} B{i}", w.omega2)?;
                offset -= w.omega2 * n.event.lo;
            }
        }
        for r in &self.fixings.optional {
            write!(out, " - {} p{r}", w.omega3)?;
            offset += w.omega3;
        }
        writeln!(out)?;
        writeln!(out, "\\ constant offset {offset}")?;
        writeln!(out, "Subject To")?;
        let inflow = |i: usize| -> Vec<usize> { arcs.iter().enumerate().filter(|(_, a)| a.1 == i).map(|(k, _)| k).collect() };
        let outflow = |i: usize| -> Vec<usize> { arcs.iter().enumerate().filter(|(_, a)| a.0 == i).map(|(k, _)| k).collect() };
        let terms = |ks: &[usize], sign: &str| ks.iter().map(|k| format!(" {sign} x{k}")).collect::<String>();
        for i in 0..self.nodes.len() {
            if i == depot {
                continue;
            }
            writeln!(out, " flow{i}:{}{} = 0", terms(&inflow(i), "+"), terms(&outflow(i), "-"))?;
        }
        writeln!(out, " fleet:{} <= {}", terms(&outflow(depot), "+"), self.fixings.vehicles.len())?;
        for r in &self.bits {
            let picks: Vec<usize> = (0..self.nodes.len())
                .filter(|&i| self.nodes[i].location == Location::Pickup(*r))
                .flat_map(inflow)
                .collect();
            let rhs = if self.fixings.required.contains(r) { " = 1".to_string() } else { format!(" - p{r} = 0") };
            writeln!(out, " accept{r}:{}{rhs}", terms(&picks, "+"))?;
        }
        for (a, &(v, x)) in arcs.iter().enumerate() {
            let nv = &self.nodes[v];
            let t = net.time(nv.stop, self.nodes[x].stop);
            if x == depot {
                if v != depot {
                    writeln!(out, " ret{a}: B{v} + {big_m} x{a} <= {}", window.l0 - nv.event.service - t + big_m)?;
                }
            } else if v == depot {
                writeln!(out, " start{a}: B{x} - {big_m} x{a} >= {}", self.fixings.clock + t - big_m)?;
            } else {
                writeln!(out, " time{a}: B{x} - B{v} - {big_m} x{a} >= {}", nv.event.service + t - big_m)?;
            }
        }
        for (pi, p) in self.nodes.iter().enumerate() {
            let Location::Pickup(r) = p.location else { continue };
            let q = &g.requests()[&r];
            for (di, d) in self.nodes.iter().enumerate() {
                if d.location != Location::Dropoff(r) {
                    continue;
                }
                let both: Vec<usize> = inflow(pi).into_iter().chain(inflow(di)).collect();
                writeln!(
                    out,
                    " ride{pi}_{di}: B{di} - B{pi}{} <= {}",
                    terms(&both, &format!("+ {big_m}")),
                    q.service + q.max_ride + 2.0 * big_m
                )?;
            }
        }
        writeln!(out, "Bounds")?;
        for (i, n) in self.nodes.iter().enumerate() {
            if i != depot {
                writeln!(out, " {} <= B{i} <= {}", n.event.lo, n.event.hi)?;
            }
        }
        writeln!(out, "Binaries")?;
        for a in 0..arcs.len() {
            writeln!(out, " x{a}")?;
        }
        for r in &self.fixings.optional {
            writeln!(out, " p{r}")?;
        }
        writeln!(out, "End")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_graph::HeuristicConfig;
    use crate::network::{Stop, StopNetwork};
    use crate::request_model::{Request, ServiceWindow};
    use std::sync::Arc;

    fn line(n: u32) -> Arc<StopNetwork> {
        let stops = (0..n)
            .map(|i| Stop {
                id: i,
                name: String::new(),
                x_km: i as f64,
                y_km: 0.0,
            })
            .collect();
        Arc::new(StopNetwork::from_coordinates(stops, 1.0).unwrap())
    }

    fn req(id: RequestId, p: StopId, d: StopId, e: f64, net: &StopNetwork) -> Request {
        let direct = net.time(p, d);
        let max_ride = (2.0 * direct).max(direct + 10.0);
        Request {
            id,
            pickup: p,
            dropoff: d,
            group_size: 1,
            reveal_time: e - 0.75,
            e_pick: e,
            l_pick: e + 25.0,
            e_drop: e + 0.75 + direct,
            l_drop: e + 25.0 + 0.75 + max_ride,
            service: 0.75,
            max_ride,
            direct_time: direct,
        }
    }

    fn graph(net: &Arc<StopNetwork>, reqs: Vec<Request>) -> EventGraph {
        let mut g = EventGraph::new(net.clone(), 6, ServiceWindow::default());
        for r in reqs {
            g.add_request(r, &HeuristicConfig::disabled()).unwrap();
        }
        g
    }

    fn solve(g: &EventGraph, k: usize, w: Weights) -> SubproblemSolution {
        build_instance(g, Fixings::fresh(g, k, 0.0), w, 10.0, SolveLimits::default())
            .unwrap()
            .solve()
            .unwrap()
    }

    #[test]
    fn single_request_is_served_at_earliest_time() {
        let net = line(4);
        let g = graph(&net, vec![req(1, 1, 3, 5.0, &net)]);
        let w = Weights {
            omega3: 1e4,
            ..Default::default()
        };
        let s = solve(&g, 1, w);
        assert!(s.optimal);
        assert_eq!(s.accepted, BTreeSet::from([1]));
        assert_eq!(s.pickup_time(1), Some(5.0));
        let expected = net.cost(0, 1) + net.cost(1, 3) + net.cost(3, 0);
        assert!((s.objective - expected).abs() < 1e-9);
    }

    #[test]
    fn no_vehicles_denies_everything() {
        let net = line(4);
        let g = graph(&net, vec![req(1, 1, 3, 5.0, &net), req(2, 2, 3, 6.0, &net)]);
        let s = solve(&g, 0, Weights::default());
        assert!(s.accepted.is_empty());
        assert!((s.objective - 2.0 * Weights::default().omega3).abs() < 1e-9);
    }

    #[test]
    fn zero_denial_weight_denies_everything() {
        let net = line(4);
        let g = graph(&net, vec![req(1, 1, 3, 5.0, &net)]);
        let s = solve(
            &g,
            2,
            Weights {
                omega3: 0.0,
                ..Default::default()
            },
        );
        assert!(s.accepted.is_empty());
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn incompatible_requests_one_vehicle_serves_cheaper() {
        let net = line(12);
        // Simultaneous requests in opposite far-apart directions.
        let a = req(1, 1, 2, 0.0, &net);
        let mut b = req(2, 11, 9, 0.0, &net);
        b.l_pick = 1.0;
        b.l_drop = b.e_drop + 1.0;
        let g = graph(&net, vec![a, b]);
        let s = solve(
            &g,
            1,
            Weights {
                omega3: 1e4,
                ..Default::default()
            },
        );
        assert_eq!(s.accepted.len(), 1);
        assert!(s.accepted.contains(&1));
    }

    #[test]
    fn shuffled_successors_give_same_objective() {
        let net = line(6);
        let reqs: Vec<Request> = (1..=5).map(|i| req(i, i % 5 + 1, (i + 2) % 5 + 1, i as f64 * 2.0, &net)).collect();
        let g = graph(&net, reqs);
        let base = solve(&g, 2, Weights::default());
        assert!(base.optimal);
        for seed in 0..3 {
            let lim = SolveLimits {
                shuffle_seed: Some(seed),
                ..Default::default()
            };
            let s = build_instance(&g, Fixings::fresh(&g, 2, 0.0), Weights::default(), 10.0, lim)
                .unwrap()
                .solve()
                .unwrap();
            assert!((s.objective - base.objective).abs() < 1e-6);
        }
    }

    #[test]
    fn inconsistent_fixings_are_rejected() {
        let net = line(4);
        let g = graph(&net, vec![req(1, 1, 3, 5.0, &net)]);
        let mut f = Fixings::fresh(&g, 1, 0.0);
        f.required.insert(1);
        assert!(matches!(
            build_instance(&g, f, Weights::default(), 10.0, SolveLimits::default()),
            Err(Error::InconsistentFixing(_))
        ));
        let mut f = Fixings::fresh(&g, 1, 0.0);
        f.optional.clear();
        assert!(matches!(
            build_instance(&g, f, Weights::default(), 10.0, SolveLimits::default()),
            Err(Error::InconsistentFixing(_))
        ));
        let mut f = Fixings::fresh(&g, 1, 0.0);
        f.denied.insert(1);
        assert!(build_instance(&g, f, Weights::default(), 10.0, SolveLimits::default()).is_err());
    }

    #[test]
    fn lp_dump_mentions_every_arc() {
        let net = line(4);
        let g = graph(&net, vec![req(1, 1, 3, 5.0, &net), req(2, 1, 3, 6.0, &net)]);
        let inst = build_instance(&g, Fixings::fresh(&g, 2, 0.0), Weights::default(), 10.0, SolveLimits::default()).unwrap();
        let mut buf = Vec::new();
        inst.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("\\ event-graph"));
        assert!(text.contains("fleet:"));
        assert!(text.trim_end().ends_with("End"));
        assert_eq!(text.matches(" time").count() + text.matches(" start").count() + text.matches(" ret").count(), g.arc_count());
    }
}
