//! Dynamic event-based graph.
//!
//! A node is a vehicle event (depot, pick-up or drop-off) together with the
//! set of requests on board after the event. Arcs connect events whose
//! on-board sets differ by exactly the action of the target event. Combined
//! allocations are only created for pairs of requests, from a trimmed list
//! of pairwise interleavings scored by spatial and temporal proximity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{StopId, StopNetwork, DEPOT};
use crate::request_model::{Request, RequestId, ServiceWindow};
use crate::schedule::{least_schedule, RideLimit, TimedEvent, TIME_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    Depot,
    Pickup(RequestId),
    Dropoff(RequestId),
}

impl Location {
    pub fn request(self) -> Option<RequestId> {
        match self {
            Location::Depot => None,
            Location::Pickup(r) | Location::Dropoff(r) => Some(r),
        }
    }
}

/// An event plus the requests on board besides the event's own request.
///
/// After a pick-up of `r` the vehicle carries `others ∪ {r}`; after a
/// drop-off of `r` it carries `others`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventNode {
    pub location: Location,
    pub others: Vec<RequestId>,
}

impl EventNode {
    pub fn depot() -> Self {
        EventNode {
            location: Location::Depot,
            others: Vec::new(),
        }
    }

    pub fn new(location: Location, mut others: Vec<RequestId>) -> Self {
        others.sort_unstable();
        others.dedup();
        EventNode { location, others }
    }

    pub fn pickup(r: RequestId, others: &[RequestId]) -> Self {
        EventNode::new(Location::Pickup(r), others.to_vec())
    }

    pub fn dropoff(r: RequestId, others: &[RequestId]) -> Self {
        EventNode::new(Location::Dropoff(r), others.to_vec())
    }

    pub fn is_depot(&self) -> bool {
        self.location == Location::Depot
    }

    /// Sorted on-board set after the event.
    pub fn onboard(&self) -> Vec<RequestId> {
        match self.location {
            Location::Pickup(r) => {
                let mut v = self.others.clone();
                let pos = v.binary_search(&r).unwrap_or_else(|p| p);
                v.insert(pos, r);
                v
            }
            _ => self.others.clone(),
        }
    }

    pub fn references(&self, r: RequestId) -> bool {
        self.location.request() == Some(r) || self.others.contains(&r)
    }

    /// Tuple rendering padded with zeros to `capacity` entries, e.g. `(2+,1,0)`.
    pub fn render(&self, capacity: usize) -> String {
        let mut parts = vec![match self.location {
            Location::Depot => "0".to_string(),
            Location::Pickup(r) => format!("{r}+"),
            Location::Dropoff(r) => format!("{r}-"),
        }];
        parts.extend(self.others.iter().map(|r| r.to_string()));
        while parts.len() < capacity.max(1) {
            parts.push("0".into());
        }
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for EventNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(self.others.len() + 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventArc {
    pub from: EventNode,
    pub to: EventNode,
    pub cost: f64,
    pub time: f64,
}

/// The four ways of interleaving an existing request `j` with a new request `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PathKind {
    /// j+ → i+ → j− → i−
    ExistingFirstInterleaved,
    /// j+ → i+ → i− → j−
    ExistingFirstNested,
    /// i+ → j+ → i− → j−
    NewFirstInterleaved,
    /// i+ → j+ → j− → i−
    NewFirstNested,
}

impl PathKind {
    pub const ALL: [PathKind; 4] = [
        PathKind::ExistingFirstInterleaved,
        PathKind::ExistingFirstNested,
        PathKind::NewFirstInterleaved,
        PathKind::NewFirstNested,
    ];

    /// Event sequence of the path for new request `i` and existing request `j`.
    pub fn sequence(self, i: RequestId, j: RequestId) -> [Location; 4] {
        use Location::{Dropoff as D, Pickup as P};
        match self {
            PathKind::ExistingFirstInterleaved => [P(j), P(i), D(j), D(i)],
            PathKind::ExistingFirstNested => [P(j), P(i), D(i), D(j)],
            PathKind::NewFirstInterleaved => [P(i), P(j), D(i), D(j)],
            PathKind::NewFirstNested => [P(i), P(j), D(j), D(i)],
        }
    }

    /// The two shared-ride nodes the path passes through.
    pub fn implied_nodes(self, i: RequestId, j: RequestId) -> [EventNode; 2] {
        let seq = self.sequence(i, j);
        let first = seq[0].request().expect("pick-up");
        let second = seq[1].request().expect("pick-up");
        let third = seq[2].request().expect("drop-off");
        let survivor = if third == first { second } else { first };
        [
            EventNode::pickup(second, &[first]),
            EventNode::dropoff(third, &[survivor]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProximityAggregation {
    Sum,
    Lexicographic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub rho_abs: usize,
    pub rho_rel: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub aggregation: ProximityAggregation,
    /// Use `t(j+, i+)` instead of the printed `t(i+, j+)` in the temporal score.
    pub swap_first_leg: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            rho_abs: 10,
            rho_rel: 0.25,
            omega1: 1.0,
            omega2: 1.0,
            aggregation: ProximityAggregation::Sum,
            swap_first_leg: false,
        }
    }
}

impl HeuristicConfig {
    /// Keeps every feasible path.
    pub fn disabled() -> Self {
        HeuristicConfig {
            rho_abs: usize::MAX,
            rho_rel: 1.0,
            ..Default::default()
        }
    }

    /// Number of paths kept out of `rho_i` feasible ones.
    pub fn kept_count(&self, rho_i: usize) -> usize {
        let rel = (self.rho_rel * rho_i as f64 - 1e-9).ceil().max(0.0) as usize;
        self.rho_abs.max(rel).min(rho_i)
    }
}

fn event_window(r: &Request, loc: Location) -> (StopId, TimedEvent) {
    match loc {
        Location::Pickup(_) => (
            r.pickup,
            TimedEvent {
                lo: r.e_pick,
                hi: r.l_pick,
                service: r.service,
            },
        ),
        Location::Dropoff(_) => (
            r.dropoff,
            TimedEvent {
                lo: r.e_drop,
                hi: r.l_drop,
                service: r.service,
            },
        ),
        Location::Depot => unreachable!("paths contain no depot"),
    }
}

fn lookup<'a>(loc: Location, i: &'a Request, j: &'a Request) -> &'a Request {
    if loc.request() == Some(i.id) {
        i
    } else {
        j
    }
}

/// Least schedule of a pairwise path, or `None` if it violates windows or ride limits.
pub fn path_schedule(kind: PathKind, i: &Request, j: &Request, net: &StopNetwork) -> Option<Vec<f64>> {
    let seq = kind.sequence(i.id, j.id);
    let mut stops = [0; 4];
    let mut events = [TimedEvent {
        lo: 0.0,
        hi: 0.0,
        service: 0.0,
    }; 4];
    for (k, &loc) in seq.iter().enumerate() {
        (stops[k], events[k]) = event_window(lookup(loc, i, j), loc);
    }
    let travel = [
        net.time(stops[0], stops[1]),
        net.time(stops[1], stops[2]),
        net.time(stops[2], stops[3]),
    ];
    let pos = |loc: Location| seq.iter().position(|&l| l == loc).expect("event in path");
    let rides: Vec<RideLimit> = [i, j]
        .iter()
        .map(|r| RideLimit {
            pick: pos(Location::Pickup(r.id)),
            drop: pos(Location::Dropoff(r.id)),
            max_ride: r.max_ride,
        })
        .collect();
    least_schedule(&events, &travel, &rides)
}

pub fn path_feasible(kind: PathKind, i: &Request, j: &Request, net: &StopNetwork) -> bool {
    i.id != j.id && path_schedule(kind, i, j, net).is_some()
}

/// Feasibility of j+ → i+ → j− → i− and j+ → i+ → i− → j−.
pub fn pairwise_feasible(i: &Request, j: &Request, net: &StopNetwork) -> (bool, bool) {
    (
        path_feasible(PathKind::ExistingFirstInterleaved, i, j, net),
        path_feasible(PathKind::ExistingFirstNested, i, j, net),
    )
}

fn path_stops(kind: PathKind, i: &Request, j: &Request) -> [StopId; 4] {
    kind.sequence(i.id, j.id).map(|loc| event_window(lookup(loc, i, j), loc).0)
}

pub fn spatial_proximity(kind: PathKind, i: &Request, j: &Request, net: &StopNetwork, omega1: f64) -> f64 {
    if !path_feasible(kind, i, j, net) {
        return f64::INFINITY;
    }
    let s = path_stops(kind, i, j);
    omega1 * (net.cost(s[0], s[1]) + net.cost(s[1], s[2]) + net.cost(s[2], s[3]))
}

/// Temporal proximity; for j+ → i+ → j− → i− this is
/// `ω2 (2 (max(e_i+, e_j+ + s_j + t_{i+ j+}) + s_i + t_{i+ j−}) − e_j− + s_j + t_{j− i−} − e_i−)`,
/// and the other kinds substitute their own event order.
pub fn temporal_proximity(
    kind: PathKind,
    i: &Request,
    j: &Request,
    net: &StopNetwork,
    omega2: f64,
    swap_first_leg: bool,
) -> f64 {
    if !path_feasible(kind, i, j, net) {
        return f64::INFINITY;
    }
    let seq = kind.sequence(i.id, j.id);
    let ev: Vec<(StopId, TimedEvent)> = seq.iter().map(|&l| event_window(lookup(l, i, j), l)).collect();
    let (a, b, x, y) = (ev[0], ev[1], ev[2], ev[3]);
    let first_leg = if swap_first_leg {
        net.time(a.0, b.0)
    } else {
        net.time(b.0, a.0)
    };
    let reach = b.1.lo.max(a.1.lo + a.1.service + first_leg) + b.1.service + net.time(b.0, x.0);
    omega2 * (2.0 * reach - x.1.lo + x.1.service + net.time(x.0, y.0) - y.1.lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub partner: RequestId,
    pub kind: PathKind,
    pub spatial: f64,
    pub temporal: f64,
}

impl ScoredPath {
    pub fn score(&self) -> f64 {
        self.spatial + self.temporal
    }
}

/// All feasible, capacity-respecting paths pairing `i` with the current requests, scored.
pub fn candidate_paths<'a>(
    i: &Request,
    current: impl IntoIterator<Item = &'a Request>,
    cfg: &HeuristicConfig,
    net: &StopNetwork,
    capacity: u32,
) -> Vec<ScoredPath> {
    let mut out = Vec::new();
    for j in current {
        if j.id == i.id || i.group_size + j.group_size > capacity {
            continue;
        }
        for kind in PathKind::ALL {
            if path_feasible(kind, i, j, net) {
                out.push(ScoredPath {
                    partner: j.id,
                    kind,
                    spatial: spatial_proximity(kind, i, j, net, cfg.omega1),
                    temporal: temporal_proximity(kind, i, j, net, cfg.omega2, cfg.swap_first_leg),
                });
            }
        }
    }
    out
}

/// Sorts scored paths best first and keeps `cfg.kept_count(len)` of them.
pub fn trim_paths(mut paths: Vec<ScoredPath>, cfg: &HeuristicConfig) -> Vec<ScoredPath> {
    let key = |p: &ScoredPath| match cfg.aggregation {
        ProximityAggregation::Sum => (p.score(), 0.0),
        ProximityAggregation::Lexicographic => (p.spatial, p.temporal),
    };
    paths.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.partner.cmp(&b.partner))
            .then(a.kind.cmp(&b.kind))
    });
    paths.truncate(cfg.kept_count(paths.len()));
    paths
}

pub fn select_feasible_paths<'a>(
    i: &Request,
    current: impl IntoIterator<Item = &'a Request>,
    cfg: &HeuristicConfig,
    net: &StopNetwork,
    capacity: u32,
) -> Vec<ScoredPath> {
    trim_paths(candidate_paths(i, current, cfg, net, capacity), cfg)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphDelta {
    pub nodes_added: Vec<EventNode>,
    pub nodes_removed: Vec<EventNode>,
    pub arcs_added: usize,
    pub arcs_removed: usize,
}

#[derive(Debug, Clone)]
pub struct EventGraph {
    net: Arc<StopNetwork>,
    capacity: u32,
    window: ServiceWindow,
    requests: BTreeMap<RequestId, Request>,
    succ: BTreeMap<EventNode, BTreeSet<EventNode>>,
    pred: BTreeMap<EventNode, BTreeSet<EventNode>>,
}

impl EventGraph {
    pub fn new(net: Arc<StopNetwork>, capacity: u32, window: ServiceWindow) -> Self {
        let mut g = EventGraph {
            net,
            capacity,
            window,
            requests: BTreeMap::new(),
            succ: BTreeMap::new(),
            pred: BTreeMap::new(),
        };
        g.succ.insert(EventNode::depot(), BTreeSet::new());
        g.pred.insert(EventNode::depot(), BTreeSet::new());
        g
    }

    pub fn network(&self) -> &StopNetwork {
        &self.net
    }

    pub fn network_arc(&self) -> &Arc<StopNetwork> {
        &self.net
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn service_window(&self) -> ServiceWindow {
        self.window
    }

    pub fn requests(&self) -> &BTreeMap<RequestId, Request> {
        &self.requests
    }

    pub fn request(&self, id: RequestId) -> Option<&Request> {
        self.requests.get(&id)
    }

    pub fn contains_request(&self, id: RequestId) -> bool {
        self.requests.contains_key(&id)
    }

    pub fn contains_node(&self, n: &EventNode) -> bool {
        self.succ.contains_key(n)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &EventNode> {
        self.succ.keys()
    }

    pub fn node_count(&self) -> usize {
        self.succ.len()
    }

    pub fn arc_count(&self) -> usize {
        self.succ.values().map(BTreeSet::len).sum()
    }

    pub fn successors(&self, n: &EventNode) -> impl Iterator<Item = &EventNode> {
        self.succ.get(n).into_iter().flatten()
    }

    pub fn arc_pairs(&self) -> impl Iterator<Item = (&EventNode, &EventNode)> {
        self.succ.iter().flat_map(|(v, ws)| ws.iter().map(move |w| (v, w)))
    }

    pub fn arcs(&self) -> Vec<EventArc> {
        self.arc_pairs()
            .map(|(v, w)| {
                let (a, b) = (self.stop_of(v), self.stop_of(w));
                EventArc {
                    from: v.clone(),
                    to: w.clone(),
                    cost: self.net.cost(a, b),
                    time: self.net.time(a, b),
                }
            })
            .collect()
    }

    pub fn stop_of(&self, n: &EventNode) -> StopId {
        match n.location {
            Location::Depot => DEPOT,
            Location::Pickup(r) => self.requests[&r].pickup,
            Location::Dropoff(r) => self.requests[&r].dropoff,
        }
    }

    /// Time window and service duration of a node.
    pub fn timing_of(&self, n: &EventNode) -> TimedEvent {
        match n.location {
            Location::Depot => TimedEvent {
                lo: self.window.e0,
                hi: self.window.l0,
                service: 0.0,
            },
            loc => event_window(&self.requests[&loc.request().expect("request")], loc).1,
        }
    }

    pub fn load_of(&self, onboard: &[RequestId]) -> u32 {
        onboard.iter().map(|r| self.requests[r].group_size).sum()
    }

    /// Whether `w` may directly follow `v` in a route.
    pub fn transition_allowed(&self, v: &EventNode, w: &EventNode) -> bool {
        let sv = v.onboard();
        let consistent = match (v.location, w.location) {
            (_, Location::Depot) => !v.is_depot() && sv.is_empty(),
            (Location::Depot, Location::Pickup(_)) => w.others.is_empty(),
            (Location::Depot, Location::Dropoff(_)) => false,
            (from, Location::Pickup(k)) => from != Location::Dropoff(k) && !sv.contains(&k) && w.others == sv,
            (_, Location::Dropoff(k)) => {
                sv.contains(&k) && w.others.len() + 1 == sv.len() && w.others.iter().all(|r| *r != k && sv.contains(r))
            }
        };
        if !consistent {
            return false;
        }
        let (tv, tw) = (self.timing_of(v), self.timing_of(w));
        tv.lo + tv.service + self.net.time(self.stop_of(v), self.stop_of(w)) <= tw.hi + TIME_EPS
    }

    fn node_valid(&self, n: &EventNode) -> bool {
        let onboard = n.onboard();
        onboard.iter().all(|r| self.requests.contains_key(r))
            && n.location.request().is_none_or(|r| self.requests.contains_key(&r))
            && self.load_of(&onboard) <= self.capacity
    }

    fn add_node(&mut self, n: EventNode, delta: &mut GraphDelta) {
        if self.succ.contains_key(&n) || !self.node_valid(&n) {
            return;
        }
        self.succ.insert(n.clone(), BTreeSet::new());
        self.pred.insert(n.clone(), BTreeSet::new());
        delta.nodes_added.push(n);
    }

    fn connect_new_nodes(&mut self, delta: &mut GraphDelta) {
        let all: Vec<EventNode> = self.succ.keys().cloned().collect();
        let fresh: BTreeSet<&EventNode> = delta.nodes_added.iter().collect();
        let mut new_arcs = Vec::new();
        for n in &delta.nodes_added {
            for m in &all {
                if self.transition_allowed(m, n) {
                    new_arcs.push((m.clone(), n.clone()));
                }
                if !fresh.contains(m) && self.transition_allowed(n, m) {
                    new_arcs.push((n.clone(), m.clone()));
                }
            }
        }
        for (v, w) in new_arcs {
            if self.succ.get_mut(&v).expect("node").insert(w.clone()) {
                self.pred.get_mut(&w).expect("node").insert(v);
                delta.arcs_added += 1;
            }
        }
    }

    /// Adds request `i` with its solo nodes and the shared nodes implied by `kept`.
    pub fn insert_request(&mut self, i: Request, kept: &[(RequestId, PathKind)]) -> Result<GraphDelta> {
        if self.requests.contains_key(&i.id) {
            return Err(Error::DuplicateRequest(i.id));
        }
        if let Some(&(j, _)) = kept.iter().find(|(j, _)| !self.requests.contains_key(j)) {
            return Err(Error::UnknownRequest(j));
        }
        let id = i.id;
        self.requests.insert(id, i);
        let mut delta = GraphDelta::default();
        self.add_node(EventNode::pickup(id, &[]), &mut delta);
        self.add_node(EventNode::dropoff(id, &[]), &mut delta);
        for &(j, kind) in kept {
            for n in kind.implied_nodes(id, j) {
                self.add_node(n, &mut delta);
            }
        }
        self.connect_new_nodes(&mut delta);
        Ok(delta)
    }

    /// Scores pairings with the requests already present, trims them, and inserts `i`.
    pub fn add_request(&mut self, i: Request, cfg: &HeuristicConfig) -> Result<(GraphDelta, Vec<ScoredPath>)> {
        if self.requests.contains_key(&i.id) {
            return Err(Error::DuplicateRequest(i.id));
        }
        let kept = select_feasible_paths(&i, self.requests.values(), cfg, &self.net, self.capacity);
        let pairs: Vec<(RequestId, PathKind)> = kept.iter().map(|p| (p.partner, p.kind)).collect();
        Ok((self.insert_request(i, &pairs)?, kept))
    }

    fn remove_nodes(&mut self, doomed: &[EventNode], delta: &mut GraphDelta) {
        for n in doomed {
            if let Some(out) = self.succ.remove(n) {
                for w in &out {
                    if let Some(p) = self.pred.get_mut(w) {
                        p.remove(n);
                    }
                }
                delta.arcs_removed += out.len();
            }
            if let Some(inc) = self.pred.remove(n) {
                for v in &inc {
                    if let Some(s) = self.succ.get_mut(v) {
                        if s.remove(n) {
                            delta.arcs_removed += 1;
                        }
                    }
                }
            }
            delta.nodes_removed.push(n.clone());
        }
    }

    pub fn remove_request(&mut self, id: RequestId) -> Result<GraphDelta> {
        if self.requests.remove(&id).is_none() {
            return Err(Error::UnknownRequest(id));
        }
        let doomed: Vec<EventNode> = self.succ.keys().filter(|n| n.references(id)).cloned().collect();
        let mut delta = GraphDelta::default();
        self.remove_nodes(&doomed, &mut delta);
        Ok(delta)
    }

    fn reach(&self, forward: bool) -> BTreeSet<EventNode> {
        let adj = if forward { &self.succ } else { &self.pred };
        let mut seen = BTreeSet::from([EventNode::depot()]);
        let mut stack = vec![EventNode::depot()];
        while let Some(v) = stack.pop() {
            for w in adj.get(&v).into_iter().flatten() {
                if seen.insert(w.clone()) {
                    stack.push(w.clone());
                }
            }
        }
        seen
    }

    /// Nodes not on any depot-to-depot path.
    pub fn dead_nodes(&self) -> Vec<EventNode> {
        let fwd = self.reach(true);
        let bwd = self.reach(false);
        self.succ
            .keys()
            .filter(|n| !(fwd.contains(*n) && bwd.contains(*n)))
            .cloned()
            .collect()
    }

    /// Removes nodes that no depot-to-depot path can use, except those in `keep`.
    pub fn prune(&mut self, keep: &BTreeSet<EventNode>) -> GraphDelta {
        let doomed: Vec<EventNode> = self.dead_nodes().into_iter().filter(|n| !keep.contains(n)).collect();
        let mut delta = GraphDelta::default();
        self.remove_nodes(&doomed, &mut delta);
        delta
    }

    /// Sorted `from -> to` edge list with nodes rendered as capacity-length tuples.
    pub fn dump_text(&self) -> String {
        let q = self.capacity as usize;
        let mut lines: Vec<String> = self
            .arc_pairs()
            .map(|(v, w)| format!("{} -> {}", v.render(q), w.render(q)))
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
