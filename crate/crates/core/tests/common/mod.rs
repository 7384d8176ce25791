//! Shared fixtures and independent oracles for integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::network::{Stop, StopNetwork, StopId, DEPOT};
use ridepool::request_model::{Request, RequestId};
use ridepool::subproblem_solver::Weights;

pub fn stop(id: StopId, x: f64, y: f64) -> Stop {
    Stop {
        id,
        name: format!("s{id}"),
        x_km: x,
        y_km: y,
    }
}

/// Random planar network with the depot near the middle.
pub fn random_network(rng: &mut ChaCha8Rng, n_stops: u32, extent: f64) -> Arc<StopNetwork> {
    let mut stops = vec![stop(DEPOT, extent / 2.0, extent / 2.0)];
    for id in 1..=n_stops {
        stops.push(stop(id, rng.random::<f64>() * extent, rng.random::<f64>() * extent));
    }
    Arc::new(StopNetwork::from_coordinates(stops, 1.3).unwrap())
}

/// Request with the standard window rules and a random earliest pick-up.
pub fn make_request(id: RequestId, p: StopId, d: StopId, e_pick: f64, group: u32, net: &StopNetwork) -> Request {
    let direct = net.time(p, d);
    let max_ride = (2.0 * direct).max(direct + 10.0);
    let l_pick = e_pick + 25.0;
    Request {
        id,
        pickup: p,
        dropoff: d,
        group_size: group,
        reveal_time: e_pick - 0.75,
        e_pick,
        l_pick,
        e_drop: e_pick + 0.75 + direct,
        l_drop: l_pick + 0.75 + max_ride,
        service: 0.75,
        max_ride,
        direct_time: direct,
    }
}

pub fn random_requests(rng: &mut ChaCha8Rng, net: &StopNetwork, n: usize, horizon: f64, groups: &[u32]) -> Vec<Request> {
    let n_stops = net.service_stops().len() as u32;
    let mut out: Vec<Request> = (0..n)
        .map(|_| {
            let p = rng.random_range(1..=n_stops);
            let mut d = rng.random_range(1..=n_stops);
            while d == p {
                d = rng.random_range(1..=n_stops);
            }
            let e = (rng.random::<f64>() * horizon).floor();
            let g = groups[rng.random_range(0..groups.len())];
            (p, d, e, g)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, (p, d, e, g))| make_request(i as RequestId + 1, p, d, e, g, net))
        .collect();
    out.sort_by(|a, b| a.e_pick.total_cmp(&b.e_pick).then(a.id.cmp(&b.id)));
    for (i, r) in out.iter_mut().enumerate() {
        r.id = i as RequestId + 1;
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy)]
struct Ev {
    req: usize,
    pick: bool,
}

/// Longest-path timing by Bellman-Ford on the difference-constraint graph.
/// Returns the least service-start times, or None if infeasible.
fn bellman_ford_times(seq: &[Ev], reqs: &[&Request], net: &StopNetwork, clock: f64, l0: f64) -> Option<Vec<f64>> {
    let n = seq.len();
    let stop = |e: &Ev| if e.pick { reqs[e.req].pickup } else { reqs[e.req].dropoff };
    let lo = |e: &Ev| if e.pick { reqs[e.req].e_pick } else { reqs[e.req].e_drop };
    let hi = |e: &Ev| if e.pick { reqs[e.req].l_pick } else { reqs[e.req].l_drop };
    // Edges (from, to, weight) meaning B[to] >= B[from] + weight; node n is the origin at time 0.
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (k, e) in seq.iter().enumerate() {
        edges.push((n, k, lo(e)));
    }
    edges.push((n, 0, clock + net.time(DEPOT, stop(&seq[0]))));
    for k in 1..n {
        let s = reqs[seq[k - 1].req].service;
        edges.push((k - 1, k, s + net.time(stop(&seq[k - 1]), stop(&seq[k]))));
    }
    for (k, e) in seq.iter().enumerate() {
        if e.pick {
            let d = seq.iter().position(|x| !x.pick && x.req == e.req).unwrap();
            let r = reqs[e.req];
            edges.push((d, k, -(r.service + r.max_ride)));
        }
    }
    let mut b = vec![f64::NEG_INFINITY; n + 1];
    b[n] = 0.0;
    for round in 0..=n + 1 {
        let mut changed = false;
        for &(f, t, w) in &edges {
            if b[f] > f64::NEG_INFINITY && b[f] + w > b[t] + 1e-12 {
                b[t] = b[f] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        if round == n + 1 {
            return None;
        }
    }
    for (k, e) in seq.iter().enumerate() {
        if b[k] > hi(e) + 1e-9 {
            return None;
        }
    }
    let last = &seq[n - 1];
    if b[n - 1] + reqs[last.req].service + net.time(stop(last), DEPOT) > l0 + 1e-9 {
        return None;
    }
    b.truncate(n);
    Some(b)
}

fn permutations(reqs: &[&Request], capacity: u32, out: &mut Vec<Vec<Ev>>, cur: &mut Vec<Ev>, state: &mut Vec<u8>) {
    if cur.len() == 2 * reqs.len() {
        out.push(cur.clone());
        return;
    }
    let load: u32 = (0..reqs.len()).filter(|&i| state[i] == 1).map(|i| reqs[i].group_size).sum();
    for i in 0..reqs.len() {
        match state[i] {
            0 if load + reqs[i].group_size <= capacity => {
                state[i] = 1;
                cur.push(Ev { req: i, pick: true });
                permutations(reqs, capacity, out, cur, state);
                cur.pop();
                state[i] = 0;
            }
            1 => {
                state[i] = 2;
                cur.push(Ev { req: i, pick: false });
                permutations(reqs, capacity, out, cur, state);
                cur.pop();
                state[i] = 1;
            }
            _ => {}
        }
    }
}

/// Best single-vehicle value (ω1·km + ω2·regret) for serving exactly `reqs`
/// from the depot, or None if impossible.
pub fn best_single_route(reqs: &[&Request], net: &StopNetwork, capacity: u32, w: &Weights, clock: f64, l0: f64) -> Option<f64> {
    if reqs.is_empty() {
        return Some(0.0);
    }
    let mut seqs = Vec::new();
    permutations(reqs, capacity, &mut seqs, &mut Vec::new(), &mut vec![0; reqs.len()]);
    let mut best: Option<f64> = None;
    for seq in seqs {
        let Some(b) = bellman_ford_times(&seq, reqs, net, clock, l0) else { continue };
        let stop = |e: &Ev| if e.pick { reqs[e.req].pickup } else { reqs[e.req].dropoff };
        let mut km = net.cost(DEPOT, stop(&seq[0])) + net.cost(stop(&seq[seq.len() - 1]), DEPOT);
        for k in 1..seq.len() {
            km += net.cost(stop(&seq[k - 1]), stop(&seq[k]));
        }
        let regret: f64 = seq
            .iter()
            .zip(&b)
            .filter(|(e, _)| !e.pick)
            .map(|(e, t)| t - reqs[e.req].e_drop)
            .sum();
        let v = w.omega1 * km + w.omega2 * regret;
        if best.is_none_or(|x| v < x) {
            best = Some(v);
        }
    }
    best
}

/// Exhaustive optimum over all assignments of requests to `k` identical
/// depot vehicles (or denial) and all event orderings.
pub fn brute_force_objective(reqs: &[Request], net: &StopNetwork, capacity: u32, k: usize, w: &Weights, clock: f64, l0: f64) -> f64 {
    let n = reqs.len();
    let full = 1usize << n;
    let single: Vec<Option<f64>> = (0..full)
        .map(|m| {
            let sub: Vec<&Request> = (0..n).filter(|i| m >> i & 1 == 1).map(|i| &reqs[i]).collect();
            best_single_route(&sub, net, capacity, w, clock, l0)
        })
        .collect();
    // f[m] = best cost covering exactly m with the vehicles used so far.
    let mut f: Vec<Option<f64>> = vec![None; full];
    f[0] = Some(0.0);
    for _ in 0..k {
        let mut g = f.clone();
        for m in 0..full {
            let Some(base) = f[m] else { continue };
            let rest = (full - 1) & !m;
            let mut sub = rest;
            while sub > 0 {
                if let Some(c) = single[sub] {
                    let t = base + c;
                    if g[m | sub].is_none_or(|x| t < x) {
                        g[m | sub] = Some(t);
                    }
                }
                sub = (sub - 1) & rest;
            }
        }
        f = g;
    }
    (0..full)
        .filter_map(|m| f[m].map(|c| c + w.omega3 * (n - m.count_ones() as usize) as f64))
        .fold(f64::INFINITY, f64::min)
}
