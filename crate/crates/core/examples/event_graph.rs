//! Build the event-based graph for three requests and show how the pairing
//! heuristic limits its growth on a busier instance.
//!
//! cargo run --release --example event_graph

use std::sync::Arc;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::event_graph::{EventGraph, HeuristicConfig};
use ridepool::network::{build_synthetic_network, Stop, StopNetwork};
use ridepool::request_model::{Request, ServiceWindow};

fn request(id: u32, pickup: u32, dropoff: u32, e_pick: f64, l_pick: f64, net: &StopNetwork) -> Request {
    let direct = net.time(pickup, dropoff);
    let max_ride = (2.0 * direct).max(direct + 10.0);
    Request {
        id,
        pickup,
        dropoff,
        group_size: 1,
        reveal_time: e_pick,
        e_pick,
        l_pick,
        e_drop: e_pick + 0.75 + direct,
        l_drop: l_pick + 0.75 + max_ride,
        service: 0.75,
        max_ride,
        direct_time: direct,
    }
}

fn main() -> Result<()> {
    // Requests 1 and 2 travel along the same corridor; request 3 is far away
    // and can only be served before or after them.
    let stops = [(0, 0.0), (1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0), (5, 30.0), (6, 31.0)]
        .map(|(id, x)| Stop {
            id,
            name: format!("s{id}"),
            x_km: x,
            y_km: 0.0,
        });
    let net = Arc::new(StopNetwork::from_coordinates(stops.to_vec(), 1.3)?);
    let mut g = EventGraph::new(net.clone(), 3, ServiceWindow::default());
    for r in [request(1, 1, 3, 0.0, 200.0, &net), request(2, 2, 4, 0.0, 200.0, &net), request(3, 5, 6, 0.0, 200.0, &net)] {
        g.add_request(r, &HeuristicConfig::disabled())?;
    }
    println!("three requests, capacity 3: {} nodes, {} arcs", g.node_count(), g.arc_count());
    print!("{}", g.dump_text());

    let net = Arc::new(build_synthetic_network(30, 6.0, 4)?);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reqs: Vec<Request> = (1..=40)
        .map(|id| {
            let p = rng.random_range(1..=30);
            let d = (p + rng.random_range(1..30) - 1) % 30 + 1;
            let e = 3.0 * id as f64;
            request(id, p, d, e, e + 25.0, &net)
        })
        .collect();
    println!("\n40 requests over two hours, capacity 6");
    println!("rho_abs  nodes   arcs");
    for rho in [1, 5, 10, usize::MAX] {
        let cfg = HeuristicConfig {
            rho_abs: rho,
            ..Default::default()
        };
        let mut g = EventGraph::new(net.clone(), 6, ServiceWindow::default());
        for r in &reqs {
            g.add_request(r.clone(), &cfg)?;
        }
        let label = if rho == usize::MAX { "all".to_string() } else { rho.to_string() };
        println!("{label:>7} {:>6} {:>6}", g.node_count(), g.arc_count());
    }
    Ok(())
}
