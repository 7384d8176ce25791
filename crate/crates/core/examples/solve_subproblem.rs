//! Solve one static dispatching subproblem exactly: which requests to accept,
//! which vehicle serves them and when.
//!
//! cargo run --release --example solve_subproblem

use std::sync::Arc;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool::event_graph::{EventGraph, HeuristicConfig};
use ridepool::network::build_synthetic_network;
use ridepool::request_model::{derive_request, RequestParams, ServiceWindow};
use ridepool::demand_sim::RequestRecord;
use ridepool::subproblem_solver::{build_instance, Fixings, SolveLimits, Weights};

fn main() -> Result<()> {
    let net = Arc::new(build_synthetic_network(12, 5.0, 2)?);
    let params = RequestParams::default();
    let window = ServiceWindow::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = EventGraph::new(net.clone(), 6, window);
    for id in 1..=7u32 {
        let p = rng.random_range(1..=12);
        let d = p % 12 + 1;
        let e = rng.random_range(0..15 * 60);
        let rec = RequestRecord {
            request_id: id,
            submission_time_s: 0,
            pickup_stop: p,
            dropoff_stop: d,
            group_size: rng.random_range(1..=3),
            earliest_pickup_s: e,
        };
        let r = derive_request(&rec, &net, &params, &window)?;
        println!(
            "request {id}: stop {p} -> {d}, {} passengers, pick-up in [{:.1}, {:.1}], direct {:.1} min",
            r.group_size, r.e_pick, r.l_pick, r.direct_time
        );
        g.add_request(r, &HeuristicConfig::default())?;
    }

    let instance = build_instance(&g, Fixings::fresh(&g, 2, 0.0), Weights::default(), params.max_postpone_min, SolveLimits::default())?;
    let sol = instance.solve()?;
    println!(
        "\nobjective {:.2} ({}), accepted {:?}, denied {:?}",
        sol.objective,
        if sol.optimal { "optimal" } else { "limit reached" },
        sol.accepted,
        sol.denied
    );
    for route in &sol.routes {
        println!("vehicle {}: {:.2} km, regret {:.2} min, back at depot {:.1}", route.vehicle, route.cost, route.regret, route.depot_arrival);
        for ev in &route.events {
            println!("  {:>7.2}  stop {:>2}  {}", ev.time, ev.stop, ev.node.render(6));
        }
    }

    let mut lp = Vec::new();
    instance.write_lp(&mut lp)?;
    let text = String::from_utf8(lp)?;
    println!("\nLP formulation, {} lines; first constraints:", text.lines().count());
    for line in text.lines().skip_while(|l| !l.starts_with("Subject To")).skip(1).take(8) {
        println!("  {line}");
    }
    Ok(())
}
