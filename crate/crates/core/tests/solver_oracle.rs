mod common;

use common::*;
use ridepool::event_graph::{EventGraph, HeuristicConfig};
use ridepool::request_model::ServiceWindow;
use ridepool::subproblem_solver::{build_instance, Fixings, SolveLimits, Weights};

#[test]
fn exact_solver_matches_exhaustive_enumeration() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let net = random_network(&mut r, 6, 6.0);
        let n = 1 + (seed as usize % 5);
        let k = 1 + (seed as usize % 2);
        let reqs = random_requests(&mut r, &net, n, 20.0, &[1, 2]);
        let w = Weights { omega1: 1.0, omega2: 1.0, omega3: 30.0 };
        let mut g = EventGraph::new(net.clone(), 2, ServiceWindow::default());
        for q in &reqs {
            g.add_request(q.clone(), &HeuristicConfig::disabled()).unwrap();
        }
        let sol = build_instance(&g, Fixings::fresh(&g, k, 0.0), w, 10.0, SolveLimits::default())
            .unwrap()
            .solve()
            .unwrap();
        let oracle = brute_force_objective(&reqs, &net, 2, k, &w, 0.0, 420.0);
        assert!(sol.optimal);
        assert!((sol.objective - oracle).abs() < 1e-6, "seed {seed}: solver {} oracle {oracle}", sol.objective);
    }
}
