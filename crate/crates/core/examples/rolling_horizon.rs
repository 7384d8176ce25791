//! Dispatch one simulated evening online: each request is answered when it
//! is revealed, then routes are re-optimised. Prints the event log, checks
//! the final routes independently and reports service quality.
//!
//! cargo run --release --example rolling_horizon

use std::sync::Arc;

use anyhow::{ensure, Result};
use ridepool::cli::{simulation_config, SimulationConfig};
use ridepool::demand_sim::{generate_scenario, GroupSizeDistribution};
use ridepool::metrics::{hourly_breakdown, outcomes_from_run, replay_log, report_for_run};
use ridepool::request_model::derive_all;
use ridepool::rolling_horizon::{run, LogRecord, RunConfig};
use ridepool::synthetic::{calibrated_city, CityConfig};
use ridepool::validation::validate_outcome;

fn main() -> Result<()> {
    let (net, models) = calibrated_city(&CityConfig::default())?;
    let net = Arc::new(net);
    let sim = SimulationConfig {
        weeks: 1,
        seed: 21,
        ..Default::default()
    };
    let evenings = generate_scenario(&simulation_config(&sim, models.keys().copied().collect()), &models, &GroupSizeDistribution::default())?;
    let monday = &evenings[0];
    let cfg = RunConfig {
        vehicles: 5,
        ..Default::default()
    };
    let requests = derive_all(&monday.requests, &net, &cfg.params, &cfg.window)?;
    let out = run(&requests, &cfg, net.clone())?;

    println!("first events of the log (minutes after 22:00):");
    for rec in out.log.iter().filter(|r| !matches!(r, LogRecord::Solve { .. })).take(14) {
        println!("  {}", serde_json::to_string(rec)?);
    }

    let violations = validate_outcome(&out, &cfg, &net);
    ensure!(violations.is_empty(), "route check failed: {violations:#?}");
    let report = report_for_run(&out)?;
    let replay = replay_log(&out.log)?;
    println!(
        "\n{} requests, {} solves, {:.1}% denied, {:.1} km driven",
        report.n_requests, out.solves, report.pct_denied, report.total_routing_cost_km
    );
    println!(
        "averages: regret {:.2}, wait {:.2}, ride {:.2}, transport {:.2} min (log replay regret {:.2})",
        report.avg_regret, report.avg_wait, report.avg_ride, report.avg_transport, replay.avg_regret
    );

    println!("\nhour   requests  accepted  regret   wait");
    let fmt = |v: Option<f64>| v.map_or("     -".into(), |v| format!("{v:6.2}"));
    for row in hourly_breakdown(&outcomes_from_run(&out), &out.requests, 22)? {
        println!("{:02}-{:02} {:>9} {:>9}  {} {}", row.hour, (row.hour + 1) % 24, row.n_requests, row.n_accepted, fmt(row.avg_regret), fmt(row.avg_wait));
    }
    Ok(())
}
