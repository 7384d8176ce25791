//! Calibrated synthetic city: simulate one evening per weekday, dispatch it
//! with the fleet-sizing rule, and compare against a timetabled bus network.
//!
//! cargo run --release --example bus_vs_pool -- [weeks] [extent_km]

use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use ridepool::bus_baseline::{simulate_bus_trips, synthetic_bus_log, synthetic_timetable, SyntheticLines};
use ridepool::cli::{compare_reports, simulation_config, summarise_by_day, SimulationConfig};
use ridepool::demand_sim::{generate_scenario, GroupSizeDistribution};
use ridepool::fleet::plan_fleet;
use ridepool::metrics::{aggregate, report_for_run, ReportRow};
use ridepool::request_model::derive_all;
use ridepool::rolling_horizon::{run, RunConfig};
use ridepool::synthetic::{calibrated_city, CityConfig};

fn main() -> Result<()> {
    let weeks: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let extent: f64 = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(4.0);
    let (net, models) = calibrated_city(&CityConfig { extent_km: extent, ..Default::default() })?;
    let net = Arc::new(net);
    let sim = SimulationConfig {
        weeks,
        seed: 7,
        ..Default::default()
    };
    let stops = models.keys().copied().collect();
    let evenings = generate_scenario(&simulation_config(&sim, stops), &models, &GroupSizeDistribution::default())?;
    let plan = plan_fleet(&evenings);

    let mut pool_rows = Vec::new();
    for ev in &evenings {
        let t0 = Instant::now();
        let cfg = RunConfig {
            vehicles: plan[&ev.weekday].vehicles_a,
            ..Default::default()
        };
        let reqs = derive_all(&ev.requests, &net, &cfg.params, &cfg.window)?;
        let out = run(&reqs, &cfg, net.clone())?;
        let row = ReportRow::new(ev.weekday.short_name(), cfg.vehicles, report_for_run(&out), reqs.len(), out.total_cost())?;
        println!(
            "{} week {}: {} requests, {} vehicles, {:.1}% denied, regret {:.2}, wait {:.2}, ride {:.2} min, {} solves ({} hit limits), {:.1}s",
            ev.weekday,
            ev.day_index / 7,
            reqs.len(),
            cfg.vehicles,
            row.pct_denied,
            row.avg_regret.unwrap_or(f64::NAN),
            row.avg_wait.unwrap_or(f64::NAN),
            row.avg_ride.unwrap_or(f64::NAN),
            out.solves,
            out.non_optimal_solves,
            t0.elapsed().as_secs_f64()
        );
        pool_rows.push(row);
    }

    let tt = synthetic_timetable(&net, &SyntheticLines::default(), 3)?;
    let mut bus_rows = Vec::new();
    for (k, d) in ridepool::covariates::Weekday::ALL.iter().enumerate() {
        let trips = synthetic_bus_log(&tt, 500, 100 + k as u64);
        let m: Vec<_> = simulate_bus_trips(&trips, &tt, &net, k as u64)?.into_iter().map(|(_, o)| o.metrics).collect();
        bus_rows.push(ReportRow::new(d.short_name(), 0, aggregate(&m, m.len(), 0.0), m.len(), 0.0)?);
    }

    println!("\nday  pool_regret  bus_regret  ratio  pool_transport  bus_transport  ratio");
    for c in compare_reports(&summarise_by_day(&pool_rows), &bus_rows)? {
        println!(
            "{:<4} {:>11.2} {:>11.2} {:>6.2} {:>15.2} {:>14.2} {:>6.2}",
            c.day,
            c.pool_avg_regret.unwrap_or(f64::NAN),
            c.bus_avg_regret.unwrap_or(f64::NAN),
            c.ratio_avg_regret.unwrap_or(f64::NAN),
            c.pool_avg_transport.unwrap_or(f64::NAN),
            c.bus_avg_transport.unwrap_or(f64::NAN),
            c.ratio_avg_transport.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
