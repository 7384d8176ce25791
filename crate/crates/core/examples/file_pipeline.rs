//! The file-based workflow behind the `ridepool` binary, driven from a TOML
//! configuration: fit -> simulate -> solve -> report -> compare.
//!
//! cargo run --release --example file_pipeline

use std::collections::BTreeSet;

use anyhow::Result;
use ridepool::bus_baseline::{synthetic_bus_log, synthetic_timetable, write_bus_log, SyntheticLines};
use ridepool::cli::{
    cmd_compare, cmd_fit, cmd_report, cmd_simulate, cmd_solve, read_fleet_plan, synthetic_boarding_log, write_boarding_log,
    FleetSpec, PipelineConfig, ReportSource,
};
use ridepool::covariates::Weekday;
use ridepool::fleet::FleetScenario;
use ridepool::synthetic::{calibrated_city, CityConfig};

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let d = dir.path();

    // Inputs: stop coordinates, a boarding log and a bus timetable with observed trips.
    let (net, truth) = calibrated_city(&CityConfig {
        stops: 20,
        ..Default::default()
    })?;
    net.write_stops_csv(&d.join("stops.csv"))?;
    let log = synthetic_boarding_log(&truth, 8 * 7, Weekday::Mon, &[22, 23, 0, 1, 2, 3], &BTreeSet::new(), 1);
    write_boarding_log(&d.join("boardings.csv"), &log)?;
    let tt = synthetic_timetable(&net, &SyntheticLines::default(), 1)?;
    tt.write_trips_csv(&d.join("trips.csv"))?;
    let bus: Vec<_> = Weekday::ALL
        .iter()
        .enumerate()
        .flat_map(|(k, day)| {
            synthetic_bus_log(&tt, 300, k as u64).into_iter().map(|mut t| {
                t.day = Some(day.short_name().to_string());
                t
            })
        })
        .collect();
    write_bus_log(&d.join("bus_trips.csv"), &bus)?;

    let toml = format!(
        r#"
bus_seed = 3

[paths]
network = "{0}/stops.csv"
timetable_stops = "{0}/stops.csv"
timetable_trips = "{0}/trips.csv"

[simulation]
weeks = 2
seed = 9

[run]
delta_s = 45.0
"#,
        d.display()
    );
    std::fs::write(d.join("pipeline.toml"), toml)?;
    let cfg = PipelineConfig::load(Some(&d.join("pipeline.toml")))?;
    println!("configuration hash {}", cfg.hash());

    cmd_fit(&d.join("boardings.csv"), &d.join("models"), &cfg)?;
    let scenarios = cmd_simulate(&d.join("models"), &d.join("scenarios"), &cfg)?;
    println!("{} scenario files", scenarios.len());
    let plan = read_fleet_plan(&d.join("scenarios/fleet_plan.csv"))?;
    let rows = cmd_solve(&d.join("scenarios"), &d.join("pool"), &FleetSpec::Plan(plan, FleetScenario::A), &cfg)?;
    println!("{} evenings dispatched", rows.len());
    cmd_report(ReportSource::Bus { bus_log: &d.join("bus_trips.csv") }, &d.join("bus.csv"), &cfg)?;

    let fmt = |v: Option<f64>| v.map_or("     -".into(), |v| format!("{v:6.2}"));
    println!("\nday  vehicles  denied%  pool regret  bus regret  ratio  pool transport  bus transport  ratio");
    for c in cmd_compare(&d.join("pool/summary.csv"), &d.join("bus.csv"), &d.join("compare.csv"))? {
        println!(
            "{:<4} {:>8} {:>8.1}  {:>11} {:>11} {:>6} {:>15} {:>14} {:>6}",
            c.day,
            c.vehicles,
            c.pct_denied,
            fmt(c.pool_avg_regret),
            fmt(c.bus_avg_regret),
            fmt(c.ratio_avg_regret),
            fmt(c.pool_avg_transport),
            fmt(c.bus_avg_transport),
            fmt(c.ratio_avg_transport),
        );
    }

    println!("\nfiles written:");
    for sub in ["models", "scenarios", "pool/week00_Mon", "."] {
        let mut names: Vec<String> = std::fs::read_dir(d.join(sub))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let shown = names.iter().take(6).cloned().collect::<Vec<_>>().join(", ");
        println!("  {sub}/: {shown}{}", if names.len() > 6 { ", ..." } else { "" });
    }
    Ok(())
}
