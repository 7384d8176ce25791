//! Sample evening request scenarios from per-stop demand models and write
//! them as scenario CSV files.
//!
//! cargo run --release --example simulate_demand

use std::collections::BTreeMap;

use anyhow::Result;
use ridepool::cli::{scenario_file_name, simulation_config, SimulationConfig};
use ridepool::demand_sim::{generate_scenario, read_scenario_csv, write_scenario_csv, GroupSizeDistribution};
use ridepool::synthetic::{calibrated_city, CityConfig};

fn main() -> Result<()> {
    let (_, models) = calibrated_city(&CityConfig::default())?;
    let sim = SimulationConfig {
        weeks: 4,
        seed: 11,
        holiday_weeks: vec![3],
        ..Default::default()
    };
    let groups = GroupSizeDistribution::default();
    let cfg = simulation_config(&sim, models.keys().copied().collect());
    let evenings = generate_scenario(&cfg, &models, &groups)?;

    let dir = tempfile::tempdir()?;
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    println!("evening          holiday  requests  passengers  first pick-up  last pick-up");
    for ev in &evenings {
        let passengers: u32 = ev.requests.iter().map(|r| r.group_size).sum();
        for r in &ev.requests {
            *sizes.entry(r.group_size).or_default() += 1;
        }
        let name = scenario_file_name(ev.day_index / 7, ev.weekday);
        let path = dir.path().join(&name);
        write_scenario_csv(&path, &ev.requests)?;
        assert_eq!(read_scenario_csv(&path)?, ev.requests);
        let minute = |s: Option<i64>| s.map_or("-".into(), |s| format!("{:+.1} min", s as f64 / 60.0));
        println!(
            "{name:<16} {:>7} {:>9} {:>11}  {:>13}  {:>12}",
            ev.holiday,
            ev.requests.len(),
            passengers,
            minute(ev.requests.first().map(|r| r.earliest_pickup_s)),
            minute(ev.requests.last().map(|r| r.earliest_pickup_s)),
        );
    }

    let total: usize = sizes.values().sum();
    println!("\ngroup size  share   expected");
    for (k, p) in groups.probs().iter().enumerate() {
        let share = sizes.get(&(k as u32 + 1)).copied().unwrap_or(0) as f64 / total as f64;
        println!("{:>10}  {share:.3}   {p:.3}", k + 1);
    }
    Ok(())
}
