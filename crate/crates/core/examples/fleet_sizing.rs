//! Size the fleet per weekday from simulated demand: one vehicle per eight
//! requests in the busiest hour, with one vehicle fewer (B) and one more (C).
//!
//! cargo run --release --example fleet_sizing -- [weeks]

use anyhow::Result;
use ridepool::cli::{simulation_config, SimulationConfig};
use ridepool::demand_sim::{generate_scenario, GroupSizeDistribution};
use ridepool::fleet::{max_avg_hourly, plan_fleet, FleetScenario};
use ridepool::synthetic::{calibrated_city, weekday_peak, CityConfig};

fn main() -> Result<()> {
    let weeks: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30);
    let (_, models) = calibrated_city(&CityConfig::default())?;
    let sim = SimulationConfig {
        weeks,
        seed: 5,
        ..Default::default()
    };
    let evenings = generate_scenario(
        &simulation_config(&sim, models.keys().copied().collect()),
        &models,
        &GroupSizeDistribution::default(),
    )?;
    let busiest = max_avg_hourly(&evenings);
    let plan = plan_fleet(&evenings);

    println!("{weeks} simulated weeks");
    println!("day  calibrated peak  simulated max avg/hour  {}", FleetScenario::ALL.map(|s| format!("  {s}")).join(""));
    for (day, size) in &plan {
        println!(
            "{:<4} {:>15.1} {:>23.1}  {:>3}{:>3}{:>3}",
            day.short_name(),
            weekday_peak(*day),
            busiest[day],
            size.vehicles(FleetScenario::A),
            size.vehicles(FleetScenario::B),
            size.vehicles(FleetScenario::C),
        );
    }
    Ok(())
}
