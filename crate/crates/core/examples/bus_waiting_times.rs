//! Bus baseline on a hand-written timetable: the maximum wait is the gap to
//! the previous direct departure, the simulated wait is uniform below it.
//!
//! cargo run --release --example bus_waiting_times

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridepool::bus_baseline::{max_wait, sample_wait, simulate_bus_trips, BusTrip, StopVisit, Timetable, Trip};
use ridepool::network::{Stop, StopNetwork};

fn stop(id: u32, x: f64) -> Stop {
    Stop {
        id,
        name: format!("stop {id}"),
        x_km: x,
        y_km: 0.0,
    }
}

fn main() -> Result<()> {
    let stops: Vec<Stop> = (0..4).map(|i| stop(i, 1.5 * i as f64)).collect();
    let net = StopNetwork::from_coordinates(stops.clone(), 1.3)?;
    // Line 1 -> 2 -> 3 every 40 minutes from 22:10, seconds after 22:00.
    let trips: Vec<Trip> = (0..6)
        .map(|k| {
            let start = 600 + k * 2400;
            Trip {
                id: format!("L1-{k}"),
                visits: (1..4)
                    .map(|s| StopVisit {
                        stop: s,
                        time_s: start + (s as i64 - 1) * 300,
                    })
                    .collect(),
            }
        })
        .collect();
    let tt = Timetable::new(stops, trips)?;

    println!("boarding   1->3 max wait   3->1");
    for b in [600, 3000, 5400] {
        let back = max_wait(&tt, 3, 1, b).map_or_else(|e| e.to_string(), |w| format!("{w:.0} min"));
        println!("{:>8}s {:>14.0} min   {back}", b, max_wait(&tt, 1, 3, b)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let waits: Vec<f64> = (0..10_000).map(|_| sample_wait(40.0, &mut rng)).collect();
    println!("\nmean of 10000 waits below 40 min: {:.2}", waits.iter().sum::<f64>() / waits.len() as f64);

    let log = [
        BusTrip { origin: 1, dest: 3, b_s: 3000, a_s: 3600, day: None },
        BusTrip { origin: 2, dest: 3, b_s: 5700, a_s: 6000, day: None },
        BusTrip { origin: 1, dest: 2, b_s: 600, a_s: 900, day: None },
    ];
    println!("\norigin dest  max_wait   wait  regret  transport");
    for (k, o) in simulate_bus_trips(&log, &tt, &net, 7)? {
        println!(
            "{:>6} {:>4} {:>9.1} {:>6.2} {:>7.2} {:>10.2}",
            log[k].origin, log[k].dest, o.max_wait, o.wait, o.metrics.regret, o.metrics.transport
        );
    }
    Ok(())
}
