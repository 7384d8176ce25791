//! Fit per-stop Poisson and destination models to a boarding log and check
//! them against the models the log was sampled from.
//!
//! cargo run --release --example fit_demand_models

use std::collections::{BTreeMap, BTreeSet};

use anyhow::Result;
use ridepool::cli::{fit_models, synthetic_boarding_log, write_boarding_log, ModelConfig};
use ridepool::covariates::{encode, CalendarContext, Weekday};
use ridepool::regression::{predict_destination_probs, predict_intensity};
use ridepool::synthetic::{calibrated_city, CityConfig};

fn main() -> Result<()> {
    let (_, truth) = calibrated_city(&CityConfig {
        stops: 8,
        demand_scale: 3.0,
        ..Default::default()
    })?;
    let hours = [22, 23, 0, 1, 2, 3];
    let log = synthetic_boarding_log(&truth, 26 * 7, Weekday::Mon, &hours, &BTreeSet::new(), 42);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("boardings.csv");
    write_boarding_log(&path, &log)?;
    println!("boarding log: {} rows over 26 weeks of evenings", log.len());

    let (models, summary) = fit_models(&path, &ModelConfig::default())?;
    let fitted: BTreeMap<_, _> = models.into_iter().map(|m| (m.stop_id, m)).collect();

    println!("\nstop  cells  passengers  converged (counts/dest)  Mon 22h true/fit   Sat 2h true/fit   top destination p");
    for row in &summary {
        let (t, f) = (&truth[&row.stop_id], &fitted[&row.stop_id]);
        let mon = encode(&CalendarContext::new(Weekday::Mon, 22, false).expect("valid hour"));
        let sat = encode(&CalendarContext::new(Weekday::Sat, 2, false).expect("valid hour"));
        let p = predict_destination_probs(&f.destination, &mon);
        println!(
            "{:>4} {:>6} {:>11} {:>11}/{:<13} {:>6.3} / {:<6.3}   {:>6.3} / {:<6.3}   {:.3} (uniform {:.3})",
            row.stop_id,
            row.cells,
            row.passengers,
            row.poisson_converged,
            row.destination_converged,
            predict_intensity(&t.poisson, &mon),
            predict_intensity(&f.poisson, &mon),
            predict_intensity(&t.poisson, &sat),
            predict_intensity(&f.poisson, &sat),
            p.iter().copied().fold(0.0, f64::max),
            1.0 / p.len() as f64,
        );
    }
    Ok(())
}
