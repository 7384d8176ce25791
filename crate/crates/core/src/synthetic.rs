//! A synthetic city with known demand models, for examples and end-to-end
//! checks when no real boarding log is available.

use std::collections::BTreeMap;

use crate::covariates::{hour_index, Weekday, NUM_COVARIATES, WEEKDAY_OFFSET};
use crate::demand_sim::GroupSizeDistribution;
use crate::error::Result;
use crate::network::{build_synthetic_network, StopId, StopNetwork};
use crate::regression::{DestinationModel, FitReport, PoissonModel, StopModels};

/// Busiest-hour request counts per weekday, Monday first.
pub const PEAK_HOURLY_REQUESTS: [f64; 7] = [37.2, 34.6, 26.7, 30.8, 24.1, 17.9, 26.5];

/// Demand in each evening hour relative to the busiest one (22:00).
pub const EVENING_PROFILE: [(u8, f64); 6] = [(22, 1.0), (23, 0.8), (0, 0.6), (1, 0.45), (2, 0.35), (3, 0.3)];

#[derive(Debug, Clone)]
pub struct CityConfig {
    pub stops: usize,
    pub extent_km: f64,
    /// Multiplies every intensity.
    pub demand_scale: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            stops: 50,
            extent_km: 4.0,
            demand_scale: 1.0,
            seed: 1,
        }
    }
}

fn no_fit() -> FitReport {
    FitReport {
        log_likelihood: 0.0,
        iterations: 0,
        converged: true,
        gradient_norm: 0.0,
        trace: Vec::new(),
        penalty: 0.0,
    }
}

/// Poisson coefficients giving `per_stop_peak[d]` passengers at 22:00 on
/// weekday `d`, scaled by [`EVENING_PROFILE`] in later hours.
pub fn evening_coefficients(per_stop_peak: &[f64; 7]) -> Vec<f64> {
    let mut beta = vec![0.0; NUM_COVARIATES];
    beta[0] = per_stop_peak[0].ln();
    for d in 1..7 {
        beta[WEEKDAY_OFFSET + d - 1] = (per_stop_peak[d] / per_stop_peak[0]).ln();
    }
    for (h, f) in EVENING_PROFILE {
        if let Some(i) = hour_index(h) {
            beta[i] = f.ln();
        }
    }
    // Hours outside the evening are never sampled; keep them at the reference.
    beta
}

/// Network plus per-stop models. Destinations are uniform over all other
/// stops; passenger intensities are set so that requests (after dividing by
/// the mean group size) peak at [`PEAK_HOURLY_REQUESTS`].
pub fn calibrated_city(cfg: &CityConfig) -> Result<(StopNetwork, BTreeMap<StopId, StopModels>)> {
    let net = build_synthetic_network(cfg.stops, cfg.extent_km, cfg.seed)?;
    let stops = net.service_stops();
    let group_mean = GroupSizeDistribution::default().mean();
    let per_stop: [f64; 7] =
        std::array::from_fn(|d| PEAK_HOURLY_REQUESTS[d] * group_mean * cfg.demand_scale / stops.len() as f64);
    let beta = evening_coefficients(&per_stop);
    let models = stops
        .iter()
        .map(|&s| {
            let dests: Vec<StopId> = stops.iter().copied().filter(|d| *d != s).collect();
            let m = StopModels {
                stop_id: s,
                poisson: PoissonModel {
                    stop_id: s,
                    beta: beta.clone(),
                },
                poisson_fit: no_fit(),
                destination: DestinationModel::uniform(s, dests, NUM_COVARIATES),
                destination_fit: no_fit(),
            };
            (s, m)
        })
        .collect();
    Ok((net, models))
}

pub fn weekday_peak(d: Weekday) -> f64 {
    PEAK_HOURLY_REQUESTS[d.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{encode, CalendarContext};
    use crate::regression::predict_intensity;

    #[test]
    fn intensities_follow_profile() {
        let (_, models) = calibrated_city(&CityConfig::default()).unwrap();
        let g = GroupSizeDistribution::default().mean();
        for d in Weekday::ALL {
            for (h, f) in EVENING_PROFILE {
                let x = encode(&CalendarContext::new(d, h, false).unwrap());
                let total: f64 = models.values().map(|m| predict_intensity(&m.poisson, &x)).sum::<f64>() / g;
                assert!((total - weekday_peak(d) * f).abs() < 1e-9, "{d} {h}: {total}");
            }
        }
    }
}
