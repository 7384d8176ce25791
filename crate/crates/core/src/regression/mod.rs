//! Generalised linear models for stop-level demand: a Poisson count model for
//! the number of boardings and a multinomial logit model for the destination.

mod multinomial;
mod poisson;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariates::CovariateVector;
use crate::error::Result;

pub use multinomial::{
    fit_multinomial, multinomial_gradient, multinomial_log_likelihood, predict_destination_probs,
    DestinationModel, MultinomialFitConfig,
};
pub use poisson::{
    fit_poisson, ln_factorial, poisson_log_likelihood, predict_intensity, PoissonFitConfig,
    PoissonModel,
};

pub use crate::network::StopId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the objective gradient at the returned estimate.
    pub gradient_norm: f64,
    /// Objective value after each accepted iteration, starting with the initial point.
    #[serde(default)]
    pub trace: Vec<f64>,
    /// Penalty that was in effect for the returned estimate (0 when unpenalised).
    #[serde(default)]
    pub penalty: f64,
}

/// A single observation for the count model.
pub type CountObservation = (CovariateVector, u64);
/// A single observation for the destination model: covariates and category index.
pub type ChoiceObservation = (CovariateVector, usize);

/// Both fitted models for one departure stop, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopModels {
    pub stop_id: StopId,
    pub poisson: PoissonModel,
    pub poisson_fit: FitReport,
    pub destination: DestinationModel,
    pub destination_fit: FitReport,
}

impl StopModels {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn file_name(stop_id: StopId) -> String {
        format!("stop_{stop_id:05}.json")
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(Self::file_name(self.stop_id)), self.to_json()?)?;
        Ok(())
    }

    /// Loads every `stop_*.json` in `dir`, sorted by stop id.
    pub fn read_dir(dir: &Path) -> Result<Vec<StopModels>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let is_model = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("stop_") && n.ends_with(".json"));
            if is_model {
                out.push(Self::from_json(&fs::read_to_string(&path)?)?);
            }
        }
        out.sort_by_key(|m| m.stop_id);
        Ok(out)
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(ll: f64) -> FitReport {
        FitReport {
            log_likelihood: ll,
            iterations: 3,
            converged: true,
            gradient_norm: 1e-12,
            trace: vec![ll - 1.0, ll],
            penalty: 0.0,
        }
    }

    proptest! {
        #[test]
        fn stop_models_json_round_trip_is_bit_exact(
            beta in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 31),
            theta in proptest::collection::vec(-1e6f64..1e6, 62),
            ll in -1e9f64..0.0,
        ) {
            let m = StopModels {
                stop_id: 7,
                poisson: PoissonModel { stop_id: 7, beta: beta.clone() },
                poisson_fit: report(ll),
                destination: DestinationModel {
                    stop_id: 7,
                    categories: vec![3, 9, 11],
                    theta: vec![theta[..31].to_vec(), theta[31..].to_vec()],
                },
                destination_fit: report(ll / 3.0),
            };
            let back = StopModels::from_json(&m.to_json().unwrap()).unwrap();
            for (a, b) in back.poisson.beta.iter().zip(&beta) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back, m);
        }
    }
}
