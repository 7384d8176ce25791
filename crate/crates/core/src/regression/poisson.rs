use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{inf_norm, CountObservation, FitReport, StopId};
use crate::covariates::CovariateVector;
use crate::error::{Error, Result};

/// Linear predictors below this value mean an expected count under 1e-13,
/// which only happens when the unpenalised estimate is running off to -inf.
const ETA_FLOOR: f64 = -30.0;
const RIDGE_RESCUE: f64 = 1e-10;

/// Poisson regression with log link: `lambda = exp(beta . x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonModel {
    pub stop_id: StopId,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PoissonFitConfig {
    /// Convergence threshold on the infinity norm of the score vector.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Ridge penalty used to refit when the unpenalised likelihood is unbounded.
    /// `None` turns separation into an error.
    pub separation_ridge: Option<f64>,
}

impl Default for PoissonFitConfig {
    fn default() -> Self {
        PoissonFitConfig {
            tolerance: 1e-8,
            max_iterations: 100,
            separation_ridge: Some(1e-3),
        }
    }
}

pub fn predict_intensity(model: &PoissonModel, x: &CovariateVector) -> f64 {
    x.dot(&model.beta).exp()
}

/// `ln(y!)`, exact summation for small counts and Stirling's series beyond.
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        return 0.0;
    }
    if y <= 256 {
        return (2..=y).map(|k| (k as f64).ln()).sum();
    }
    let n = y as f64;
    let inv = 1.0 / n;
    n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln() + inv / 12.0
        - inv.powi(3) / 360.0
        + inv.powi(5) / 1260.0
}

pub fn poisson_log_likelihood(model: &PoissonModel, observations: &[CountObservation]) -> f64 {
    observations
        .iter()
        .map(|(x, y)| {
            let eta = x.dot(&model.beta);
            *y as f64 * eta - eta.exp() - ln_factorial(*y)
        })
        .sum()
}

/// Maximum-likelihood fit by Fisher scoring (IRLS) with step halving.
///
/// When the likelihood is unbounded the fit is repeated with the ridge penalty
/// from `config.separation_ridge`, or [`Error::Separation`] is returned if that
/// is disabled.
pub fn fit_poisson(
    stop_id: StopId,
    observations: &[CountObservation],
    config: &PoissonFitConfig,
) -> Result<(PoissonModel, FitReport)> {
    let design = Design::new(observations)?;
    match irls(&design, 0.0, config) {
        Ok((beta, report)) => Ok((PoissonModel { stop_id, beta }, report)),
        Err(Error::Separation(msg)) => match config.separation_ridge {
            Some(ridge) if ridge > 0.0 => {
                log::debug!("stop {stop_id}: {msg}; refitting with ridge {ridge}");
                let (beta, report) = irls(&design, ridge, config)?;
                Ok((PoissonModel { stop_id, beta }, report))
            }
            _ => Err(Error::Separation(msg)),
        },
        Err(e) => Err(e),
    }
}

/// Observations aggregated by distinct covariate pattern.
struct Design {
    q: usize,
    rows: Vec<Vec<f64>>,
    /// Number of observations per pattern.
    weight: Vec<f64>,
    /// Sum of counts per pattern.
    total: Vec<f64>,
    /// Sum of ln(y!) over all observations.
    log_fact: f64,
}

impl Design {
    fn new(observations: &[CountObservation]) -> Result<Self> {
        let Some((first, _)) = observations.first() else {
            return Err(Error::InvalidModel("no observations".into()));
        };
        let q = first.len();
        let mut index: std::collections::HashMap<Vec<u64>, usize> = Default::default();
        let mut design = Design {
            q,
            rows: Vec::new(),
            weight: Vec::new(),
            total: Vec::new(),
            log_fact: 0.0,
        };
        for (x, y) in observations {
            if x.len() != q {
                return Err(Error::InvalidModel(format!(
                    "covariate length {} differs from {q}",
                    x.len()
                )));
            }
            let key: Vec<u64> = x.as_slice().iter().map(|v| v.to_bits()).collect();
            let k = *index.entry(key).or_insert_with(|| {
                design.rows.push(x.as_slice().to_vec());
                design.weight.push(0.0);
                design.total.push(0.0);
                design.rows.len() - 1
            });
            design.weight[k] += 1.0;
            design.total[k] += *y as f64;
            design.log_fact += ln_factorial(*y);
        }
        Ok(design)
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn objective(&self, beta: &[f64], ridge: f64) -> f64 {
        let ll: f64 = self
            .eta(beta)
            .iter()
            .enumerate()
            .map(|(k, e)| self.total[k] * e - self.weight[k] * e.exp())
            .sum();
        ll - self.log_fact - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
    }

    /// `objective(beta + step * dir) - objective(beta)`, computed from the
    /// change in the linear predictor so that improvements far below the
    /// resolution of the objective itself are still visible.
    fn objective_change(&self, beta: &[f64], dir: &[f64], step: f64, ridge: f64) -> f64 {
        let scaled: Vec<f64> = dir.iter().map(|d| step * d).collect();
        let eta = self.eta(beta);
        let change: f64 = self
            .eta(&scaled)
            .iter()
            .enumerate()
            .map(|(k, d)| self.total[k] * d - self.weight[k] * eta[k].exp() * d.exp_m1())
            .sum();
        let penalty: f64 = beta.iter().zip(&scaled).map(|(b, s)| s * (2.0 * b + s)).sum();
        change - 0.5 * ridge * penalty
    }

    fn score(&self, beta: &[f64], ridge: f64) -> Vec<f64> {
        let eta = self.eta(beta);
        let mut g: Vec<f64> = beta.iter().map(|b| -ridge * b).collect();
        for (k, row) in self.rows.iter().enumerate() {
            let resid = self.total[k] - self.weight[k] * eta[k].exp();
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += resid * xj;
            }
        }
        g
    }

    fn information(&self, beta: &[f64], ridge: f64) -> DMatrix<f64> {
        let eta = self.eta(beta);
        let mut h = DMatrix::from_diagonal_element(self.q, self.q, ridge);
        for (k, row) in self.rows.iter().enumerate() {
            let w = self.weight[k] * eta[k].exp();
            for i in 0..self.q {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..self.q {
                    h[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        h
    }
}

/// Minimum-norm Newton step. Directions whose curvature is below
/// `RIDGE_RESCUE` relative to the largest eigenvalue are left out, which
/// happens when a dummy is never active or when the observed hour dummies
/// add up to the intercept.
fn newton_direction(h: DMatrix<f64>, g: &[f64]) -> Result<Vec<f64>> {
    let inactive: Vec<bool> = (0..h.nrows()).map(|j| h[(j, j)] == 0.0).collect();
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Err(Error::SingularDesign);
    }
    let rhs = DVector::from_column_slice(g);
    let mut dir = DVector::zeros(g.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > RIDGE_RESCUE * top {
            let v = eig.eigenvectors.column(k);
            dir += v * (v.dot(&rhs) / lambda);
        }
    }
    Ok(dir.iter().zip(&inactive).map(|(&d, &off)| if off { 0.0 } else { d }).collect())
}

fn irls(design: &Design, ridge: f64, config: &PoissonFitConfig) -> Result<(Vec<f64>, FitReport)> {
    let q = design.q;
    if ridge == 0.0 && design.total.iter().all(|&t| t == 0.0) {
        return Err(Error::Separation("all counts are zero".into()));
    }
    let n: f64 = design.weight.iter().sum();
    let mean = design.total.iter().sum::<f64>() / n;
    let mut beta = vec![0.0; q];
    // Start from the intercept-only estimate when column 0 is an intercept.
    if design.rows.iter().all(|r| r[0] == 1.0) {
        beta[0] = mean.max(1e-8).ln();
    }
    let mut obj = design.objective(&beta, ridge);
    let mut trace = vec![obj];
    let mut grad = design.score(&beta, ridge);
    let mut iterations = 0;
    let mut converged = inf_norm(&grad) <= config.tolerance;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let dir = newton_direction(design.information(&beta, ridge), &grad)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let delta = design.objective_change(&beta, &dir, step, ridge);
            if delta.is_finite() && delta >= 0.0 {
                let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b + step * d).collect();
                accepted = Some((cand, obj + delta));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else {
            // No ascent possible along the Newton direction: we are at the
            // optimum up to floating-point resolution.
            break;
        };
        beta = cand;
        obj = cand_obj;
        trace.push(obj);
        grad = design.score(&beta, ridge);
        converged = inf_norm(&grad) <= config.tolerance;

        if ridge == 0.0 {
            let min_eta = design.eta(&beta).into_iter().fold(f64::INFINITY, f64::min);
            if min_eta < ETA_FLOOR {
                return Err(Error::Separation(format!(
                    "linear predictor reached {min_eta:.1} after {iterations} iterations"
                )));
            }
        }
    }
    if ridge == 0.0 {
        // Zero-count patterns whose fitted mean collapsed: the estimate is
        // drifting towards -inf and only stopped because the score underflowed.
        let eta = design.eta(&beta);
        if let Some(k) = (0..eta.len())
            .find(|&k| design.total[k] == 0.0 && design.weight[k] * eta[k].exp() < 1e-6)
        {
            return Err(Error::Separation(format!(
                "zero-count pattern {k} has fitted mean {:.2e}",
                design.weight[k] * eta[k].exp()
            )));
        }
    }
    let gradient_norm = inf_norm(&grad);
    // Floating-point resolution of the score scales with the total count.
    let resolution = 1e-13 * design.total.iter().sum::<f64>().max(1.0);
    let converged = gradient_norm <= config.tolerance.max(resolution);
    let log_likelihood = design.objective(&beta, 0.0);
    Ok((
        beta,
        FitReport {
            log_likelihood,
            iterations,
            converged,
            gradient_norm,
            trace,
            penalty: ridge,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{encode, CalendarContext, Weekday, NUM_COVARIATES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn intercept() -> CovariateVector {
        CovariateVector::from_raw(vec![1.0])
    }

    fn model(beta: Vec<f64>) -> PoissonModel {
        PoissonModel { stop_id: 1, beta }
    }

    #[test]
    fn intercept_only_fit_is_log_mean() {
        let obs: Vec<_> = [2, 4, 6].iter().map(|&y| (intercept(), y)).collect();
        let (m, rep) = fit_poisson(1, &obs, &PoissonFitConfig::default()).unwrap();
        assert!((m.beta[0] - 4f64.ln()).abs() < 1e-9);
        assert!(rep.converged);
        assert!((predict_intensity(&m, &intercept()) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_counts_without_fallback_is_separation() {
        let obs: Vec<_> = (0..5).map(|_| (intercept(), 0)).collect();
        let cfg = PoissonFitConfig {
            separation_ridge: None,
            ..Default::default()
        };
        assert!(matches!(fit_poisson(1, &obs, &cfg), Err(Error::Separation(_))));
        let (m, rep) = fit_poisson(1, &obs, &PoissonFitConfig::default()).unwrap();
        assert!(m.beta[0] < -5.0 && m.beta[0].is_finite());
        assert!(rep.penalty > 0.0);
    }

    #[test]
    fn zero_only_category_is_separation() {
        // Second column is only active on observations with zero counts.
        let obs = vec![
            (CovariateVector::from_raw(vec![1.0, 0.0]), 3),
            (CovariateVector::from_raw(vec![1.0, 0.0]), 5),
            (CovariateVector::from_raw(vec![1.0, 1.0]), 0),
            (CovariateVector::from_raw(vec![1.0, 1.0]), 0),
        ];
        let cfg = PoissonFitConfig {
            separation_ridge: None,
            ..Default::default()
        };
        assert!(matches!(fit_poisson(1, &obs, &cfg), Err(Error::Separation(_))));
    }

    #[test]
    fn unobserved_dummy_is_rescued_not_singular() {
        let obs: Vec<_> = [22u8, 23, 0, 1]
            .iter()
            .flat_map(|&h| {
                (0..5).map(move |k| {
                    let ctx = CalendarContext::new(Weekday::from_index(k), h, false).unwrap();
                    (encode(&ctx), 2 + k as u64)
                })
            })
            .collect();
        let (m, rep) = fit_poisson(1, &obs, &PoissonFitConfig::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert_eq!(m.beta.len(), NUM_COVARIATES);
        // Coefficients for columns never seen stay at zero.
        assert_eq!(m.beta[12], 0.0);
    }

    #[test]
    fn evening_only_design_converges() {
        // The six evening hour dummies add up to the intercept.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs: Vec<_> = (0..26 * 7)
            .flat_map(|d| [22u8, 23, 0, 1, 2, 3].map(|h| (d, h)))
            .map(|(d, h)| {
                let x = encode(&CalendarContext::new(Weekday::from_index(d % 7), h, false).unwrap());
                (x, Poisson::new(8.0).unwrap().sample(&mut rng) as u64)
            })
            .collect();
        let (m, rep) = fit_poisson(1, &obs, &PoissonFitConfig::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.iterations < 20);
        let fitted: f64 = obs.iter().map(|(x, _)| predict_intensity(&m, x)).sum();
        let observed: f64 = obs.iter().map(|(_, y)| *y as f64).sum();
        assert!((fitted - observed).abs() < 1e-6 * observed);
    }

    #[test]
    fn log_likelihood_values() {
        let m = model(vec![0.0]);
        let ll = poisson_log_likelihood(&m, &[(intercept(), 0), (intercept(), 0)]);
        assert!((ll + 2.0).abs() < 1e-15);
        let m = model(vec![2f64.ln()]);
        let ll = poisson_log_likelihood(&m, &[(intercept(), 2)]);
        assert!((ll - (2f64.ln() - 2.0)).abs() < 1e-12);
        assert!((ll + 1.3069).abs() < 1e-4);
    }

    #[test]
    fn predict_intensity_trivial_cases() {
        let x = encode(&CalendarContext::new(Weekday::Fri, 3, true).unwrap());
        assert_eq!(predict_intensity(&model(vec![0.0; NUM_COVARIATES]), &x), 1.0);
        let mut beta = vec![0.0; NUM_COVARIATES];
        beta[0] = 2f64.ln();
        assert!((predict_intensity(&model(beta), &x) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ln_factorial_matches_summation_across_stirling_switch() {
        for y in [0u64, 1, 2, 10, 256, 257, 1000] {
            let exact: f64 = (2..=y).map(|k| (k as f64).ln()).sum();
            assert!((ln_factorial(y) - exact).abs() < 1e-9 * exact.max(1.0), "y={y}");
        }
    }

    fn synthetic(n: usize, seed: u64) -> (Vec<f64>, Vec<CountObservation>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut beta = vec![0.0; NUM_COVARIATES];
        beta[0] = 3.5;
        for (j, b) in beta.iter_mut().enumerate().skip(1) {
            *b = 0.3 * ((j as f64) * 0.7).sin();
        }
        let obs = (0..n)
            .map(|_| {
                let ctx = CalendarContext::new(
                    Weekday::from_index(rng.random_range(0..7)),
                    rng.random_range(0..24),
                    rng.random_bool(0.3),
                )
                .unwrap();
                let x = encode(&ctx);
                let lambda = x.dot(&beta).exp();
                let y = Poisson::new(lambda).unwrap().sample(&mut rng) as u64;
                (x, y)
            })
            .collect();
        (beta, obs)
    }

    #[test]
    fn irls_trace_is_nondecreasing_and_score_equation_holds() {
        let (_, obs) = synthetic(3000, 7);
        let (m, rep) = fit_poisson(1, &obs, &PoissonFitConfig::default()).unwrap();
        assert!(rep.converged);
        for w in rep.trace.windows(2) {
            assert!(w[1] >= w[0], "trace decreased: {:?}", rep.trace);
        }
        let fitted: f64 = obs.iter().map(|(x, _)| predict_intensity(&m, x)).sum();
        let observed: f64 = obs.iter().map(|(_, y)| *y as f64).sum();
        assert!(((fitted - observed) / observed).abs() < 1e-6);
        let at_zero = poisson_log_likelihood(&model(vec![0.0; NUM_COVARIATES]), &obs);
        assert!(poisson_log_likelihood(&m, &obs) >= at_zero);
        assert!((rep.log_likelihood - poisson_log_likelihood(&m, &obs)).abs() < 1e-6);
    }

    #[test]
    fn recovers_synthetic_coefficients() {
        let (truth, obs) = synthetic(10_000, 11);
        let (m, _) = fit_poisson(1, &obs, &PoissonFitConfig::default()).unwrap();
        let err = m
            .beta
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.05, "max abs error {err}");
    }

    #[test]
    fn empty_observations_rejected() {
        assert!(fit_poisson(1, &[], &PoissonFitConfig::default()).is_err());
    }
}
