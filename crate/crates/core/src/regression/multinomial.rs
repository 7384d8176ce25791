use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{inf_norm, ChoiceObservation, FitReport, StopId};
use crate::covariates::CovariateVector;
use crate::error::{Error, Result};

/// Multinomial logit over the destinations reachable from one stop.
///
/// `categories[0]` is the reference destination whose activation is fixed
/// to zero; row `j` of `theta` produces the activation of `categories[j + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationModel {
    pub stop_id: StopId,
    pub categories: Vec<StopId>,
    pub theta: Vec<Vec<f64>>,
}

impl DestinationModel {
    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    /// Model with all activations zero, i.e. uniform over `categories`.
    pub fn uniform(stop_id: StopId, categories: Vec<StopId>, q: usize) -> Self {
        let theta = vec![vec![0.0; q]; categories.len().saturating_sub(1)];
        DestinationModel {
            stop_id,
            categories,
            theta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultinomialFitConfig {
    /// Threshold on the infinity norm of the per-observation gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// L2 penalty on all coefficients; `None` or 0 disables it.
    pub l2_penalty: Option<f64>,
}

impl Default for MultinomialFitConfig {
    fn default() -> Self {
        MultinomialFitConfig {
            tolerance: 1e-6,
            max_iterations: 500,
            l2_penalty: Some(1e-6),
        }
    }
}

fn softmax_of(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn activations(theta: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(
            theta
                .iter()
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()),
        )
        .collect()
}

pub fn predict_destination_probs(model: &DestinationModel, x: &CovariateVector) -> Vec<f64> {
    softmax_of(&activations(&model.theta, x.as_slice()))
}

/// Observations grouped by covariate pattern with per-category counts.
struct Patterns {
    rows: Vec<Vec<f64>>,
    counts: Vec<Vec<f64>>,
    n: f64,
    q: usize,
    s: usize,
}

impl Patterns {
    fn new(observations: &[ChoiceObservation], s: usize) -> Result<Self> {
        let Some((first, _)) = observations.first() else {
            return Err(Error::InvalidModel("no observations".into()));
        };
        let q = first.len();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut p = Patterns {
            rows: Vec::new(),
            counts: Vec::new(),
            n: 0.0,
            q,
            s,
        };
        for (x, c) in observations {
            if x.len() != q {
                return Err(Error::InvalidModel("inconsistent covariate length".into()));
            }
            if *c >= s {
                return Err(Error::InvalidModel(format!("category {c} out of range 0..{s}")));
            }
            let key: Vec<u64> = x.as_slice().iter().map(|v| v.to_bits()).collect();
            let k = *index.entry(key).or_insert_with(|| {
                p.rows.push(x.as_slice().to_vec());
                p.counts.push(vec![0.0; s]);
                p.rows.len() - 1
            });
            p.counts[k][*c] += 1.0;
            p.n += 1.0;
        }
        Ok(p)
    }

    fn objective(&self, theta: &[Vec<f64>], l2: f64) -> f64 {
        let mut ll = 0.0;
        for (row, counts) in self.rows.iter().zip(&self.counts) {
            let z = activations(theta, row);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for (zj, cj) in z.iter().zip(counts) {
                if *cj > 0.0 {
                    ll += cj * (zj - lse);
                }
            }
        }
        ll - 0.5 * l2 * sq_norm(theta)
    }

    fn gradient(&self, theta: &[Vec<f64>], l2: f64) -> Vec<Vec<f64>> {
        let mut g: Vec<Vec<f64>> = theta
            .iter()
            .map(|row| row.iter().map(|t| -l2 * t).collect())
            .collect();
        for (row, counts) in self.rows.iter().zip(&self.counts) {
            let p = softmax_of(&activations(theta, row));
            let total: f64 = counts.iter().sum();
            for j in 1..self.s {
                let r = counts[j] - total * p[j];
                if r == 0.0 {
                    continue;
                }
                for (gk, xk) in g[j - 1].iter_mut().zip(row) {
                    *gk += r * xk;
                }
            }
        }
        g
    }
}

fn sq_norm(theta: &[Vec<f64>]) -> f64 {
    theta.iter().flatten().map(|t| t * t).sum()
}

fn flat(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn axpy(theta: &[Vec<f64>], step: f64, dir: &[Vec<f64>]) -> Vec<Vec<f64>> {
    theta
        .iter()
        .zip(dir)
        .map(|(r, d)| r.iter().zip(d).map(|(a, b)| a + step * b).collect())
        .collect()
}

/// Penalised multinomial log-likelihood (sum over observations).
pub fn multinomial_log_likelihood(
    theta: &[Vec<f64>],
    observations: &[ChoiceObservation],
    s: usize,
    l2: f64,
) -> Result<f64> {
    Ok(Patterns::new(observations, s)?.objective(theta, l2))
}

/// Analytic gradient of [`multinomial_log_likelihood`] with respect to `theta`.
pub fn multinomial_gradient(
    theta: &[Vec<f64>],
    observations: &[ChoiceObservation],
    s: usize,
    l2: f64,
) -> Result<Vec<Vec<f64>>> {
    Ok(Patterns::new(observations, s)?.gradient(theta, l2))
}

/// Fits the destination model by full-batch gradient ascent with a
/// Barzilai-Borwein trial step and Armijo backtracking.
pub fn fit_multinomial(
    stop_id: StopId,
    categories: Vec<StopId>,
    observations: &[ChoiceObservation],
    config: &MultinomialFitConfig,
) -> Result<(DestinationModel, FitReport)> {
    let s = categories.len();
    if s == 0 {
        return Err(Error::InvalidModel("no destination categories".into()));
    }
    let data = Patterns::new(observations, s)?;
    let l2 = config.l2_penalty.unwrap_or(0.0).max(0.0);
    if l2 == 0.0 {
        for c in 0..s {
            if data.counts.iter().all(|k| k[c] == 0.0) {
                return Err(Error::EmptyCategory(c));
            }
        }
    }
    let q = data.q;
    let n = data.n;
    let mut theta = vec![vec![0.0; q]; s - 1];
    let mut obj = data.objective(&theta, l2);
    let mut grad = data.gradient(&theta, l2);
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut step = 1.0 / n;
    let mut converged = inf_norm(&flat(&grad)) / n <= config.tolerance;

    while !converged && iterations < config.max_iterations && s > 1 {
        iterations += 1;
        let gsq = sq_norm(&grad);
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = axpy(&theta, t, &grad);
            let cand_obj = data.objective(&cand, l2);
            if cand_obj.is_finite() && cand_obj >= obj + 1e-4 * t * gsq {
                accepted = Some((cand, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else {
            break;
        };
        let new_grad = data.gradient(&cand, l2);
        // Barzilai-Borwein step for the next trial: <s,s> / <s,-y>.
        let ds = flat(&axpy(&cand, -1.0, &theta));
        let dg = flat(&axpy(&new_grad, -1.0, &grad));
        let ss: f64 = ds.iter().map(|v| v * v).sum();
        let sy: f64 = -ds.iter().zip(&dg).map(|(a, b)| a * b).sum::<f64>();
        step = if sy > 0.0 { ss / sy } else { t * 2.0 };
        theta = cand;
        obj = cand_obj;
        grad = new_grad;
        trace.push(obj);
        converged = inf_norm(&flat(&grad)) / n <= config.tolerance;
    }

    let gradient_norm = inf_norm(&flat(&grad)) / n;
    let log_likelihood = data.objective(&theta, 0.0);
    Ok((
        DestinationModel {
            stop_id,
            categories,
            theta,
        },
        FitReport {
            log_likelihood,
            iterations,
            converged: gradient_norm <= config.tolerance,
            gradient_norm,
            trace,
            penalty: l2,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{encode, CalendarContext, Weekday, NUM_COVARIATES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn icpt() -> CovariateVector {
        CovariateVector::from_raw(vec![1.0])
    }

    fn naive_softmax(z: &[f64]) -> Vec<f64> {
        let s: f64 = z.iter().map(|v| v.exp()).sum();
        z.iter().map(|v| v.exp() / s).collect()
    }

    #[test]
    fn uniform_softmax() {
        let m = DestinationModel::uniform(1, vec![2, 3, 4, 5], NUM_COVARIATES);
        let x = encode(&CalendarContext::new(Weekday::Wed, 1, false).unwrap());
        assert_eq!(predict_destination_probs(&m, &x), vec![0.25; 4]);
    }

    #[test]
    fn two_category_softmax_arithmetic() {
        let m = DestinationModel {
            stop_id: 1,
            categories: vec![2, 3],
            theta: vec![vec![3f64.ln()]],
        };
        let p = predict_destination_probs(&m, &icpt());
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn max_subtraction_matches_naive_and_survives_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-20.0..20.0)).collect();
            for (a, b) in softmax_of(&z).iter().zip(naive_softmax(&z)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let p = softmax_of(&[0.0, 1000.0, 999.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_two_category_fit() {
        let obs: Vec<_> = (0..100).map(|i| (icpt(), i % 2)).collect();
        let (m, rep) = fit_multinomial(1, vec![5, 6], &obs, &Default::default()).unwrap();
        assert!(rep.converged);
        assert!(m.theta[0][0].abs() < 1e-9);
        let p = predict_destination_probs(&m, &icpt());
        assert!((p[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn intercept_only_matches_frequencies() {
        let obs: Vec<_> = (0..1000)
            .map(|i| (icpt(), if i < 500 { 0 } else if i < 800 { 1 } else { 2 }))
            .collect();
        let (m, rep) = fit_multinomial(1, vec![1, 2, 3], &obs, &Default::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        let p = predict_destination_probs(&m, &icpt());
        for (pi, fi) in p.iter().zip([0.5, 0.3, 0.2]) {
            assert!((pi - fi).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn single_category_is_trivial() {
        let obs = vec![(icpt(), 0), (icpt(), 0)];
        let (m, rep) = fit_multinomial(1, vec![4], &obs, &Default::default()).unwrap();
        assert!(m.theta.is_empty());
        assert!(rep.converged);
        assert_eq!(predict_destination_probs(&m, &icpt()), vec![1.0]);
    }

    #[test]
    fn empty_category_without_penalty() {
        let obs = vec![(icpt(), 0), (icpt(), 2)];
        let cfg = MultinomialFitConfig {
            l2_penalty: None,
            ..Default::default()
        };
        assert!(matches!(
            fit_multinomial(1, vec![1, 2, 3], &obs, &cfg),
            Err(Error::EmptyCategory(1))
        ));
        // The default penalty keeps the estimate finite.
        let (m, _) = fit_multinomial(1, vec![1, 2, 3], &obs, &Default::default()).unwrap();
        assert!(m.theta.iter().flatten().all(|t| t.is_finite()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let s = 3;
            let q = 4;
            let obs: Vec<_> = (0..40)
                .map(|_| {
                    let mut x = vec![1.0];
                    x.extend((1..q).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }));
                    (CovariateVector::from_raw(x), rng.random_range(0..s))
                })
                .collect();
            let theta: Vec<Vec<f64>> = (0..s - 1)
                .map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let l2 = 0.1;
            let g = multinomial_gradient(&theta, &obs, s, l2).unwrap();
            let h = 1e-5;
            for r in 0..s - 1 {
                for c in 0..q {
                    let mut up = theta.clone();
                    up[r][c] += h;
                    let mut dn = theta.clone();
                    dn[r][c] -= h;
                    let fd = (multinomial_log_likelihood(&up, &obs, s, l2).unwrap()
                        - multinomial_log_likelihood(&dn, &obs, s, l2).unwrap())
                        / (2.0 * h);
                    let rel = (fd - g[r][c]).abs() / g[r][c].abs().max(1e-8);
                    assert!(rel < 1e-4 || (fd - g[r][c]).abs() < 1e-8, "fd {fd} vs {}", g[r][c]);
                }
            }
        }
    }

    #[test]
    fn converged_fit_has_small_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs: Vec<_> = (0..2000)
            .map(|_| {
                let ctx = CalendarContext::new(
                    Weekday::from_index(rng.random_range(0..7)),
                    [22, 23, 0, 1][rng.random_range(0..4)],
                    false,
                )
                .unwrap();
                (encode(&ctx), rng.random_range(0..4))
            })
            .collect();
        let (m, rep) = fit_multinomial(1, vec![1, 2, 3, 4], &obs, &Default::default()).unwrap();
        let g = multinomial_gradient(&m.theta, &obs, 4, rep.penalty).unwrap();
        let norm = inf_norm(&flat(&g)) / obs.len() as f64;
        if rep.converged {
            assert!(norm <= 1e-6);
        }
        for w in rep.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
    #[test]
    fn recovers_synthetic_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = 4;
        let theta: Vec<Vec<f64>> = (0..s - 1)
            .map(|r| (0..NUM_COVARIATES).map(|c| 0.4 * ((r * 31 + c) as f64 * 0.9).sin()).collect())
            .collect();
        let truth = DestinationModel {
            stop_id: 1,
            categories: vec![2, 3, 4, 5],
            theta,
        };
        let hours = [22u8, 23, 0, 1, 2, 3];
        let patterns: Vec<CovariateVector> = (0..7)
            .flat_map(|d| hours.iter().map(move |&h| encode(&CalendarContext::new(Weekday::from_index(d), h, false).unwrap())))
            .collect();
        let obs: Vec<_> = (0..20_000)
            .map(|_| {
                let x = patterns[rng.random_range(0..patterns.len())].clone();
                let p = predict_destination_probs(&truth, &x);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let c = p.iter().position(|pi| {
                    acc += pi;
                    u < acc
                });
                (x, c.unwrap_or(s - 1))
            })
            .collect();
        let (m, rep) = fit_multinomial(1, truth.categories.clone(), &obs, &Default::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        // Per-pattern error is dominated by sampling noise of the estimator,
        // so the worst of the 42 patterns gets a wider band than the mean.
        let tv: Vec<f64> = patterns
            .iter()
            .map(|x| {
                predict_destination_probs(&m, x)
                    .iter()
                    .zip(predict_destination_probs(&truth, x))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 2.0
            })
            .collect();
        let mean = tv.iter().sum::<f64>() / tv.len() as f64;
        let max = tv.iter().copied().fold(0.0, f64::max);
        assert!(mean < 0.02 && max < 0.05, "mean {mean}, max {max}");
    }
}
