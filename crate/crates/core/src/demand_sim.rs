//! Monte-Carlo sampling of ride-request scenarios from fitted stop models.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::{encode, CalendarContext, CovariateVector, Weekday};
use crate::error::{Error, Result};
use crate::network::StopId;
use crate::regression::{predict_destination_probs, predict_intensity, DestinationModel, StopModels};
use crate::request_model::RequestId;

pub const MAX_GROUP_SIZE: usize = 6;
const DESTINATION_RETRIES: usize = 100;

/// Observed distribution of passenger group sizes 1..=6.
pub const TABLE_GROUP_SIZES: [f64; MAX_GROUP_SIZE] = [0.804, 0.153, 0.026, 0.011, 0.004, 0.002];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSizeDistribution {
    probs: [f64; MAX_GROUP_SIZE],
}

impl Default for GroupSizeDistribution {
    fn default() -> Self {
        GroupSizeDistribution {
            probs: TABLE_GROUP_SIZES,
        }
    }
}

impl GroupSizeDistribution {
    pub fn new(probs: [f64; MAX_GROUP_SIZE]) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "group size probabilities must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        Ok(GroupSizeDistribution { probs })
    }

    pub fn point_mass(size: usize) -> Self {
        let mut probs = [0.0; MAX_GROUP_SIZE];
        probs[size - 1] = 1.0;
        GroupSizeDistribution { probs }
    }

    pub fn probs(&self) -> &[f64; MAX_GROUP_SIZE] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k + 1) as f64 * p)
            .sum()
    }

    pub fn max_size(&self) -> u32 {
        self.probs.iter().rposition(|&p| p > 0.0).map_or(1, |k| k as u32 + 1)
    }
}

pub fn downscale_intensity(lambda: f64, dist: &GroupSizeDistribution) -> f64 {
    lambda / dist.mean()
}

pub fn sample_request_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("finite positive intensity").sample(rng) as u64
}

pub fn sample_group_size<R: Rng + ?Sized>(dist: &GroupSizeDistribution, rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in dist.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32 + 1;
        }
    }
    dist.max_size()
}

/// `count` uniform times in `[hour_start, hour_start + 3600)` seconds, ascending.
pub fn sample_arrival_times<R: Rng + ?Sized>(count: usize, hour_start: f64, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..count)
        .map(|_| hour_start + 3600.0 * rng.random::<f64>())
        .collect();
    t.sort_by(f64::total_cmp);
    t
}

pub fn sample_destination<R: Rng + ?Sized>(model: &DestinationModel, x: &CovariateVector, rng: &mut R) -> StopId {
    let probs = predict_destination_probs(model, x);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (p, &stop) in probs.iter().zip(&model.categories) {
        acc += p;
        if u < acc {
            return stop;
        }
    }
    *model.categories.last().expect("at least one destination")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: RequestId,
    pub submission_time_s: i64,
    pub pickup_stop: StopId,
    pub dropoff_stop: StopId,
    pub group_size: u32,
    pub earliest_pickup_s: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayTemplate {
    pub weekday: Weekday,
    pub holiday: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub days: Vec<DayTemplate>,
    /// Wall-clock hours of service in timeline order; later hours that wrap past
    /// midnight belong to the next calendar day.
    pub hours: Vec<u8>,
    pub rng_seed: u64,
    pub stops: Vec<StopId>,
    /// Requests are submitted this many seconds before their earliest pick-up.
    pub reveal_lead_s: i64,
}

impl ScenarioConfig {
    /// Monday..Sunday, 22:00 to 03:59, no holidays.
    pub fn week(stops: Vec<StopId>, rng_seed: u64) -> Self {
        ScenarioConfig {
            days: Weekday::ALL
                .iter()
                .map(|&weekday| DayTemplate {
                    weekday,
                    holiday: false,
                })
                .collect(),
            hours: vec![22, 23, 0, 1, 2, 3],
            rng_seed,
            stops,
            reveal_lead_s: 45,
        }
    }

    /// Seconds from the evening start to the start of `hour`.
    pub fn hour_offset_s(&self, hour: u8) -> i64 {
        let first = self.hours.first().copied().unwrap_or(hour);
        ((hour as i64 - first as i64).rem_euclid(24)) * 3600
    }

    /// Calendar context for `hour` of the evening that starts on `day`.
    pub fn context(&self, day: &DayTemplate, hour: u8) -> CalendarContext {
        let first = self.hours.first().copied().unwrap_or(hour);
        let weekday = if hour < first { day.weekday.succ() } else { day.weekday };
        CalendarContext::new(weekday, hour, day.holiday).expect("hour < 24")
    }
}

/// One evening of requests, sorted by earliest pick-up with ids from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveningScenario {
    pub day_index: usize,
    pub weekday: Weekday,
    pub holiday: bool,
    pub requests: Vec<RequestRecord>,
}

/// RNG stream for one (stop, day, hour) cell; streams are independent of the
/// order in which cells are generated.
pub fn cell_rng(seed: u64, stop: StopId, day: usize, hour: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stop as u64) << 24) | ((day as u64 & 0xffff) << 8) | hour as u64);
    rng
}

struct Draft {
    earliest_s: i64,
    pickup: StopId,
    dropoff: StopId,
    group: u32,
}

fn generate_cell(
    cfg: &ScenarioConfig,
    models: &StopModels,
    dist: &GroupSizeDistribution,
    day_index: usize,
    hour: u8,
) -> Vec<Draft> {
    let day = &cfg.days[day_index];
    let stop = models.stop_id;
    let x = encode(&cfg.context(day, hour));
    let lambda = downscale_intensity(predict_intensity(&models.poisson, &x), dist);
    let mut rng = cell_rng(cfg.rng_seed, stop, day_index, hour);
    let count = sample_request_count(lambda, &mut rng) as usize;
    let start = cfg.hour_offset_s(hour) as f64;
    let mut out = Vec::with_capacity(count);
    for t in sample_arrival_times(count, start, &mut rng) {
        let group = sample_group_size(dist, &mut rng);
        let dest = (0..DESTINATION_RETRIES)
            .map(|_| sample_destination(&models.destination, &x, &mut rng))
            .find(|&d| d != stop);
        match dest {
            Some(dropoff) => out.push(Draft {
                earliest_s: t.floor() as i64,
                pickup: stop,
                dropoff,
                group,
            }),
            None => log::warn!("stop {stop}: destination model only returns the origin, request dropped"),
        }
    }
    out
}

pub fn generate_scenario(
    cfg: &ScenarioConfig,
    models: &BTreeMap<StopId, StopModels>,
    dist: &GroupSizeDistribution,
) -> Result<Vec<EveningScenario>> {
    if cfg.hours.is_empty() {
        return Err(Error::Input("scenario needs at least one service hour".into()));
    }
    let mut stop_models = Vec::with_capacity(cfg.stops.len());
    for s in &cfg.stops {
        stop_models.push(models.get(s).ok_or(Error::MissingModel(*s))?);
    }
    let evenings = (0..cfg.days.len())
        .map(|d| {
            let mut drafts: Vec<Draft> = stop_models
                .par_iter()
                .flat_map_iter(|m| cfg.hours.iter().flat_map(move |&h| generate_cell(cfg, m, dist, d, h)))
                .collect();
            drafts.sort_by_key(|r| (r.earliest_s, r.pickup, r.dropoff, r.group));
            let requests = drafts
                .into_iter()
                .enumerate()
                .map(|(i, r)| RequestRecord {
                    request_id: i as RequestId + 1,
                    submission_time_s: r.earliest_s - cfg.reveal_lead_s,
                    pickup_stop: r.pickup,
                    dropoff_stop: r.dropoff,
                    group_size: r.group,
                    earliest_pickup_s: r.earliest_s,
                })
                .collect();
            EveningScenario {
                day_index: d,
                weekday: cfg.days[d].weekday,
                holiday: cfg.days[d].holiday,
                requests,
            }
        })
        .collect();
    Ok(evenings)
}

pub const SCENARIO_HEADER: [&str; 6] = [
    "request_id",
    "submission_time_s",
    "pickup_stop",
    "dropoff_stop",
    "group_size",
    "earliest_pickup_s",
];

pub fn write_scenario_csv(path: &Path, requests: &[RequestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if requests.is_empty() {
        w.write_record(SCENARIO_HEADER)?;
    }
    for r in requests {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenario_csv(path: &Path) -> Result<Vec<RequestRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SCENARIO_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            row: 1,
            msg: format!("expected header {}", SCENARIO_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<RequestRecord>().enumerate() {
        let r = rec.map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            row: row + 2,
            msg: e.to_string(),
        })?;
        if r.pickup_stop == r.dropoff_stop {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                row: row + 2,
                msg: "pick-up equals drop-off".into(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::NUM_COVARIATES;
    use crate::regression::{FitReport, PoissonModel};

    fn fit_report() -> FitReport {
        FitReport {
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
            trace: vec![],
            penalty: 0.0,
        }
    }

    pub(crate) fn constant_models(stop: StopId, lambda: f64, dests: Vec<StopId>) -> StopModels {
        let mut beta = vec![0.0; NUM_COVARIATES];
        beta[0] = if lambda > 0.0 { lambda.ln() } else { -1e3 };
        StopModels {
            stop_id: stop,
            poisson: PoissonModel { stop_id: stop, beta },
            poisson_fit: fit_report(),
            destination: DestinationModel::uniform(stop, dests, NUM_COVARIATES),
            destination_fit: fit_report(),
        }
    }

    #[test]
    fn table_mean_and_downscale() {
        let d = GroupSizeDistribution::default();
        assert!((d.mean() - 1.264).abs() < 1e-12);
        assert!((downscale_intensity(1.264, &d) - 1.0).abs() < 1e-12);
        assert_eq!(downscale_intensity(0.0, &d), 0.0);
        assert_eq!(downscale_intensity(3.5, &GroupSizeDistribution::point_mass(1)), 3.5);
        assert!(GroupSizeDistribution::new([0.5, 0.4, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_samplers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample_request_count(0.0, &mut rng) == 0));
        let d = GroupSizeDistribution::point_mass(2);
        assert!((0..100).all(|_| sample_group_size(&d, &mut rng) == 2));
        assert!(sample_arrival_times(0, 0.0, &mut rng).is_empty());
        let t = sample_arrival_times(3, 7200.0, &mut rng);
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert!(t.iter().all(|&v| (7200.0..10800.0).contains(&v)));
        let single = DestinationModel::uniform(5, vec![9], NUM_COVARIATES);
        let x = CovariateVector::from_raw(vec![1.0; NUM_COVARIATES]);
        assert!((0..50).all(|_| sample_destination(&single, &x, &mut rng) == 9));
    }

    #[test]
    fn scenario_is_sorted_and_deterministic() {
        let models: BTreeMap<_, _> = (1..=4)
            .map(|s| (s, constant_models(s, 2.0, (1..=4).filter(|&d| d != s).collect())))
            .collect();
        let cfg = ScenarioConfig::week(vec![1, 2, 3, 4], 99);
        let a = generate_scenario(&cfg, &models, &GroupSizeDistribution::default()).unwrap();
        let b = generate_scenario(&cfg, &models, &GroupSizeDistribution::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        for ev in &a {
            assert!(!ev.requests.is_empty());
            for (i, r) in ev.requests.iter().enumerate() {
                assert_eq!(r.request_id as usize, i + 1);
                assert_ne!(r.pickup_stop, r.dropoff_stop);
                assert_eq!(r.submission_time_s, r.earliest_pickup_s - 45);
                assert!((0..6 * 3600).contains(&r.earliest_pickup_s));
            }
            assert!(ev.requests.windows(2).all(|w| w[0].earliest_pickup_s <= w[1].earliest_pickup_s));
        }
        let other = generate_scenario(&ScenarioConfig { rng_seed: 100, ..cfg }, &models, &Default::default()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_intensity_gives_empty_scenario() {
        let models: BTreeMap<_, _> = (1..=3).map(|s| (s, constant_models(s, 0.0, vec![9]))).collect();
        let cfg = ScenarioConfig::week(vec![1, 2, 3], 1);
        let evs = generate_scenario(&cfg, &models, &Default::default()).unwrap();
        assert!(evs.iter().all(|e| e.requests.is_empty()));
    }

    #[test]
    fn missing_model() {
        let models: BTreeMap<_, _> = [(1, constant_models(1, 1.0, vec![2]))].into();
        let cfg = ScenarioConfig::week(vec![1, 2], 1);
        assert!(matches!(
            generate_scenario(&cfg, &models, &Default::default()),
            Err(Error::MissingModel(2))
        ));
    }

    #[test]
    fn origin_only_destination_is_dropped() {
        let models: BTreeMap<_, _> = [(1, constant_models(1, 5.0, vec![1]))].into();
        let cfg = ScenarioConfig::week(vec![1], 1);
        let evs = generate_scenario(&cfg, &models, &Default::default()).unwrap();
        assert!(evs.iter().all(|e| e.requests.is_empty()));
    }

    #[test]
    fn post_midnight_hours_use_next_calendar_day() {
        let cfg = ScenarioConfig::week(vec![], 0);
        let day = cfg.days[6];
        assert_eq!(cfg.context(&day, 23).weekday, Weekday::Sun);
        assert_eq!(cfg.context(&day, 1).weekday, Weekday::Mon);
        assert_eq!(cfg.hour_offset_s(22), 0);
        assert_eq!(cfg.hour_offset_s(3), 5 * 3600);
    }

    #[test]
    fn scenario_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let recs = vec![RequestRecord {
            request_id: 1,
            submission_time_s: -45,
            pickup_stop: 3,
            dropoff_stop: 4,
            group_size: 2,
            earliest_pickup_s: 0,
        }];
        write_scenario_csv(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("request_id,submission_time_s,pickup_stop,dropoff_stop,group_size,earliest_pickup_s\n"));
        assert_eq!(read_scenario_csv(&p).unwrap(), recs);
    }
}
