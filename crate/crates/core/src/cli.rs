//! Command-line pipeline: fit demand models, simulate evenings, solve them
//! with the rolling-horizon dispatcher, and compare against the bus baseline.
//!
//! Every command writes a `manifest.json` next to its outputs holding the
//! resolved configuration and its SHA-256 hash.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bus_baseline::{read_bus_log, simulate_bus_trips, Timetable};
use crate::covariates::{encode, CalendarContext, Weekday};
use crate::demand_sim::{
    generate_scenario, read_scenario_csv, write_scenario_csv, DayTemplate, GroupSizeDistribution, ScenarioConfig,
    TABLE_GROUP_SIZES,
};
use crate::error::{Error, Result};
use crate::fleet::{plan_fleet, FleetPlan, FleetScenario};
use crate::metrics::{aggregate, hourly_breakdown, outcomes_from_run, replay_log, report_for_run, write_report_csv, ReportRow, TripMetrics};
use crate::network::{StopId, StopNetwork};
use crate::regression::{
    fit_multinomial, fit_poisson, ChoiceObservation, CountObservation, MultinomialFitConfig, PoissonFitConfig, StopModels,
};
use crate::request_model::derive_all;
use crate::rolling_horizon::{read_log, run, RunConfig};
use crate::validation::validate_outcome;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub poisson_tolerance: f64,
    pub poisson_max_iterations: usize,
    pub poisson_separation_ridge: Option<f64>,
    pub multinomial_tolerance: f64,
    pub multinomial_max_iterations: usize,
    pub multinomial_l2: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = PoissonFitConfig::default();
        let m = MultinomialFitConfig::default();
        ModelConfig {
            poisson_tolerance: p.tolerance,
            poisson_max_iterations: p.max_iterations,
            poisson_separation_ridge: p.separation_ridge,
            multinomial_tolerance: m.tolerance,
            multinomial_max_iterations: m.max_iterations,
            multinomial_l2: m.l2_penalty,
        }
    }
}

impl ModelConfig {
    pub fn poisson(&self) -> PoissonFitConfig {
        PoissonFitConfig {
            tolerance: self.poisson_tolerance,
            max_iterations: self.poisson_max_iterations,
            separation_ridge: self.poisson_separation_ridge,
        }
    }

    pub fn multinomial(&self) -> MultinomialFitConfig {
        MultinomialFitConfig {
            tolerance: self.multinomial_tolerance,
            max_iterations: self.multinomial_max_iterations,
            l2_penalty: self.multinomial_l2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub weeks: usize,
    pub seed: u64,
    pub hours: Vec<u8>,
    pub reveal_lead_s: i64,
    pub group_sizes: [f64; 6],
    /// Weeks (0-based) whose evenings are school holidays.
    pub holiday_weeks: Vec<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            weeks: 30,
            seed: 1,
            hours: vec![22, 23, 0, 1, 2, 3],
            reveal_lead_s: 45,
            group_sizes: TABLE_GROUP_SIZES,
            holiday_weeks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    /// `stops.csv` with stop_id,name,x_km,y_km.
    pub network: Option<PathBuf>,
    /// Optional from_stop,to_stop,cost_km matrix.
    pub cost_matrix: Option<PathBuf>,
    pub timetable_stops: Option<PathBuf>,
    pub timetable_trips: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathConfig,
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    pub run: RunConfig,
    /// Seed for the simulated bus waiting times.
    pub bus_seed: u64,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = fs::read_to_string(path)?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        for p in [&cfg.paths.network, &cfg.paths.cost_matrix, &cfg.paths.timetable_stops, &cfg.paths.timetable_trips]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Input(format!("configured file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn network(&self) -> Result<Arc<StopNetwork>> {
        let p = self
            .paths
            .network
            .as_deref()
            .ok_or_else(|| Error::Input("no network given (--network or paths.network)".into()))?;
        Ok(Arc::new(StopNetwork::from_csv(p, self.paths.cost_matrix.as_deref())?))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    config: &'a PipelineConfig,
    inputs: BTreeMap<&'a str, String>,
}

fn write_manifest(dir: &Path, command: &str, cfg: &PipelineConfig, inputs: BTreeMap<&str, String>) -> Result<()> {
    let m = Manifest {
        command,
        config_hash: cfg.hash(),
        config: cfg,
        inputs,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

// ---------------------------------------------------------------- fit

/// One line of the boarding log. `count` defaults to one passenger.
#[derive(Debug, Clone, Deserialize)]
struct LogRow {
    date: String,
    weekday: String,
    hour: u8,
    holiday: String,
    origin_stop: StopId,
    dest_stop: StopId,
    #[serde(default)]
    count: Option<u64>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummaryRow {
    pub stop_id: StopId,
    pub cells: usize,
    pub passengers: u64,
    pub poisson_log_likelihood: f64,
    pub poisson_converged: bool,
    pub destinations: usize,
    pub destination_log_likelihood: f64,
    pub destination_converged: bool,
}

/// One aggregated row of a boarding log, as read by [`fit_models`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardingRecord {
    pub date: String,
    pub weekday: String,
    pub hour: u8,
    pub holiday: u8,
    pub origin_stop: StopId,
    pub dest_stop: StopId,
    pub count: u64,
}

pub fn write_boarding_log(path: &Path, rows: &[BoardingRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["date", "weekday", "hour", "holiday", "origin_stop", "dest_stop", "count"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Samples a boarding log from known models: for every date, hour and stop,
/// a Poisson number of passengers with destinations from the stop's
/// destination model. Dates are labelled `day0000`, `day0001`, ... starting
/// on `first_weekday`.
pub fn synthetic_boarding_log(
    models: &BTreeMap<StopId, StopModels>,
    n_dates: usize,
    first_weekday: Weekday,
    hours: &[u8],
    holiday_dates: &BTreeSet<usize>,
    seed: u64,
) -> Vec<BoardingRecord> {
    use crate::demand_sim::{cell_rng, sample_destination, sample_request_count};
    use crate::regression::predict_intensity;
    let mut rows = Vec::new();
    for d in 0..n_dates {
        let weekday = Weekday::from_index((first_weekday.index() + d) % 7);
        let holiday = holiday_dates.contains(&d);
        for &h in hours {
            let ctx = CalendarContext::new(weekday, h, holiday).expect("valid hour");
            let x = encode(&ctx);
            for (&stop, m) in models {
                let mut rng = cell_rng(seed, stop, d, h);
                let n = sample_request_count(predict_intensity(&m.poisson, &x), &mut rng);
                let mut by_dest: BTreeMap<StopId, u64> = BTreeMap::new();
                for _ in 0..n {
                    *by_dest.entry(sample_destination(&m.destination, &x, &mut rng)).or_default() += 1;
                }
                let template = BoardingRecord {
                    date: format!("day{d:04}"),
                    weekday: weekday.short_name().to_string(),
                    hour: h,
                    holiday: holiday as u8,
                    origin_stop: stop,
                    dest_stop: stop,
                    count: 0,
                };
                if by_dest.is_empty() {
                    // Keeps the cell visible to the fit as a zero count.
                    rows.push(template.clone());
                }
                for (dest, count) in by_dest {
                    rows.push(BoardingRecord {
                        dest_stop: dest,
                        count,
                        ..template.clone()
                    });
                }
            }
        }
    }
    rows
}

/// A passenger count for one (calendar date, hour) cell.
type CellKey = (String, u8);

/// Fits one Poisson and one destination model per departure stop.
///
/// Every (date, hour) present anywhere in the log is a cell; a stop with no
/// boardings in a cell contributes a zero count there.
pub fn fit_models(log_csv: &Path, cfg: &ModelConfig) -> Result<(Vec<StopModels>, Vec<FitSummaryRow>)> {
    let mut rdr = csv::Reader::from_path(log_csv)?;
    let mut cells: BTreeMap<CellKey, CalendarContext> = BTreeMap::new();
    let mut counts: BTreeMap<StopId, BTreeMap<CellKey, u64>> = BTreeMap::new();
    let mut dests: BTreeMap<StopId, Vec<(CalendarContext, StopId, u64)>> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<LogRow>().enumerate() {
        let row = i + 2;
        let schema = |msg: String| Error::Schema {
            path: log_csv.to_path_buf(),
            row,
            msg,
        };
        let r = rec.map_err(|e| schema(e.to_string()))?;
        let weekday = Weekday::from_str(&r.weekday).map_err(schema)?;
        let holiday = parse_bool(&r.holiday).ok_or_else(|| schema(format!("bad holiday flag {:?}", r.holiday)))?;
        let ctx = CalendarContext::new(weekday, r.hour, holiday).ok_or_else(|| schema(format!("hour {} out of range", r.hour)))?;
        let key = (r.date.clone(), r.hour);
        if let Some(prev) = cells.insert(key.clone(), ctx) {
            if prev != ctx {
                return Err(schema(format!("date {} has inconsistent weekday or holiday flag", r.date)));
            }
        }
        let n = r.count.unwrap_or(1);
        *counts.entry(r.origin_stop).or_default().entry(key).or_default() += n;
        if n > 0 {
            dests.entry(r.origin_stop).or_default().push((ctx, r.dest_stop, n));
        }
    }
    if counts.is_empty() {
        return Err(Error::Input(format!("{}: log contains no rows", log_csv.display())));
    }
    let pcfg = cfg.poisson();
    let mcfg = cfg.multinomial();
    let fitted: Vec<Result<Option<(StopModels, FitSummaryRow)>>> = counts
        .par_iter()
        .map(|(&stop, by_cell)| {
            let obs: Vec<CountObservation> = cells
                .iter()
                .map(|(k, ctx)| (encode(ctx), by_cell.get(k).copied().unwrap_or(0)))
                .collect();
            let Some(trips) = dests.get(&stop) else {
                log::warn!("stop {stop}: no boardings in the log, no model written");
                return Ok(None);
            };
            let (poisson, poisson_fit) = fit_poisson(stop, &obs, &pcfg)?;
            let mut freq: BTreeMap<StopId, u64> = BTreeMap::new();
            for (_, d, n) in trips {
                *freq.entry(*d).or_default() += n;
            }
            // Most frequent destination first, ties by stop id.
            let mut categories: Vec<StopId> = freq.keys().copied().collect();
            categories.sort_by_key(|d| (std::cmp::Reverse(freq[d]), *d));
            let index: BTreeMap<StopId, usize> = categories.iter().enumerate().map(|(i, d)| (*d, i)).collect();
            let choices: Vec<ChoiceObservation> = trips
                .iter()
                .flat_map(|(ctx, d, n)| std::iter::repeat_n((encode(ctx), index[d]), *n as usize))
                .collect();
            let (destination, destination_fit) = fit_multinomial(stop, categories.clone(), &choices, &mcfg)?;
            let summary = FitSummaryRow {
                stop_id: stop,
                cells: obs.len(),
                passengers: obs.iter().map(|(_, y)| y).sum(),
                poisson_log_likelihood: poisson_fit.log_likelihood,
                poisson_converged: poisson_fit.converged,
                destinations: categories.len(),
                destination_log_likelihood: destination_fit.log_likelihood,
                destination_converged: destination_fit.converged,
            };
            Ok(Some((
                StopModels {
                    stop_id: stop,
                    poisson,
                    poisson_fit,
                    destination,
                    destination_fit,
                },
                summary,
            )))
        })
        .collect();
    let mut models = Vec::new();
    let mut summary = Vec::new();
    for (m, s) in fitted.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten() {
        models.push(m);
        summary.push(s);
    }
    if models.is_empty() {
        return Err(Error::Input(format!("{}: no stop has any boardings", log_csv.display())));
    }
    Ok((models, summary))
}

pub fn cmd_fit(log_csv: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    let (models, summary) = fit_models(log_csv, &cfg.model)?;
    fs::create_dir_all(out_dir)?;
    for m in &models {
        m.write_to_dir(out_dir)?;
    }
    let mut w = csv::Writer::from_path(out_dir.join("fit_summary.csv"))?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    write_manifest(out_dir, "fit", cfg, BTreeMap::from([("log", log_csv.display().to_string())]))
}

// ----------------------------------------------------------- simulate

pub fn scenario_file_name(week: usize, weekday: Weekday) -> String {
    format!("week{week:02}_{}.csv", weekday.short_name())
}

/// Parses names produced by [`scenario_file_name`].
pub fn parse_scenario_file_name(name: &str) -> Option<(usize, Weekday)> {
    let stem = name.strip_suffix(".csv")?.strip_prefix("week")?;
    let (w, d) = stem.split_once('_')?;
    Some((w.parse().ok()?, Weekday::from_str(d).ok()?))
}

pub fn simulation_config(cfg: &SimulationConfig, stops: Vec<StopId>) -> ScenarioConfig {
    let days = (0..cfg.weeks)
        .flat_map(|w| {
            let holiday = cfg.holiday_weeks.contains(&w);
            Weekday::ALL.iter().map(move |&weekday| DayTemplate { weekday, holiday })
        })
        .collect();
    ScenarioConfig {
        days,
        hours: cfg.hours.clone(),
        rng_seed: cfg.seed,
        stops,
        reveal_lead_s: cfg.reveal_lead_s,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FleetRow {
    day: String,
    max_avg_hourly_requests: f64,
    vehicles_a: usize,
    vehicles_b: usize,
    vehicles_c: usize,
}

pub fn write_fleet_plan(path: &Path, plan: &FleetPlan) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (d, f) in plan {
        w.serialize(FleetRow {
            day: d.short_name().to_string(),
            max_avg_hourly_requests: f.max_avg_hourly_requests,
            vehicles_a: f.vehicles_a,
            vehicles_b: f.vehicles_b,
            vehicles_c: f.vehicles_c,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fleet_plan(path: &Path) -> Result<FleetPlan> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut plan = FleetPlan::new();
    for (i, rec) in rdr.deserialize::<FleetRow>().enumerate() {
        let schema = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            row: i + 2,
            msg,
        };
        let r = rec.map_err(|e| schema(e.to_string()))?;
        let d = Weekday::from_str(&r.day).map_err(schema)?;
        plan.insert(
            d,
            crate::fleet::FleetSize {
                max_avg_hourly_requests: r.max_avg_hourly_requests,
                vehicles_a: r.vehicles_a,
                vehicles_b: r.vehicles_b,
                vehicles_c: r.vehicles_c,
            },
        );
    }
    Ok(plan)
}

/// Writes `weeks x 7` scenario files plus the fleet plan derived from them.
pub fn cmd_simulate(models_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let models = StopModels::read_dir(models_dir)?;
    if models.is_empty() {
        return Err(Error::Input(format!("{}: no stop models found", models_dir.display())));
    }
    let stops: Vec<StopId> = models.iter().map(|m| m.stop_id).collect();
    let by_stop: BTreeMap<StopId, StopModels> = models.into_iter().map(|m| (m.stop_id, m)).collect();
    let dist = GroupSizeDistribution::new(cfg.simulation.group_sizes)?;
    let sc = simulation_config(&cfg.simulation, stops);
    let evenings = generate_scenario(&sc, &by_stop, &dist)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::with_capacity(evenings.len());
    for ev in &evenings {
        let p = out_dir.join(scenario_file_name(ev.day_index / 7, ev.weekday));
        write_scenario_csv(&p, &ev.requests)?;
        files.push(p);
    }
    write_fleet_plan(&out_dir.join("fleet_plan.csv"), &plan_fleet(&evenings))?;
    write_manifest(out_dir, "simulate", cfg, BTreeMap::from([("models", models_dir.display().to_string())]))?;
    Ok(files)
}

// -------------------------------------------------------------- solve

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FleetChoice {
    A,
    B,
    C,
}

impl From<FleetChoice> for FleetScenario {
    fn from(f: FleetChoice) -> Self {
        match f {
            FleetChoice::A => FleetScenario::A,
            FleetChoice::B => FleetScenario::B,
            FleetChoice::C => FleetScenario::C,
        }
    }
}

/// How many vehicles to use for a scenario file.
#[derive(Debug, Clone)]
pub enum FleetSpec {
    Fixed(usize),
    Plan(FleetPlan, FleetScenario),
}

impl FleetSpec {
    fn vehicles(&self, day: Weekday) -> Result<usize> {
        match self {
            FleetSpec::Fixed(k) => Ok(*k),
            FleetSpec::Plan(p, s) => p
                .get(&day)
                .map(|f| f.vehicles(*s))
                .ok_or_else(|| Error::Input(format!("fleet plan has no entry for {day}"))),
        }
    }
}

/// Solves one scenario file and writes its report, event log, hourly table
/// and route traces into `out_dir`.
pub fn solve_file(scenario: &Path, day: &str, vehicles: usize, net: Arc<StopNetwork>, cfg: &PipelineConfig, out_dir: &Path) -> Result<ReportRow> {
    let records = read_scenario_csv(scenario)?;
    let run_cfg = RunConfig {
        vehicles,
        ..cfg.run.clone()
    };
    let requests = derive_all(&records, &net, &run_cfg.params, &run_cfg.window)?;
    let out = run(&requests, &run_cfg, net.clone())?;
    let violations = validate_outcome(&out, &run_cfg, &net);
    if !violations.is_empty() {
        return Err(Error::Infeasible(format!("{}: final routes violate {}", scenario.display(), violations.join("; "))));
    }
    fs::create_dir_all(out_dir)?;
    out.write_log(&out_dir.join("events.jsonl"))?;
    out.write_route_traces(&out_dir.join("routes"), run_cfg.capacity)?;
    let row = ReportRow::new(day, vehicles, report_for_run(&out), out.requests.len(), out.total_cost())?;
    write_report_csv(&out_dir.join("report.csv"), std::slice::from_ref(&row))?;
    let hourly = hourly_breakdown(&outcomes_from_run(&out), &out.requests, cfg.simulation.hours.first().copied().unwrap_or(22) as u32)?;
    let mut w = csv::Writer::from_path(out_dir.join("hourly.csv"))?;
    for h in &hourly {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(row)
}

fn day_of(path: &Path) -> Option<Weekday> {
    let name = path.file_name()?.to_str()?;
    parse_scenario_file_name(name).map(|(_, d)| d)
}

/// Solves one file or every scenario file of a directory. Directory runs
/// write `report.csv` (one row per file) and `summary.csv` (mean per weekday).
pub fn cmd_solve(scenario: &Path, out_dir: &Path, fleet: &FleetSpec, cfg: &PipelineConfig) -> Result<Vec<ReportRow>> {
    let net = cfg.network()?;
    fs::create_dir_all(out_dir)?;
    let mut inputs = BTreeMap::from([("scenario", scenario.display().to_string())]);
    if let Some(n) = &cfg.paths.network {
        inputs.insert("network", n.display().to_string());
    }
    if scenario.is_file() {
        let day = day_of(scenario);
        let vehicles = match (fleet, day) {
            (FleetSpec::Fixed(k), _) => *k,
            (spec, Some(d)) => spec.vehicles(d)?,
            (_, None) => return Err(Error::Input("a fleet plan needs scenario files named weekNN_Day.csv".into())),
        };
        let label = day.map_or_else(|| "all".to_string(), |d| d.short_name().to_string());
        let row = solve_file(scenario, &label, vehicles, net, cfg, out_dir)?;
        write_manifest(out_dir, "solve", cfg, inputs)?;
        return Ok(vec![row]);
    }
    let mut files: Vec<(usize, Weekday, PathBuf)> = fs::read_dir(scenario)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let (w, d) = parse_scenario_file_name(p.file_name()?.to_str()?)?;
            Some((w, d, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Input(format!("{}: no scenario files", scenario.display())));
    }
    let rows: Vec<Result<ReportRow>> = files
        .par_iter()
        .map(|(_, d, p)| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            solve_file(p, d.short_name(), fleet.vehicles(*d)?, net.clone(), cfg, &out_dir.join(stem))
        })
        .collect();
    let rows: Vec<ReportRow> = rows.into_iter().collect::<Result<_>>()?;
    write_report_csv(&out_dir.join("report.csv"), &rows)?;
    write_report_csv(&out_dir.join("summary.csv"), &summarise_by_day(&rows))?;
    write_manifest(out_dir, "solve", cfg, inputs)?;
    Ok(rows)
}

/// Mean report per weekday, in Monday..Sunday order.
pub fn summarise_by_day(rows: &[ReportRow]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<String, Vec<ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.day.clone()).or_default().push(r.clone());
    }
    let mut out: Vec<ReportRow> = groups.into_iter().filter_map(|(d, rs)| ReportRow::mean(d, &rs)).collect();
    out.sort_by_key(|r| (Weekday::from_str(&r.day).map(Weekday::index).unwrap_or(usize::MAX), r.day.clone()));
    out
}

// ------------------------------------------------------------ compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub day: String,
    pub vehicles: usize,
    pub total_routing_cost_km: f64,
    pub pct_denied: f64,
    pub pool_avg_regret: Option<f64>,
    pub bus_avg_regret: Option<f64>,
    pub ratio_avg_regret: Option<f64>,
    pub pool_avg_wait: Option<f64>,
    pub bus_avg_wait: Option<f64>,
    pub ratio_avg_wait: Option<f64>,
    pub pool_avg_ride: Option<f64>,
    pub bus_avg_ride: Option<f64>,
    pub ratio_avg_ride: Option<f64>,
    pub pool_avg_transport: Option<f64>,
    pub bus_avg_transport: Option<f64>,
    pub ratio_avg_transport: Option<f64>,
}

fn ratio(bus: Option<f64>, pool: Option<f64>) -> Option<f64> {
    match (bus, pool) {
        (Some(b), Some(p)) if p != 0.0 => Some(b / p),
        (Some(b), Some(p)) if b == p => Some(1.0),
        _ => None,
    }
}

/// Side-by-side table with bus/pool ratios. Both inputs are averaged per day
/// first; their day sets must be equal.
pub fn compare_reports(pool: &[ReportRow], bus: &[ReportRow]) -> Result<Vec<ComparisonRow>> {
    let pool = summarise_by_day(pool);
    let bus = summarise_by_day(bus);
    let pd: BTreeSet<&str> = pool.iter().map(|r| r.day.as_str()).collect();
    let bd: BTreeSet<&str> = bus.iter().map(|r| r.day.as_str()).collect();
    if pd != bd {
        return Err(Error::MismatchedDays(format!("pool has {pd:?}, bus has {bd:?}")));
    }
    Ok(pool
        .iter()
        .zip(&bus)
        .map(|(p, b)| ComparisonRow {
            day: p.day.clone(),
            vehicles: p.vehicles,
            total_routing_cost_km: p.total_routing_cost_km,
            pct_denied: p.pct_denied,
            pool_avg_regret: p.avg_regret,
            bus_avg_regret: b.avg_regret,
            ratio_avg_regret: ratio(b.avg_regret, p.avg_regret),
            pool_avg_wait: p.avg_wait,
            bus_avg_wait: b.avg_wait,
            ratio_avg_wait: ratio(b.avg_wait, p.avg_wait),
            pool_avg_ride: p.avg_ride,
            bus_avg_ride: b.avg_ride,
            ratio_avg_ride: ratio(b.avg_ride, p.avg_ride),
            pool_avg_transport: p.avg_transport,
            bus_avg_transport: b.avg_transport,
            ratio_avg_transport: ratio(b.avg_transport, p.avg_transport),
        })
        .collect())
}

pub fn cmd_compare(pool_csv: &Path, bus_csv: &Path, out_csv: &Path) -> Result<Vec<ComparisonRow>> {
    let pool = crate::metrics::read_report_csv(pool_csv)?;
    let bus = crate::metrics::read_report_csv(bus_csv)?;
    let rows = compare_reports(&pool, &bus)?;
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(out_csv)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

// ------------------------------------------------------------- report

/// Report recomputed from a rolling-horizon event log.
pub fn pool_report_from_log(log: &Path, day: &str, vehicles: usize) -> Result<ReportRow> {
    let records = read_log(log)?;
    let rep = replay_log(&records);
    let n = records
        .iter()
        .filter(|r| matches!(r, crate::rolling_horizon::LogRecord::Reveal { .. }))
        .count();
    ReportRow::new(day, vehicles, rep, n, 0.0)
}

/// Bus report per `day` label of the bus log (or one `all` row).
pub fn bus_report_rows(bus_log: &Path, tt: &Timetable, net: &StopNetwork, seed: u64) -> Result<Vec<ReportRow>> {
    let trips = read_bus_log(bus_log)?;
    if trips.is_empty() {
        return Err(Error::Input(format!("{}: bus log is empty", bus_log.display())));
    }
    let mut groups: BTreeMap<String, Vec<TripMetrics>> = BTreeMap::new();
    for (k, o) in simulate_bus_trips(&trips, tt, net, seed)? {
        let label = trips[k].day.clone().unwrap_or_else(|| "all".into());
        groups.entry(label).or_default().push(o.metrics);
    }
    let rows = groups
        .into_iter()
        .map(|(d, m)| ReportRow::new(d, 0, aggregate(&m, m.len(), 0.0), m.len(), 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarise_by_day(&rows))
}

pub enum ReportSource<'a> {
    PoolLog { log: &'a Path, day: &'a str, vehicles: usize },
    Bus { bus_log: &'a Path },
}

pub fn cmd_report(source: ReportSource<'_>, out_csv: &Path, cfg: &PipelineConfig) -> Result<Vec<ReportRow>> {
    let rows = match source {
        ReportSource::PoolLog { log, day, vehicles } => vec![pool_report_from_log(log, day, vehicles)?],
        ReportSource::Bus { bus_log } => {
            let (Some(s), Some(t)) = (&cfg.paths.timetable_stops, &cfg.paths.timetable_trips) else {
                return Err(Error::Input("bus report needs --timetable-stops and --timetable-trips".into()));
            };
            let tt = Timetable::from_csv(s, t)?;
            bus_report_rows(bus_log, &tt, &*cfg.network()?, cfg.bus_seed)?
        }
    };
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_report_csv(out_csv, &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------- clap

#[derive(Debug, Parser)]
#[command(name = "ridepool", version, about = "Night-time ridepooling versus bus: demand models, dispatch, comparison")]
pub struct Cli {
    /// TOML configuration; command-line options override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Stop coordinates CSV (stop_id,name,x_km,y_km).
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Optional cost matrix CSV (from_stop,to_stop,cost_km).
    #[arg(long, global = true)]
    pub cost_matrix: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-stop demand and destination models from a boarding log.
    Fit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate weeks of evening request scenarios from fitted models.
    Simulate {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        weeks: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dispatch a scenario file (or directory of them) with the rolling horizon.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fixed fleet size; overrides the fleet plan.
        #[arg(long)]
        vehicles: Option<usize>,
        /// Fleet plan CSV written by `simulate`.
        #[arg(long)]
        fleet_plan: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "a")]
        fleet: FleetChoice,
    },
    /// Side-by-side ridepooling and bus reports with bus/pool ratios.
    Compare {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        bus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a report from an event log, or build the bus report.
    Report {
        /// Ridepooling event log (JSON lines).
        #[arg(long, conflicts_with = "bus_log")]
        log: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        day: String,
        #[arg(long, default_value_t = 0)]
        vehicles: usize,
        /// Bus log CSV (origin,dest,B_s,A_s[,day]).
        #[arg(long)]
        bus_log: Option<PathBuf>,
        #[arg(long)]
        timetable_stops: Option<PathBuf>,
        #[arg(long)]
        timetable_trips: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if cli.network.is_some() {
        cfg.paths.network = cli.network.clone();
    }
    if cli.cost_matrix.is_some() {
        cfg.paths.cost_matrix = cli.cost_matrix.clone();
    }
    match &cli.command {
        Command::Simulate { weeks, seed, .. } => {
            if let Some(w) = weeks {
                cfg.simulation.weeks = *w;
            }
            if let Some(s) = seed {
                cfg.simulation.seed = *s;
            }
        }
        Command::Report {
            timetable_stops,
            timetable_trips,
            seed,
            ..
        } => {
            if timetable_stops.is_some() {
                cfg.paths.timetable_stops = timetable_stops.clone();
            }
            if timetable_trips.is_some() {
                cfg.paths.timetable_trips = timetable_trips.clone();
            }
            if let Some(s) = seed {
                cfg.bus_seed = *s;
            }
        }
        _ => {}
    }
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        Command::Fit { log, out } => cmd_fit(&log, &out, &cfg),
        Command::Simulate { models, out, .. } => cmd_simulate(&models, &out, &cfg).map(|_| ()),
        Command::Solve {
            scenario,
            out,
            vehicles,
            fleet_plan,
            fleet,
        } => {
            let spec = match (vehicles, fleet_plan) {
                (Some(k), _) => FleetSpec::Fixed(k),
                (None, Some(p)) => FleetSpec::Plan(read_fleet_plan(&p)?, fleet.into()),
                (None, None) => FleetSpec::Fixed(cfg.run.vehicles),
            };
            cmd_solve(&scenario, &out, &spec, &cfg).map(|_| ())
        }
        Command::Compare { pool, bus, out } => cmd_compare(&pool, &bus, &out).map(|_| ()),
        Command::Report {
            log,
            day,
            vehicles,
            bus_log,
            out,
            ..
        } => {
            let source = match (&log, &bus_log) {
                (Some(l), None) => ReportSource::PoolLog {
                    log: l,
                    day: &day,
                    vehicles,
                },
                (None, Some(b)) => ReportSource::Bus { bus_log: b },
                _ => return Err(Error::Input("report needs exactly one of --log or --bus-log".into())),
            };
            cmd_report(source, &out, &cfg).map(|_| ())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        let n = scenario_file_name(7, Weekday::Sat);
        assert_eq!(n, "week07_Sat.csv");
        assert_eq!(parse_scenario_file_name(&n), Some((7, Weekday::Sat)));
        assert_eq!(parse_scenario_file_name("fleet_plan.csv"), None);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: PipelineConfig = toml::from_str("[run]\nvehicles = 3\n[simulation]\nweeks = 2\n").unwrap();
        assert_eq!(cfg.run.vehicles, 3);
        assert_eq!(cfg.run.capacity, 6);
        assert_eq!(cfg.simulation.weeks, 2);
        assert_eq!(cfg.simulation.hours, vec![22, 23, 0, 1, 2, 3]);
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(PipelineConfig::default().hash(), cfg.hash());
    }

    fn row(day: &str, regret: f64) -> ReportRow {
        ReportRow {
            day: day.into(),
            vehicles: 4,
            total_routing_cost_km: 100.0,
            pct_denied: 1.0,
            avg_regret: Some(regret),
            avg_wait: Some(3.0),
            avg_ride: Some(7.0),
            avg_transport: Some(10.75),
        }
    }

    #[test]
    fn identical_reports_give_unit_ratios() {
        let rows = vec![row("Mon", 5.0), row("Tue", 6.0)];
        let c = compare_reports(&rows, &rows).unwrap();
        for r in &c {
            for x in [r.ratio_avg_regret, r.ratio_avg_wait, r.ratio_avg_ride, r.ratio_avg_transport] {
                assert_eq!(x, Some(1.0));
            }
        }
    }

    #[test]
    fn mismatched_days_rejected() {
        let a = vec![row("Mon", 5.0)];
        let b = vec![row("Tue", 5.0)];
        assert!(matches!(compare_reports(&a, &b), Err(Error::MismatchedDays(_))));
    }

    #[test]
    fn summary_orders_weekdays() {
        let rows = vec![row("Sun", 1.0), row("Mon", 2.0), row("Mon", 4.0)];
        let s = summarise_by_day(&rows);
        assert_eq!(s[0].day, "Mon");
        assert_eq!(s[0].avg_regret, Some(3.0));
        assert_eq!(s[1].day, "Sun");
    }
}
