use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;

use ridepool::bus_baseline::{synthetic_bus_log, synthetic_timetable, write_bus_log, SyntheticLines};
use ridepool::cli::{cmd_simulate, synthetic_boarding_log, write_boarding_log, PipelineConfig};
use ridepool::covariates::{encode, CalendarContext, Weekday, NUM_COVARIATES};
use ridepool::metrics::read_report_csv;
use ridepool::network::build_synthetic_network;
use ridepool::regression::{predict_intensity, DestinationModel, FitReport, PoissonModel, StopModels};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ridepool"))
}

fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

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

fn known_models(stops: &[u32], lambda: f64) -> BTreeMap<u32, StopModels> {
    stops
        .iter()
        .map(|&s| {
            let mut beta = vec![0.0; NUM_COVARIATES];
            beta[0] = lambda.ln();
            let dests: Vec<u32> = stops.iter().copied().filter(|d| *d != s).collect();
            (
                s,
                StopModels {
                    stop_id: s,
                    poisson: PoissonModel { stop_id: s, beta },
                    poisson_fit: fit_report(),
                    destination: DestinationModel::uniform(s, dests, NUM_COVARIATES),
                    destination_fit: fit_report(),
                },
            )
        })
        .collect()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let net = build_synthetic_network(8, 5.0, 11).unwrap();
    net.write_stops_csv(&d.join("stops.csv")).unwrap();
    let stops = net.service_stops();
    let hours = [22, 23, 0, 1, 2, 3];
    let truth = known_models(&stops, 0.4);
    let log = synthetic_boarding_log(&truth, 70, Weekday::Mon, &hours, &BTreeSet::new(), 5);
    write_boarding_log(&d.join("log.csv"), &log).unwrap();

    run_ok(&["fit", "--log", &p(d, "log.csv"), "--out", &p(d, "models")]);
    let fitted = StopModels::read_dir(&d.join("models")).unwrap();
    assert_eq!(fitted.len(), stops.len());
    assert!(d.join("models/fit_summary.csv").exists());
    assert!(d.join("models/manifest.json").exists());
    for m in &fitted {
        let mean: f64 = Weekday::ALL
            .iter()
            .flat_map(|&w| hours.iter().map(move |&h| CalendarContext::new(w, h, false).unwrap()))
            .map(|c| predict_intensity(&m.poisson, &encode(&c)))
            .sum::<f64>()
            / 42.0;
        assert!((mean - 0.4).abs() < 0.1, "stop {}: mean intensity {mean}", m.stop_id);
    }

    run_ok(&["simulate", "--models", &p(d, "models"), "--out", &p(d, "sc"), "--weeks", "1", "--seed", "3"]);
    let files: Vec<_> = std::fs::read_dir(d.join("sc"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("week"))
        .collect();
    assert_eq!(files.len(), 7);

    run_ok(&[
        "solve",
        "--network",
        &p(d, "stops.csv"),
        "--scenario",
        &p(d, "sc"),
        "--fleet-plan",
        &p(d, "sc/fleet_plan.csv"),
        "--out",
        &p(d, "pool"),
    ]);
    let per_file = read_report_csv(&d.join("pool/report.csv")).unwrap();
    assert_eq!(per_file.len(), 7);
    let summary = read_report_csv(&d.join("pool/summary.csv")).unwrap();
    assert_eq!(summary.iter().map(|r| r.day.as_str()).collect::<Vec<_>>(), ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]);

    // The replayed log reproduces the per-file report.
    run_ok(&[
        "report",
        "--log",
        &p(d, "pool/week00_Mon/events.jsonl"),
        "--day",
        "Mon",
        "--out",
        &p(d, "replay.csv"),
    ]);
    let replay = &read_report_csv(&d.join("replay.csv")).unwrap()[0];
    let original = &per_file[0];
    assert_eq!(original.day, "Mon");
    assert!((replay.total_routing_cost_km - original.total_routing_cost_km).abs() < 1e-9);
    assert_eq!(replay.avg_regret.is_some(), original.avg_regret.is_some());
    if let (Some(a), Some(b)) = (replay.avg_regret, original.avg_regret) {
        assert!((a - b).abs() < 1e-9);
    }

    let tt = synthetic_timetable(&net, &SyntheticLines::default(), 2).unwrap();
    net.write_stops_csv(&d.join("tt_stops.csv")).unwrap();
    tt.write_trips_csv(&d.join("tt_trips.csv")).unwrap();
    let mut bus = Vec::new();
    for (k, day) in Weekday::ALL.iter().enumerate() {
        for mut t in synthetic_bus_log(&tt, 40, k as u64) {
            t.day = Some(day.short_name().to_string());
            bus.push(t);
        }
    }
    write_bus_log(&d.join("bus_log.csv"), &bus).unwrap();
    run_ok(&[
        "report",
        "--bus-log",
        &p(d, "bus_log.csv"),
        "--network",
        &p(d, "stops.csv"),
        "--timetable-stops",
        &p(d, "tt_stops.csv"),
        "--timetable-trips",
        &p(d, "tt_trips.csv"),
        "--out",
        &p(d, "bus.csv"),
    ]);
    assert_eq!(read_report_csv(&d.join("bus.csv")).unwrap().len(), 7);

    run_ok(&[
        "compare",
        "--pool",
        &p(d, "pool/summary.csv"),
        "--bus",
        &p(d, "bus.csv"),
        "--out",
        &p(d, "compare.csv"),
    ]);
    let text = std::fs::read_to_string(d.join("compare.csv")).unwrap();
    assert!(text.starts_with("day,vehicles,total_routing_cost_km,pct_denied,pool_avg_regret,bus_avg_regret,ratio_avg_regret"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.csv"), "date,weekday,hour,holiday,origin_stop,dest_stop,count\n").unwrap();
    let out = bin()
        .args(["fit", "--log", &p(d, "empty.csv"), "--out", &p(d, "models")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("models").exists(), "no partial output on failure");

    let out = bin().args(["fit", "--log", &p(d, "missing.csv"), "--out", &p(d, "m")]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(d.join("bad.csv"), "date,weekday,hour,holiday,origin_stop,dest_stop,count\nx,Mon,99,0,1,2,1\n").unwrap();
    let out = bin().args(["fit", "--log", &p(d, "bad.csv"), "--out", &p(d, "m")]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    std::fs::write(d.join("a.csv"), "day,vehicles,total_routing_cost_km,pct_denied,avg_regret,avg_wait,avg_ride,avg_transport\nMon,1,1,0,1,1,1,1\n").unwrap();
    std::fs::write(d.join("b.csv"), "day,vehicles,total_routing_cost_km,pct_denied,avg_regret,avg_wait,avg_ride,avg_transport\nTue,1,1,0,1,1,1,1\n").unwrap();
    let out = bin()
        .args(["compare", "--pool", &p(d, "a.csv"), "--bus", &p(d, "b.csv"), "--out", &p(d, "c.csv")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulation_is_reproducible_and_zero_intensity_gives_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stops = [1, 2, 3];
    std::fs::create_dir_all(d.join("m")).unwrap();
    for m in known_models(&stops, 0.5).values() {
        m.write_to_dir(&d.join("m")).unwrap();
    }
    let mut cfg = PipelineConfig::default();
    cfg.simulation.weeks = 1;
    let a = cmd_simulate(&d.join("m"), &d.join("a"), &cfg).unwrap();
    let b = cmd_simulate(&d.join("m"), &d.join("b"), &cfg).unwrap();
    assert_eq!(a.len(), 7);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }

    std::fs::create_dir_all(d.join("z")).unwrap();
    for mut m in known_models(&stops, 1.0).into_values() {
        m.poisson.beta[0] = -800.0;
        m.write_to_dir(&d.join("z")).unwrap();
    }
    for f in cmd_simulate(&d.join("z"), &d.join("zs"), &cfg).unwrap() {
        let text = std::fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().count(), 1, "header only");
    }
}
