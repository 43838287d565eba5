use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use zysim_core::model_io;
use zysim_core::rng::{stream_rng, Stream};
use zysim_core::sim::generate_markov_source;

fn zysim(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zysim"));
    cmd.args(args).env_remove("ZYSIM_SEED");
    if let Some(s) = seed {
        cmd.env("ZYSIM_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

fn write_json(dir: &TempDir, name: &str, v: &Value) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

fn out_path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn single_task(eta: f64, exec_us: u64, period_us: u64, duration_us: u64) -> Value {
    json!({
        "seed": 1,
        "duration_us": duration_us,
        "capacitor": {"capacity_uj": 1_000, "e_man_uj": 100},
        "initial_energy_uj": 1_000,
        "initially_on": true,
        "energy_source": {"kind": "constant", "power_uw": 100_000},
        "eta": {"fixed": eta},
        "scheduler": {"policy": "zygarde"},
        "tasks": [{"id": 1, "period_us": period_us, "deadline_us": period_us,
                   "units": [{"exec_us": exec_us, "energy_uj": 1}]}]
    })
}

fn stochastic(seed: u64) -> Value {
    json!({
        "seed": seed,
        "duration_us": 30_000_000u64,
        "capacitor": {"capacity_uj": 3_000, "e_on_uj": 1_500, "e_off_uj": 100, "e_man_uj": 300, "e_opt_uj": 2_000},
        "energy_source": {"kind": "markov", "stay_on": 0.8, "stay_off": 0.8, "power_on_uw": 6_000, "slot_us": 200_000},
        "eta": {"estimate": {"dk_uj": 10, "dt_us": 200_000}},
        "scheduler": {"policy": "zygarde"},
        "tasks": [{"id": 1, "period_us": 1_000_000, "deadline_us": 1_500_000, "release_jitter_us": 300_000,
                   "units": [{"exec_us": 50_000, "energy_uj": 400}, {"exec_us": 50_000, "energy_uj": 400}],
                   "outcome": {"mode": "synthetic", "exit_weights": [0.6, 0.4], "correct_prob": [0.7, 0.9]}}]
    })
}

#[test]
fn eta_of_constant_trace_is_one() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("const.csv");
    std::fs::write(&trace, "t_us,power_uw\n0,2000\n1000000,2000\n").unwrap();
    let o = zysim(
        &[
            "eta",
            "--trace",
            trace.to_str().unwrap(),
            "--dk-uj",
            "1",
            "--dt-us",
            "1000",
            "--nmax",
            "10",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("eta = 1.000"), "{}", stdout(&o));
}

#[test]
fn eta_json_of_memoryless_trace_parses_back_near_zero() {
    let dir = TempDir::new().unwrap();
    let trace = generate_markov_source(0.5, 0.5, 1_000, 1_000, 50_000_000, &mut stream_rng(9, Stream::Source)).unwrap();
    let path = dir.path().join("bern.csv");
    model_io::save_trace(&trace, &path).unwrap();
    let o = zysim(
        &[
            "eta",
            "--trace",
            path.to_str().unwrap(),
            "--dk-uj",
            "1",
            "--dt-us",
            "1000",
            "--nmax",
            "20",
            "--json",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let json_path = dir.path().join("profile.json");
    std::fs::write(&json_path, o.stdout).unwrap();
    let export = model_io::load_profile(&json_path).unwrap();
    assert!(export.eta.abs() <= 0.1, "eta {}", export.eta);
}

#[test]
fn missing_trace_is_a_validation_error_naming_the_path() {
    let o = zysim(
        &[
            "eta",
            "--trace",
            "/no/such/trace.csv",
            "--dk-uj",
            "1",
            "--dt-us",
            "1000",
            "--nmax",
            "5",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/trace.csv"), "{}", stderr(&o));
}

#[test]
fn unknown_flags_are_rejected() {
    let o = zysim(&["simulate", "--config", "x.json", "--out", "y.json", "--bogus"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn worked_example_schedules_both_jobs() {
    let dir = TempDir::new().unwrap();
    let out = out_path(&dir, "report.json");
    let csv = out_path(&dir, "jobs.csv");
    let o = zysim(
        &[
            "simulate",
            "--config",
            &fixture("worked_example.json"),
            "--out",
            &out,
            "--jobs-csv",
            &csv,
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "released=2 scheduled=2 correct=2 misses=0");
    let report = model_io::load_report(Path::new(&out)).unwrap();
    let units: Vec<(u64, usize)> = report.decisions.iter().filter_map(|d| d.seq.zip(d.unit)).collect();
    assert_eq!(units, [(1, 1), (2, 1), (2, 2), (1, 2), (2, 3), (2, 4)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(
        rows[1].starts_with("1,1000000,7000000,2,true,true,2000000,deadline,1"),
        "{}",
        rows[1]
    );
    assert!(
        rows[2].starts_with("1,3000000,9000000,4,true,true,6000000,,2"),
        "{}",
        rows[2]
    );
}

#[test]
fn zero_duration_releases_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &single_task(0.5, 1_000, 10_000, 0));
    let o = zysim(
        &["simulate", "--config", &cfg, "--out", &out_path(&dir, "r.json")],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "released=0 scheduled=0 correct=0 misses=0");
}

#[test]
fn seed_override_changes_jobs_but_not_invariants() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &stochastic(1));
    let mut csvs = Vec::new();
    for seed in [None, Some("77")] {
        let out = out_path(&dir, "r.json");
        let csv = out_path(&dir, "j.csv");
        let o = zysim(&["simulate", "--config", &cfg, "--out", &out, "--jobs-csv", &csv], seed);
        assert!(o.status.success(), "{}", stderr(&o));
        let report = model_io::load_report(Path::new(&out)).unwrap();
        assert!(report.energy.balanced());
        let a = report.aggregates;
        assert_eq!(a.jobs_scheduled + a.deadline_misses, a.jobs_released);
        if let Some(s) = seed {
            assert_eq!(report.seed, s.parse::<u64>().unwrap());
            assert!(stderr(&o).starts_with("ZYSIM_SEED=77 "), "{}", stderr(&o));
        }
        csvs.push(std::fs::read_to_string(&csv).unwrap());
    }
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &stochastic(3));
    let reports: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = out_path(&dir, &format!("r{i}.json"));
            assert!(zysim(&["simulate", "--config", &cfg, "--out", &out], None)
                .status
                .success());
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bad_seed_override_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &stochastic(1));
    let o = zysim(
        &["simulate", "--config", &cfg, "--out", &out_path(&dir, "r.json")],
        Some("soon"),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_report_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &single_task(0.5, 1_000, 10_000, 100_000));
    let o = zysim(&["simulate", "--config", &cfg, "--out", "/no/such/dir/r.json"], None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let mut v = single_task(0.5, 1_000, 10_000, 100_000);
    v["tasks"][0]["period_us"] = json!(0);
    let cfg = write_json(&dir, "cfg.json", &v);
    let o = zysim(
        &["simulate", "--config", &cfg, "--out", &out_path(&dir, "r.json")],
        None,
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

fn overload() -> Value {
    let tasks: Vec<Value> = [300_000u64, 400_000, 600_000]
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            json!({"id": i + 1, "period_us": p, "deadline_us": p, "mandatory_units": 1,
                   "units": vec![json!({"exec_us": 40_000, "energy_uj": 400}); 4],
                   "outcome": {"mode": "synthetic", "exit_weights": [0.6, 0.25, 0.1, 0.05],
                               "correct_prob": [0.6, 0.75, 0.85, 0.9]}})
        })
        .collect();
    json!({
        "seed": 4,
        "duration_us": 20_000_000u64,
        "capacitor": {"capacity_uj": 50_000, "e_on_uj": 10_000, "e_off_uj": 1_000, "e_man_uj": 2_000},
        "initial_energy_uj": 50_000,
        "initially_on": true,
        "energy_source": {"kind": "constant", "power_uw": 50_000},
        "eta": {"fixed": 1.0},
        "scheduler": {"policy": "zygarde", "queue_capacity": 8, "persistent": true},
        "tasks": tasks
    })
}

#[test]
fn compare_keeps_policy_order_and_ranks_overload() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &overload());
    let out = out_path(&dir, "cmp.json");
    let o = zysim(
        &[
            "compare",
            "--config",
            &cfg,
            "--policies",
            "edf,zygarde,edf-m,rr",
            "--out",
            &out,
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["policy"].as_str().unwrap()).collect();
    assert_eq!(names, ["edf", "zygarde", "edf_m", "rr"]);
    let sched = |i: usize| rows[i]["scheduled"].as_u64().unwrap();
    assert!(sched(1) > sched(0) && sched(2) > sched(0), "{rows:?}");
    assert!(stdout(&o).lines().count() == 5);
}

#[test]
fn compare_rejects_unknown_policies() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", &overload());
    let o = zysim(
        &[
            "compare",
            "--config",
            &cfg,
            "--policies",
            "zygarde,fifo",
            "--out",
            &out_path(&dir, "c.json"),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fifo"), "{}", stderr(&o));
}

fn schedulability(v: &Value) -> (Option<i32>, String) {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(&dir, "cfg.json", v);
    let o = zysim(&["schedulability", "--config", &cfg], None);
    (o.status.code(), stdout(&o))
}

#[test]
fn schedulability_reports_min_outage_spacing() {
    let (code, out) = schedulability(&single_task(0.5, 500_000, 1_000_000, 1_000_000));
    assert_eq!(code, Some(0));
    assert!(out.contains("utilization = 0.500000"), "{out}");
    assert!(out.contains("expected_outage_slots = 1.000000"), "{out}");
    assert!(out.contains("min_t_e_slots = 2.000000"), "{out}");
    assert!(out.contains("feasible = yes"), "{out}");
}

#[test]
fn schedulability_full_utilization_is_infeasible() {
    let (code, out) = schedulability(&single_task(0.5, 1_000_000, 1_000_000, 1_000_000));
    assert_eq!(code, Some(0));
    assert!(out.contains("feasible = no"), "{out}");
}

#[test]
fn schedulability_memoryless_needs_no_spacing() {
    let (_, out) = schedulability(&single_task(0.0, 500_000, 1_000_000, 1_000_000));
    assert!(out.contains("min_t_e_slots = 0.000000"), "{out}");
}

#[test]
fn schedulability_rejects_persistent_eta() {
    let (code, _) = schedulability(&single_task(1.0, 500_000, 1_000_000, 1_000_000));
    assert_eq!(code, Some(1));
}
