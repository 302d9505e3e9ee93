use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcgehee"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mcgehee-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value_after(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"));
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn rmin_prints_kepler_radius_and_delta() {
    let o = run(&["rmin", "--n", "2", "--m", "1", "--Z", "1", "--E", "-0.5", "--l2", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!((value_after(&out, "r_min") - 1.0).abs() < 1e-12);
    assert!(value_after(&out, "delta") < 1e-12);
}

#[test]
fn rmin_zero_angular_momentum() {
    let o = run(&["rmin", "--E", "-0.5", "--l2", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value_after(&stdout(&o), "r_min"), 0.0);
}

#[test]
fn rmin_cubic_zero_energy() {
    let o = run(&["rmin", "--n", "3", "--E", "0", "--l2", "2", "--m", "1", "--Z", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!((value_after(&out, "r_min") - 1.0).abs() < 1e-12);
    assert!(!out.contains("delta"));
}

#[test]
fn rmin_without_pericenter_exits_6() {
    let o = run(&["rmin", "--n", "3", "--E", "-0.5", "--l2", "4"]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn malformed_config_exits_2() {
    let dir = scratch_dir("badconfig");
    let cfg = write_config(&dir, "{ \"params\": { \"n\": ");
    assert_eq!(run(&["--config", &cfg, "simulate"]).status.code(), Some(2));
    let cfg = write_config(&dir, "{ \"no_such_section\": 1 }");
    assert_eq!(run(&["--config", &cfg, "simulate"]).status.code(), Some(2));
    assert_eq!(run(&["--n", "0", "simulate"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--m", "-1"]).status.code(), Some(2));
}

#[test]
fn one_dimension_is_rejected_with_explanation() {
    let o = run(&["--d", "1", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d = 1"));
}

#[test]
fn step_failure_exits_3() {
    let dir = scratch_dir("stepfail");
    let cfg = write_config(&dir, r#"{ "integrator": { "max_steps": 3 } }"#);
    let o = run(&["--config", &cfg, "--out", dir.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_4() {
    let dir = scratch_dir("unwritable");
    let blocker = dir.join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = run(&["--out", out.to_str().unwrap(), "figures", "fig2"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn kepler_collision_scenario_conserves_energy() {
    let dir = scratch_dir("kepler");
    let o = run(&["--out", dir.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.join("trajectory.csv"));
    assert_eq!(header, ["t", "q_1", "q_2", "p_1", "p_2", "H", "l2", "in_U_eps"]);
    assert_eq!(rows.len(), 301);
    let h: Vec<f64> = rows.iter().map(|r| num(&r[5])).collect();
    assert!(h.iter().all(|v| (v - h[0]).abs() < 1e-8 * h[0].abs()));
    // falls from rest at radius 1, bounces at the origin and returns
    let r: Vec<f64> = rows.iter().map(|row| num(&row[1]).hypot(num(&row[2]))).collect();
    let closest = r.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(closest < 0.05);
    assert!(r.windows(2).all(|w| (w[1] - w[0]).abs() < 0.25));
    assert!(*r.last().unwrap() > 0.5);
    assert!(rows.iter().any(|row| row[7] == "1"));
}

#[test]
fn zero_energy_cubic_orbit_traces_the_tschirnhaus_curve() {
    let dir = scratch_dir("tschirnhaus");
    let v = 2f64.sqrt();
    let cfg = write_config(
        &dir,
        &format!(r#"{{ "params": {{ "n": 3 }}, "simulate": {{ "initial": {{ "regular": {{ "q": [1.0, 0.0], "p": [0.0, {v:?}] }} }}, "t_span": [-6.0, 6.0], "samples": 241 }} }}"#),
    );
    let o = run(&["--config", &cfg, "--out", dir.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.join("trajectory.csv"));
    let mut prev: Option<f64> = None;
    let mut worst: f64 = 0.0;
    for row in &rows {
        let (x, y) = (num(&row[1]), num(&row[2]));
        let mut th = y.atan2(x);
        if let Some(p) = prev {
            th += std::f64::consts::TAU * ((p - th) / std::f64::consts::TAU).round();
        }
        prev = Some(th);
        // r cos^3(theta / 3) = r_min
        worst = worst.max((x.hypot(y) * (th / 3.0).cos().powi(3) - 1.0).abs());
    }
    assert!(worst < 1e-8, "curve residual {worst:e}");
    let last = prev.unwrap();
    assert!(last > 2.0 && last < 1.5 * std::f64::consts::PI);
}

#[test]
fn empty_time_span_writes_single_row() {
    let dir = scratch_dir("empty");
    let cfg = write_config(&dir, r#"{ "simulate": { "t_span": [0.0, 0.0] } }"#);
    let o = run(&["--config", &cfg, "--out", dir.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.join("trajectory.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn collision_start_has_empty_momentum() {
    let dir = scratch_dir("collision");
    let cfg = write_config(
        &dir,
        r#"{ "params": { "n": 3, "d": 3 }, "simulate": { "initial": { "collision": { "h": 0.5, "a": [0.0, 1.0, 0.0] } }, "t_span": [0.0, 1.0], "samples": 11 } }"#,
    );
    let o = run(&["--config", &cfg, "--out", dir.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.join("trajectory.csv"));
    assert_eq!(header.len(), 10);
    assert_eq!(&rows[0][4..7], ["", "", ""]);
    for row in &rows[1..] {
        assert!((num(&row[7]) - 0.5).abs() < 1e-8);
        assert!(num(&row[2]) > 0.0);
    }
}

#[test]
fn fig1_passes_asymptotic_parity() {
    let dir = scratch_dir("fig1");
    let o = run(&["--out", dir.to_str().unwrap(), "figures", "fig1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("fig1_summary.json")).unwrap()).unwrap();
    let curves = summary.as_array().unwrap();
    let ns: Vec<u64> = curves.iter().map(|c| c["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, [2, 3, 4, 6]);
    for c in curves {
        assert_eq!(c["parity_ok"], Value::Bool(true), "{c}");
        let (header, rows) = read_csv(&dir.join(c["file"].as_str().unwrap()));
        assert_eq!(header, ["t", "q_1", "q_2"]);
        assert!(rows.len() > 1000);
    }
    assert!(fs::read_to_string(dir.join("fig1.svg")).unwrap().contains("<polyline"));
}

#[test]
fn fig2_flanks_close_and_middle_fills_annulus() {
    let dir = scratch_dir("fig2");
    let o = run(&["--out", dir.to_str().unwrap(), "figures", "fig2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("fig2_summary.json")).unwrap()).unwrap();
    let c = summary.as_array().unwrap();
    assert_eq!(c.len(), 3);
    let l: Vec<f64> = c.iter().map(|x| x["l"].as_f64().unwrap()).collect();
    assert!(l[0] < l[1] && l[1] < l[2]);
    for x in c {
        assert!(x["energy"].as_f64().unwrap() < 0.0);
        let (r0, r1) = (x["r_min"].as_f64().unwrap(), x["r_max"].as_f64().unwrap());
        assert!((x["sampled_r_min"].as_f64().unwrap() - r0).abs() < 1e-6 * r0);
        assert!((x["sampled_r_max"].as_f64().unwrap() - r1).abs() < 1e-6 * r1);
    }
    for i in [0, 2] {
        assert!(c[i]["closure_error"].as_f64().unwrap() < 1e-6, "{}", c[i]);
        assert!(c[i]["annulus_coverage"].as_f64().unwrap() < 0.7);
    }
    assert!(c[1]["annulus_coverage"].as_f64().unwrap() > 0.95);
    assert!(c[1]["closure_error"].as_f64().unwrap() > 1e-2);
}

#[test]
fn figures_are_byte_identical_on_rerun() {
    let a = scratch_dir("rerun-a");
    let b = scratch_dir("rerun-b");
    for d in [&a, &b] {
        assert_eq!(run(&["--seed", "11", "--out", d.to_str().unwrap(), "figures", "fig2"]).status.code(), Some(0));
    }
    for f in ["fig2_left.csv", "fig2_middle.csv", "fig2_right.csv", "fig2.svg", "fig2_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

fn small_verify(dir: &Path, extra: &str) -> String {
    write_config(
        dir,
        &format!(r#"{{ "verify": {{ "points": 4, "dirac_points": 4, "transit_points": 10 {extra} }} }}"#),
    )
}

#[test]
fn verify_default_grid_passes() {
    let dir = scratch_dir("verify");
    let o = run(&["--out", dir.to_str().unwrap(), "verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("verify_report.json")).unwrap()).unwrap();
    assert!(report["bracket_table"]["max_residual"].as_f64().unwrap() < 1e-5);
    assert_eq!(report["bracket_table"]["measured_sign"], serde_json::json!([-1.0]));
    assert!(report["dirac"]["max_residual"].as_f64().unwrap() < 1e-6);
    assert!(report["chart_roundtrip"]["max_error"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["transit_bound"]["violations"], serde_json::json!([]));
    for k in ["energy", "angular_momentum", "l_squared"] {
        assert!(report["conservation"]["max_drifts"][k].as_f64().unwrap() < 1e-8);
    }
    let per_entry = report["bracket_table"]["per_entry"].as_array().unwrap();
    assert!(per_entry.iter().any(|e| e["n"] == 4 && e["d"] == 3 && e["names"] == serde_json::json!(["B2", "B3"])));
    assert_eq!(report["passed"], Value::Bool(true));
}

#[test]
fn corrupted_bracket_convention_exits_5() {
    let dir = scratch_dir("corrupt");
    let cfg = small_verify(&dir, r#", "bracket_sign": -1.0"#);
    let o = run(&["--config", &cfg, "--out", dir.to_str().unwrap(), "verify"]);
    assert_eq!(o.status.code(), Some(5));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(false));
    assert!(report["bracket_table"]["max_residual"].as_f64().unwrap() > 0.5);
}

#[test]
fn verify_report_is_deterministic_per_seed() {
    let a = scratch_dir("det-a");
    let b = scratch_dir("det-b");
    let c = scratch_dir("det-c");
    let cfg = small_verify(&a, "");
    for (d, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert_eq!(run(&["--config", &cfg, "--seed", seed, "--out", d.to_str().unwrap(), "verify"]).status.code(), Some(0));
    }
    let read = |d: &PathBuf| fs::read(d.join("verify_report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn log_level_comes_from_environment() {
    let dir = scratch_dir("log");
    let cfg = write_config(&dir, r#"{ "simulate": { "t_span": [0.0, 0.0] } }"#);
    let o = bin()
        .env("MCGEHEE_LOG", "info")
        .args(["--config", &cfg, "--out", dir.to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wrote"));
    let quiet = bin().env_remove("MCGEHEE_LOG").args(["--config", &cfg, "--out", dir.to_str().unwrap(), "simulate"]).output().unwrap();
    assert!(!String::from_utf8_lossy(&quiet.stderr).contains("wrote"));
}
