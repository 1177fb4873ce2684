use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imexglm"))
        .args(args)
        .env("IMEXGLM_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn check_passes_for_catalogued_methods() {
    for args in [
        &["check", "--method", "dimsim2", "--lambda", "0.2928932"][..],
        &["check", "--method", "theta", "--theta", "0.75"],
        &["check", "--method", "dimsim4"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stdout(&o));
        assert!(stdout(&o).contains("all conditions hold"));
    }
}

#[test]
fn perturbed_tableau_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["tableau", "--method", "dimsim2", "--base-only"]);
    assert_eq!(o.status.code(), Some(0));
    let mut tab: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let a10 = tab["A"][1][0].as_f64().unwrap();
    tab["A"][1][0] = (a10 + 1e-3).into();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, tab.to_string()).unwrap();
    let o = run(&["check", "--tableau", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL"));
    // A enters first through the k = 1 stage condition `c = A 1 + U q_1`.
    let first = out.lines().find(|l| l.ends_with("FAIL")).unwrap();
    assert!(first.starts_with("stage-order k=1"), "{first}");
}

#[test]
fn theta_one_right_angle_region_is_the_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let args = [
        "region",
        "--method",
        "theta",
        "--theta",
        "1",
        "--alpha-deg",
        "90",
        "--grid",
        "figure",
        "--delta",
        "0.05",
        "--rays",
        "24",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let area = read_json(&out.join("area.json"))["area"].as_f64().unwrap();
    assert!((area - std::f64::consts::PI).abs() < 0.02 * std::f64::consts::PI, "{area}");
    for f in ["boundary.csv", "raster.csv", "boundary.svg"] {
        assert!(out.join(f).exists());
    }
    let boundary = std::fs::read_to_string(out.join("boundary.csv")).unwrap();
    assert_eq!(boundary.lines().count(), 25);
    // Same configuration, same bytes.
    let out2 = dir.path().join("b");
    let mut args2 = args.to_vec();
    *args2.last_mut().unwrap() = out2.to_str().unwrap();
    assert_eq!(run(&args2).status.code(), Some(0));
    for f in ["boundary.csv", "raster.csv", "area.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn csv_floats_have_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "locus",
        "--method",
        "theta",
        "--locus-samples",
        "64",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("locus.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let mantissa = first.split(',').next().unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.trim_start_matches('-').replace('.', "").len(), 17);
}

#[test]
fn empty_step_list_is_a_usage_error() {
    let o = run(&["converge", "--problem", "pr"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["converge", "--hs"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(run(&["check", "--method", "rk4"]).status.code(), Some(1));
    assert_eq!(run(&["region", "--alpha-deg", "120"]).status.code(), Some(1));
    assert_eq!(run(&["tableau", "--method", "dimsim3", "--beta", "1,2"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"method": "dimsim2", "colour": "blue"}"#).unwrap();
    assert_eq!(run(&["check", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn config_file_round_trips_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", "--print-config", "--method", "dimsim3", "--hs", "0.1,0.05"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, &o.stdout).unwrap();
    let again = run(&["check", "--print-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(again.stdout, o.stdout);
    let overridden = run(&["check", "--print-config", "--config", cfg.to_str().unwrap(), "--method", "dimsim4"]);
    let v: serde_json::Value = serde_json::from_slice(&overridden.stdout).unwrap();
    assert_eq!(v["method"], "dimsim4");
    assert_eq!(v["hs"][1], 0.05);
}

#[test]
fn unit_budget_returns_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "optimize",
        "--method",
        "dimsim2",
        "--alpha-deg",
        "90",
        "--grid",
        "coarse",
        "--budget",
        "1",
        "--x0",
        "4.6",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("optimize.json"));
    assert_eq!(v["result"]["beta"][0], 4.6);
    assert_eq!(v["result"]["budget_exhausted"], true);
    assert_eq!(v["result"]["evaluations"], 1);
}

#[test]
fn integrate_linear_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"method": "dimsim3", "problem": {"kind": "linear", "lambda0": [-1.0, 0.5], "lambda1": [-20.0, 0.0]}}"#,
    )
    .unwrap();
    let o = run(&[
        "integrate",
        "--config",
        cfg.to_str().unwrap(),
        "--h",
        "0.05",
        "--trace",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("integrate.json"));
    assert_eq!(v["steps"], 20);
    assert!(v["error"].as_f64().unwrap() < 1e-5);
    assert_eq!(std::fs::read_to_string(dir.path().join("trace.csv")).unwrap().lines().count(), 21);
    assert_eq!(run(&["integrate", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["integrate", "--config", cfg.to_str().unwrap(), "--h", "0.3"]).status.code(), Some(1));
}

#[test]
fn blow_up_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "integrate",
        "--problem",
        "swe",
        "--unsplit",
        "--nx",
        "8",
        "--tf",
        "4",
        "--h",
        "0.5",
        "--method",
        "theta",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn prothero_robinson_sweep_reports_orders() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "converge",
        "--problem",
        "pr",
        "--mu",
        "-1",
        "--tf",
        "1",
        "--hs",
        "0.1,0.05,0.025",
        "--methods",
        "dimsim2,dimsim3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("convergence.json"));
    let slopes = v["table"]["slopes"].as_array().unwrap();
    assert_eq!(slopes.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "scheme,h,error,slope");
    assert_eq!(csv.lines().count(), 7);
}
