mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{peak_fd_acceleration, workspace};
use predress::dmp::{Demonstration, DmpModel};

fn predress(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predress"))
        .args(args)
        .env_remove("PREDRESS_BRIDGE")
        .env_remove("PREDRESS_BRIDGE_CMD")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ws(rel: &str) -> String {
    workspace().join(rel).to_str().unwrap().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fit_constant_demo_has_no_forcing() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("constant.json");
    let out = predress(&["fit", "--demo", &ws("demos/constant.ndjson"), "--out", p(&model)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(DmpModel::load(&model).unwrap().max_abs_weight() <= 1e-6);
}

#[test]
fn fit_bimanual_demo_writes_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let filtered = dir.path().join("fling.ndjson");
    let out = predress(&[
        "preprocess", "--demo", &ws("demos/fling_raw.ndjson"), "--out", p(&filtered),
        "--essential", "left_x,left_z,right_x,right_z",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let demo = Demonstration::load(&filtered).unwrap();
    assert_eq!(demo.rate_hz, 500.0);
    assert!(demo.samples.iter().all(|s| s.y[1] == demo.samples[0].y[1]));

    let models = dir.path().join("models");
    assert_eq!(code(&predress(&["fit", "--demo", p(&filtered), "--out", p(&models)])), 0);
    assert_eq!(DmpModel::load(models.join("left.json")).unwrap().n_channels(), 3);
    assert_eq!(DmpModel::load(models.join("right.json")).unwrap().orientation.len(), 1);
}

#[test]
fn preprocess_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ndjson"), dir.path().join("b.ndjson"));
    for f in [&a, &b] {
        assert_eq!(code(&predress(&["preprocess", "--demo", &ws("demos/twist_raw.ndjson"), "--out", p(f)])), 0);
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn constrained_rollout_passes_finite_difference_recheck() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("mj.json");
    assert_eq!(code(&predress(&["fit", "--demo", &ws("demos/min_jerk.ndjson"), "--out", p(&model)])), 0);
    let demo = Demonstration::load(ws("demos/min_jerk.ndjson")).unwrap();
    let acc_max: Vec<f64> = peak_fd_acceleration(&demo).iter().map(|a| 0.5 * a).collect();
    let (vel_max, lo, hi) = (vec![2.0; 3], vec![-0.5; 3], vec![1.5; 3]);
    let limits = dir.path().join("limits.json");
    let doc = serde_json::json!({"pos_lo": lo, "pos_hi": hi, "vel_max": vel_max, "acc_max": acc_max});
    fs::write(&limits, doc.to_string()).unwrap();

    let csv = dir.path().join("traj.csv");
    let out = predress(&["rollout", "--model", p(&model), "--limits", p(&limits), "--out", p(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let free_csv = dir.path().join("free.csv");
    assert_eq!(code(&predress(&["rollout", "--model", p(&model), "--out", p(&free_csv)])), 0);

    let (header, rows) = parse_csv(&fs::read_to_string(&csv).unwrap());
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let dt = rows[1][0] - rows[0][0];
    let (_, free_rows) = parse_csv(&fs::read_to_string(&free_csv).unwrap());
    assert!(rows.len() > free_rows.len(), "constrained run should take longer");

    for (c, axis) in ["x", "y", "z"].iter().enumerate() {
        let y: Vec<f64> = rows.iter().map(|r| r[col(&format!("y_{axis}"))]).collect();
        let v: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        let a: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        let slack = 1e-9 + 1e-12 / dt / dt;
        assert!(v.iter().all(|x| x.abs() <= 0.98 * vel_max[c] + 1e-9), "velocity on {axis}");
        assert!(a.iter().all(|x| x.abs() <= 0.98 * acc_max[c] + slack), "acceleration on {axis}");
        assert!(y.iter().all(|x| *x >= lo[c] - 1e-9 && *x <= hi[c] + 1e-9), "position on {axis}");
        // the emitted velocity column agrees with the differenced positions
        let v_col: Vec<f64> = rows.iter().map(|r| r[col(&format!("v_{axis}"))]).collect();
        for i in 1..v_col.len() {
            assert!((v_col[i] - v[i - 1]).abs() <= 1e-9);
        }
    }
}

#[test]
fn pair_rollout_needs_d_max() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pair.csv");
    let models = [ws("registry/fling/left.json"), ws("registry/fling/right.json")];
    let base = ["rollout", "--model", &models[0], "--model", &models[1], "--limits", &ws("registry/limits.json")];
    let mut no_dmax = base.to_vec();
    no_dmax.extend(["--out", p(&csv)]);
    assert_eq!(code(&predress(&no_dmax)), 2);

    let mut ok = base.to_vec();
    ok.extend(["--d-max", "0.45", "--out", p(&csv)]);
    assert_eq!(code(&predress(&ok)), 0);
    let (header, rows) = parse_csv(&fs::read_to_string(&csv).unwrap());
    assert_eq!(header.len(), 16);
    for r in &rows {
        let d = ((r[1] - r[8]).powi(2) + (r[2] - r[9]).powi(2) + (r[3] - r[10]).powi(2)).sqrt();
        assert!(d <= 0.45 + 1e-9);
    }
}

#[test]
fn validate_registry_reports_each_motion() {
    let out = predress(&["validate-registry", "--registry", &ws("registry")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("ok ")).count(), 6);
}

#[test]
fn validate_registry_fails_on_bad_limits() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["fling", "shake", "twist", "quasi_static"] {
        fs::create_dir_all(dir.path().join(sub)).unwrap();
        for f in fs::read_dir(workspace().join("registry").join(sub)).unwrap() {
            let f = f.unwrap();
            fs::copy(f.path(), dir.path().join(sub).join(f.file_name())).unwrap();
        }
    }
    // goal of the quasi-static push lands outside these bounds
    let doc = serde_json::json!({"pos_lo": [0.0, -0.8, 0.4], "pos_hi": [0.9, 0.8, 1.6], "vel_max": [1.2, 1.2, 1.2], "acc_max": [6.0, 6.0, 6.0]});
    fs::write(dir.path().join("limits.json"), doc.to_string()).unwrap();
    let out = predress(&["validate-registry", "--registry", p(dir.path())]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out_path = dir.join(format!("{name}.json"));
    let mut args = vec!["simulate", "--config", ws("configs/table1.json").leak(), "--out", p(&out_path)];
    args.extend(extra);
    let out = predress(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    fs::read(out_path).unwrap()
}

#[test]
fn simulate_then_report_twist_row() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "r", &["--n", "10000"]);
    let report = dir.path().join("r.json");
    let out = predress(&["report", p(&report), "--format", "text"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().find(|l| l.starts_with("PrevOpened") && l.contains("Twist")).unwrap();
    let cells: Vec<&str> = row.split('|').map(str::trim).collect();
    assert_eq!(&cells[2..6], &["100.00", "0.00", "100.00", "1.00"]);

    let csv_path = dir.path().join("r.csv");
    assert_eq!(code(&predress(&["report", p(&report), "--format", "csv", "--out", p(&csv_path)])), 0);
    assert!(fs::read_to_string(csv_path).unwrap().contains("PrevOpened,Twist,100.00,0.00,100.00,1.00,10000,"));
}

#[test]
fn simulate_is_byte_identical_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", &["--n", "2000", "--seed", "3"]);
    let b = simulate(dir.path(), "b", &["--n", "2000", "--seed", "3"]);
    let c = simulate(dir.path(), "c", &["--n", "2000", "--seed", "3", "--sequential"]);
    let d = simulate(dir.path(), "d", &["--n", "2000", "--seed", "3", "--sequential"]);
    assert_eq!(a, b);
    assert_eq!(c, d);
    assert_eq!(a, c);
}

#[test]
fn stdio_bridge_matches_mock_output() {
    let dir = tempfile::tempdir().unwrap();
    let mock = simulate(dir.path(), "mock", &["--n", "100"]);
    let out_path = dir.path().join("bridge.json");
    let out = Command::new(env!("CARGO_BIN_EXE_predress"))
        .args(["simulate", "--config", &ws("configs/table1.json"), "--n", "100", "--estimator", "bridge:stdio"])
        .args(["--out", p(&out_path)])
        .env_remove("PREDRESS_BRIDGE")
        .env("PREDRESS_BRIDGE_CMD", format!("python3 {}", ws("crates/core/tests/fixtures/mock_bridge.py")))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(out_path).unwrap(), mock);
}

#[test]
fn bridge_env_overrides_and_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_predress"))
        .args(["simulate", "--config", &ws("configs/table1.json"), "--n", "10", "--estimator", "mock"])
        .args(["--out", p(&dir.path().join("r.json"))])
        .env("PREDRESS_BRIDGE", "bridge:127.0.0.1:1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn usage_and_io_exit_codes() {
    assert_eq!(code(&predress(&[])), 1);
    assert_eq!(code(&predress(&["frobnicate"])), 1);
    assert_eq!(code(&predress(&["report", "x.json", "--format", ""])), 1);
    assert_eq!(code(&predress(&["report", "x.json", "--format", "yaml"])), 1);
    assert_eq!(code(&predress(&["report", "/nonexistent/x.json"])), 3);
    assert_eq!(code(&predress(&["simulate", "--config", &ws("configs/table1.json"), "--out", "/tmp/x.json", "--estimator", "carrier-pigeon"])), 2);
    assert_eq!(code(&predress(&["--help"])), 0);
}
