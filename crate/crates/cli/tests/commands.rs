use std::path::Path;
use std::process::Command;

use guarantee_cli::{cmd_check, cmd_simulate, cmd_study, cmd_value, CliError, ExperimentConfig};

const SMALL_ORACLE: &str = r#"
[oracle]
kind = "value-gradient"
grid = { time_steps = 50, nodes = 31 }
"#;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

fn last_row(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect()
}

#[test]
fn simulate_ustar_reaches_the_value() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!(
        r#"
[system]
id = "bilinear-2x2"
z0 = [0.0, 0.0]
[partition]
steps = 100
[strategy]
id = "ustar"
shift_set = "signs"
[disturbance]
kind = "constant"
value = [1.0, 1.0]
{SMALL_ORACLE}"#
    ));
    let out = cmd_simulate(&c, Some(dir.path())).unwrap();
    let row = last_row(&out.files[0]);
    assert!(row[2] <= -0.45, "final x2 = {}", row[2]);
    let head = std::fs::read_to_string(&out.files[0]).unwrap();
    assert!(head.starts_with(&format!("# config_sha256={}\nt,x1,x2\n", c.digest())));
}

#[test]
fn simulate_zero_control_stays_at_origin_and_is_reproducible() {
    let text = r#"
[system]
id = "bilinear-2x2"
z0 = [0.0, 0.0]
[partition]
steps = 20
[strategy]
id = "constant"
u = [0.0, 0.0]
[disturbance]
kind = "random"
rate = 3.0
seed = 4
"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = cmd_simulate(&cfg(text), Some(a.path())).unwrap();
    cmd_simulate(&cfg(text), Some(b.path())).unwrap();
    assert!(ra.trajectory.states().iter().all(|x| x == &vec![0.0, 0.0]));
    for name in ["trajectory.csv", "control.csv", "disturbance.csv", "run.csv"] {
        let fa = std::fs::read(a.path().join(name)).unwrap();
        let fb = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between runs");
    }
}

const ZERO_SYSTEM: &str = r#"
[system]
id = "inline"
name = "zero-2d"
z0 = [0.0, 3.0]
rhs = ["0", "0"]
control = { points = [[0.0]] }
disturbance = { points = [[0.0]] }
bounds_lower = [-4.0, -4.0]
bounds_upper = [4.0, 4.0]
cost = "x2"
"#;

#[test]
fn value_of_zero_dynamics() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(&format!("{ZERO_SYSTEM}\n[grid]\ntime_steps = 10\nnodes = 9\n"));
    let v = cmd_value(&c, Some(dir.path())).unwrap();
    assert_eq!(format!("{v:.6}"), "3.000000");
    let table = guarantee_core::oracle::ValueTable::read_csv(std::io::BufReader::new(
        std::fs::File::open(dir.path().join("value_table.csv")).unwrap(),
    ))
    .unwrap();
    assert_eq!(table.value(0.0, &[1.0, -2.0]).unwrap(), -2.0);
}

#[test]
fn value_of_scalar_cancel_game() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"
[system]
id = "inline"
z0 = [0.0]
rhs = ["u1 + v1"]
control = { lower = [-1.0], upper = [1.0], resolution = 5 }
disturbance = { lower = [-1.0], upper = [1.0], resolution = 5 }
bounds_lower = [-2.0]
bounds_upper = [2.0]
cost = "max(x1, -x1)"
[grid]
time_steps = 20
nodes = 41
"#);
    assert!(cmd_value(&c, Some(dir.path())).unwrap().abs() < 0.05);
}

fn check_cfg(kind: &str, extra: &str) -> ExperimentConfig {
    cfg(&format!(
        r#"
[system]
id = "bilinear-2x2"
z0 = [0.0, 0.0]
[check]
kind = "{kind}"
lower = [0.0, -1.0]
upper = [1.0, 1.0]
per_axis = 5
times = [0.0, 0.5]
{extra}
"#
    ))
}

#[test]
fn checks_on_the_bilinear_system() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_check(&check_cfg("assumption1", "test_set = [[1.0, 1.0]]"), Some(dir.path())).unwrap();
    assert!(r.passed);
    let r = cmd_check(&check_cfg("saddle", "directions = [[0.0, 1.0]]"), Some(dir.path())).unwrap();
    assert!(!r.passed);
    let gap = r.worst_gap.unwrap();
    assert!((gap - 1.0).abs() < 1e-9, "worst gap {gap}");
    let json = std::fs::read_to_string(dir.path().join("check.json")).unwrap();
    assert!(json.contains("config_sha256"));
}

#[test]
fn separable_system_satisfies_the_saddle_condition() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"
[system]
id = "inline"
z0 = [0.0, 0.0]
rhs = ["u1 + v1", "x1 * u2 - v2"]
control = { points = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]] }
disturbance = { lower = [-1.0, 0.0], upper = [1.0, 1.0], resolution = 3 }
cost = "x2"
[check]
kind = "saddle"
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
"#);
    assert!(cmd_check(&c, Some(dir.path())).unwrap().passed);
}

#[test]
fn study_with_one_member_writes_one_record_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"
[system]
id = "bilinear-2x2"
z0 = [0.0, 0.0]
[strategy]
id = "explicit"
[ensemble]
signals = [{ breakpoints = [0.0, 1.0], values = [[1.0, 1.0]] }]
[grid]
time_steps = 20
nodes = 21
[study]
steps = [40]
"#);
    let out = cmd_study(&c, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("study.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(out.summary["record"], "summary");
    assert_eq!(out.summary["config_sha256"], c.digest());
}

#[test]
fn missing_seed_is_a_validation_error() {
    let c = cfg(r#"
[system]
id = "bilinear-2x2"
z0 = [0.0, 0.0]
[strategy]
id = "explicit"
[ensemble]
random = { count = 5, rate = 2.0 }
[study]
steps = [10]
"#);
    let err = cmd_study(&c, None).err().unwrap();
    assert!(matches!(err, CliError::Validation(_)));
    assert_eq!(err.exit_code(), 1);
}

fn run_bin(config: &str, sub: &str) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_guarantee"))
        .args([sub, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--jobs", "2"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn binary_exit_codes() {
    let (code, text) = run_bin(&format!("{ZERO_SYSTEM}\n[grid]\ntime_steps = 4\nnodes = 5\n"), "value");
    assert_eq!(code, 0, "{text}");
    assert_eq!(text.trim(), "3.000000");

    let (code, text) = run_bin("[system]\nid = \"bilinear-2x2\"\nz0 = [0.0, 0.0]\ncolour = 1\n", "value");
    assert_eq!(code, 1);
    assert!(text.contains("colour"), "{text}");

    let escape = r#"
[system]
id = "inline"
z0 = [0.0]
rhs = ["1"]
control = { points = [[0.0]] }
disturbance = { points = [[0.0]] }
bounds_lower = [-0.1]
bounds_upper = [0.1]
cost = "x1"
[strategy]
id = "constant"
u = [0.0]
[disturbance]
kind = "constant"
value = [0.0]
"#;
    let (code, text) = run_bin(escape, "simulate");
    assert_eq!(code, 2, "{text}");
}
