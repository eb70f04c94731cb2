//! End-to-end runs of the `postwalk` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use postwalk::cli::RunManifest;
use tempfile::TempDir;

fn postwalk(args: &[&str], workers_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_postwalk"));
    cmd.args(args).env_remove("POSTWALK_WORKERS");
    if let Some(w) = workers_env {
        cmd.env("POSTWALK_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(sub: &str, config: &Path, out: &Path) -> Output {
    postwalk(
        &[sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()],
        None,
    )
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_outputs_exist(m: &RunManifest) {
    for path in &m.outputs {
        let len = fs::metadata(path).map(|md| md.len()).unwrap_or(0);
        assert!(len > 0, "{} missing or empty", path.display());
    }
    for sub in &m.runs {
        assert_outputs_exist(&manifest(sub));
    }
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines()
        .last()
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect()
}

const CYLINDER: &str = r#"
initial_node = 12
t_max = 5.0

[graph]
family = "cylinder"
rows = 5
cols = 5

[channel]
kind = "qsw"
p = 0.5
eta = 0.4
"#;

#[test]
fn simulate_is_deterministic_and_writes_its_manifest() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.toml", CYLINDER);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("simulate", &config, &a).status.code(), Some(0));
    assert_eq!(run("simulate", &config, &b).status.code(), Some(0));
    let csv_a = fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("trajectory.csv")).unwrap());
    let m = manifest(&a.join("manifest.json"));
    assert_eq!(m.command, "simulate");
    assert!(m.invariants.max_trace_drift < 1e-8);
    assert_outputs_exist(&m);
}

#[test]
fn multiple_efficiencies_get_one_directory_each() {
    let dir = TempDir::new().unwrap();
    let body = CYLINDER.replace("eta = 0.4", "eta = [0.0, 0.8]");
    let config = write_config(dir.path(), "run.toml", &body);
    let out = dir.path().join("out");
    assert_eq!(run("simulate", &config, &out).status.code(), Some(0));
    let top = manifest(&out.join("manifest.json"));
    assert_eq!(top.runs.len(), 2);
    assert_outputs_exist(&top);
}

#[test]
fn malformed_config_exits_1_without_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "bad.toml", "initial_node = \n[graph");
    let out = dir.path().join("out");
    let result = run("simulate", &config, &out);
    assert_eq!(result.status.code(), Some(1));
    assert!(!out.exists());

    let unknown = write_config(dir.path(), "unknown.toml", &format!("{CYLINDER}\nbogus = 1\n"));
    assert_eq!(run("simulate", &unknown, &out).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn missing_arguments_and_zero_workers_exit_1() {
    assert_eq!(postwalk(&["simulate"], None).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.toml", CYLINDER);
    let out = dir.path().join("out");
    let args = ["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(postwalk(&args, Some("0")).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn oversized_spin_network_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "spin.toml",
        "eta = 0.5\nt_max = 1.0\n[graph]\nfamily = \"line\"\nn = 12\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run("spin", &config, &out).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn verify_rejects_zero_p() {
    let dir = TempDir::new().unwrap();
    let body = CYLINDER.replace("p = 0.5", "p = 0.0");
    let config = write_config(dir.path(), "run.toml", &body);
    assert_eq!(run("verify", &config, &dir.path().join("out")).status.code(), Some(1));
}

#[test]
fn verify_passes_for_dephasing_on_torus() {
    let dir = TempDir::new().unwrap();
    let body = r#"
initial_node = 3
t_max = 500.0

[graph]
family = "torus"
rows = 4
cols = 4

[channel]
kind = "haken_strobl"
gamma = 1.0
eta = 0.7
"#;
    let config = write_config(dir.path(), "hs.toml", body);
    let out = dir.path().join("out");
    let result = run("verify", &config, &out);
    assert_eq!(result.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("constraint_report.json")).unwrap())
            .unwrap();
    assert!(report["max_residual"].as_f64().unwrap() < 1e-6);
    assert_outputs_exist(&manifest(&out.join("manifest.json")));
}

#[test]
fn sweep_output_is_independent_of_worker_count() {
    let dir = TempDir::new().unwrap();
    let body = r#"
initial_node = 4
t_max = 400.0

[graph]
family = "cylinder"
rows = 3
cols = 3

[channel]
kind = "qsw"
p = 0.5
eta = 0.0

[sweep]
axis = "eta"
values = [0.0, 0.3, 0.6]
"#;
    let config = write_config(dir.path(), "sweep.toml", body);
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}"));
        let args = [
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ];
        assert_eq!(postwalk(&args, None).status.code(), Some(0));
        outputs.push(fs::read_to_string(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].lines().count(), 4);
    assert!(outputs[0].lines().skip(1).all(|l| l.ends_with(",converged")));
}

#[test]
fn defected_torus_raises_vacancy_neighbours() {
    let dir = TempDir::new().unwrap();
    let body = r#"
initial_node = 7
t_max = 150.0
sample_interval = 0.5

[graph]
family = "torus"
rows = 5
cols = 5
defects = [12]

[channel]
kind = "qsw"
p = 0.5
eta = 0.4
"#;
    let config = write_config(dir.path(), "torus.toml", body);
    let out = dir.path().join("out");
    assert_eq!(run("simulate", &config, &out).status.code(), Some(0));
    let row = last_row(&fs::read_to_string(out.join("trajectory.csv")).unwrap());
    // Column 0 is time; original nodes above 12 shift down by one.
    let pops = &row[1..25];
    let neighbours = [7, 11, 12, 16];
    let lowest = neighbours.iter().map(|&k| pops[k]).fold(f64::INFINITY, f64::min);
    for (k, &p) in pops.iter().enumerate() {
        if !neighbours.contains(&k) {
            assert!(p < lowest, "node {k}: {p} vs {lowest}");
        }
    }
}

#[test]
fn spin_complete_graph_is_uniform() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "spin.toml",
        "eta = 0.8\nt_max = 300.0\nstop = \"steady\"\nconcurrence_dump = true\n\
         [graph]\nfamily = \"complete\"\nn = 6\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run("spin", &config, &out).status.code(), Some(0));
    let row = last_row(&fs::read_to_string(out.join("spin_trajectory.csv")).unwrap());
    for p in &row[1..7] {
        assert!((p - 1.0 / 6.0).abs() < 1e-6, "{p}");
    }
    assert!(row[7] < 1e-6);
    assert_outputs_exist(&manifest(&out.join("manifest.json")));
}
