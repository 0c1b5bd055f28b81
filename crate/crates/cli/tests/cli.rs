use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn erfi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erfi"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("ERFI_SEED")
        .env_remove("ERFI_THREADS")
        .output()
        .expect("spawn erfi")
}

fn files_with(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

const TINY: &[&str] = &[
    "--set", "trainer.num_envs=4",
    "--set", "trainer.horizon=8",
    "--set", "trainer.hidden=16",
    "--set", "trainer.epochs=1",
    "--set", "trainer.minibatches=1",
];

fn train_tiny(dir: &Path, seed: &str, threads: &str) -> PathBuf {
    let mut args = vec!["train", "--strategy", "rfi", "--iterations", "3", "--seed", seed, "--threads", threads];
    args.extend_from_slice(TINY);
    let out = erfi(dir, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    files_with(dir, ".bin").pop().expect("checkpoint")
}

#[test]
fn validate_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = erfi(dir.path(), &["validate"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("checks passed"));
}

#[test]
fn training_is_reproducible_across_runs_and_threads() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ca = train_tiny(a.path(), "7", "1");
    let cb = train_tiny(b.path(), "7", "2");
    assert_eq!(fs::read(ca).unwrap(), fs::read(cb).unwrap());
    let curve = |d: &Path| fs::read(files_with(d, ".csv").pop().unwrap()).unwrap();
    assert_eq!(curve(a.path()), curve(b.path()));
    assert_eq!(files_with(a.path(), ".svg").len(), 1);
    assert_eq!(files_with(a.path(), ".ini").len(), 1);
}

#[test]
fn misspelled_key_is_a_usage_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[injection]\ntau_lim_r = 4\ntau_lmi_o = 4\n").unwrap();
    let out = erfi(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:"), "{err}");
    assert!(err.contains("tau_lim_o"), "{err}");
}

#[test]
fn out_of_range_value_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = erfi(dir.path(), &["validate", "--set", "trainer.gamma=1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = erfi(dir.path(), &["sweep", "--policy", "a=/nonexistent/a.bin", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(files_with(dir.path(), ".csv").is_empty());
}

#[test]
fn sweep_and_plot_draw_one_line_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = train_tiny(dir.path(), "1", "0");
    let c = ckpt.to_str().unwrap();
    let (pa, pb) = (format!("a={c}"), format!("b={c}"));
    let out = erfi(
        dir.path(),
        &[
            "sweep", "--policy", &pa, "--policy", &pb, "--param", "FRICTION_MU", "--trials", "2",
            "--set", "sweep.grid=0.2,0.5", "--set", "sweep.budget=1",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = files_with(dir.path(), ".csv")
        .into_iter()
        .find(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            name.starts_with("sweep_FRICTION-MU_") && !name.ends_with(".curves.csv")
        })
        .unwrap();
    let rows = fs::read_to_string(&raw).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 2 * 2);

    let plots = dir.path().join("plots");
    let out = erfi(&plots, &["plot", raw.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(files_with(&plots, ".svg").pop().unwrap()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn header_only_csv_plots_empty_axes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(
        &csv,
        "policy_id,param_tag,param_value,seed,outcome,distance_m,mean_speed_mps,survival_s\n",
    )
    .unwrap();
    let out = erfi(dir.path(), &["plot", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(dir.path().join("empty.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("<polyline").count(), 0);
}

#[test]
fn unknown_csv_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    fs::write(&csv, "a,b\n1,2\n").unwrap();
    let out = erfi(dir.path(), &["plot", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn step_response_writes_samples_metrics_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = erfi(dir.path(), &["step-response", "--mode", "none", "--set", "step_response.seeds=3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = files_with(dir.path(), ".metrics.csv");
    assert_eq!(metrics.len(), 1);
    assert_eq!(fs::read_to_string(&metrics[0]).unwrap().lines().count(), 4);
    assert_eq!(files_with(dir.path(), ".svg").len(), 1);
}

#[test]
fn config_snapshot_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = train_tiny(a.path(), "5", "1");
    let snapshot = files_with(a.path(), ".ini").pop().unwrap();
    let out = erfi(b.path(), &["train", "--config", snapshot.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let second = files_with(b.path(), ".bin").pop().unwrap();
    assert_eq!(fs::read(first).unwrap(), fs::read(second).unwrap());
}
