use std::path::Path;
use std::process::{Command, Output};

fn corrfilt(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrfilt"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_probability_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = corrfilt(&["--gamma-bar", "1.5", "simulate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("gamma_bar") && msg.contains("[0, 1]"), "{msg}");
    assert!(!tmp.path().join("trajectory.csv").exists());
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[experiment]\nrunz = 3\n").unwrap();
    let o = corrfilt(&["--config", cfg.to_str().unwrap(), "filter"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("runz"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_and_help() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(corrfilt(&["bogus"], tmp.path()).status.code(), Some(2));
    let help = corrfilt(&["--help"], tmp.path());
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["simulate", "filter", "smooth", "reproduce", "sweep", "oracle-check"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn config_file_drives_smooth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[experiment]\nruns = 2\nsteps = 6\nlag = 1\ngamma_bar = 0.9\n").unwrap();
    let o = corrfilt(&["--config", cfg.to_str().unwrap(), "smooth"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("smooth.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run,k,x,y,x_filt,x_smooth"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn sweep_output_is_independent_of_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tmp.path().join(threads);
        let o = Command::new(env!("CARGO_BIN_EXE_corrfilt"))
            .args(["--runs", "20", "--steps", "10", "--out-dir"])
            .arg(&dir)
            .args(["sweep", "--emit-plot", "script"])
            .env("CORRFILT_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(dir.join("sweep.gp").exists());
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config"]["experiment"]["runs"], 20);
        csvs.push(std::fs::read(dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(String::from_utf8_lossy(&csvs[0]).lines().count(), 10);
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_corrfilt"))
        .args(["--runs", "2", "--steps", "4", "--out-dir"])
        .arg(tmp.path())
        .args(["reproduce", "--figure", "1"])
        .env("CORRFILT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CORRFILT_THREADS"));
}
