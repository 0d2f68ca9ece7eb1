use std::path::Path;
use std::process::Command;

const TINY: &str = r#"
seed = 4

[world.catalog]
n_users = 30
n_items = 500
n_true_units = 25

[units]
image_clusters = 25

[model]
batch_size = 64

[sim]
horizon_days = 1
page_size = 20
"#;

fn iu4rec(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_iu4rec"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("IU4REC_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn all_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");
    let o = iu4rec(&["all"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read(out.join("report.json")).unwrap();
    let ab = std::fs::read(out.join("ab_report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&ab).unwrap();
    assert_eq!(v["ab"]["rows"].as_array().unwrap().len(), 3);

    let o = iu4rec(&["eval"], &cfg, &out);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), report);
    let o = iu4rec(&["ab-test"], &cfg, &out);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("ab_report.json")).unwrap(), ab);
}

#[test]
fn eval_without_checkpoint_asks_for_train() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");
    for step in ["synth", "build-iu", "featurize"] {
        assert!(iu4rec(&[step], &cfg, &out).status.success());
    }
    let o = iu4rec(&["eval"], &cfg, &out);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run `train` first"), "{err}");
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n[model]\nepochs = \"two\"\n").unwrap();
    let o = iu4rec(&["synth"], &cfg, &dir.path().join("run"));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3"), "{err}");
}

#[test]
fn config_command_prints_effective_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_iu4rec"))
        .args(["config", "--seed", "9", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("seed = 9"), "{text}");
    assert!(text.contains("n_items = 500"));
}
