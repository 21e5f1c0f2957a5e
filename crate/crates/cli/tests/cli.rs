use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_miso-locmap"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("miso-locmap-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn simulate_estimate_locmap_pipeline() {
    let dir = scratch("pipeline");
    let (obs, est, loc) = (dir.join("obs.json"), dir.join("est.json"), dir.join("loc.csv"));
    ok(bin().args(["simulate", "--seed", "4", "--out"]).arg(&obs).output().unwrap());
    ok(bin().args(["estimate", "--method", "joint", "--obs"]).arg(&obs).arg("--out").arg(&est).output().unwrap());
    ok(bin().args(["locmap", "--input"]).arg(&est).arg("--out").arg(&loc).output().unwrap());

    let text = fs::read_to_string(&loc).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kind,index,x,y"));
    let mobile: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(mobile[0], "mobile");
    let (x, y): (f64, f64) = (mobile[2].parse().unwrap(), mobile[3].parse().unwrap());
    // Default scenario: mobile at (10, 4), SNR 10 dB.
    assert!((x - 10.0).hypot(y - 4.0) < 1.5, "({x}, {y})");
    assert!(lines.next().unwrap().starts_with("scatterer,1,"));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&est).unwrap()).unwrap();
    assert_eq!(json["estimate"]["method"], "joint");
    assert_eq!(json["estimate"]["theta"].as_array().unwrap().len(), 4);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn csv_observations_need_a_config() {
    let dir = scratch("csv");
    let (obs, cfg) = (dir.join("obs.csv"), dir.join("cfg.json"));
    fs::write(&cfg, r#"{ "snr_db": 20.0, "scatterers": [] , "lmr_db_per_path": [] }"#).unwrap();
    ok(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&obs).output().unwrap());
    assert!(fs::read_to_string(&obs).unwrap().starts_with("n,g,re,im\n"));

    let bad = bin().args(["estimate", "--obs"]).arg(&obs).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--config"));

    let est = ok(bin()
        .args(["estimate", "--method", "sp-refine", "--grid", "16x16", "--obs"])
        .arg(&obs)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap());
    let json: serde_json::Value = serde_json::from_str(&est).unwrap();
    assert_eq!(json["estimate"]["theta"].as_array().unwrap().len(), 2);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn crlb_csv_and_mu_sweep() {
    let single = ok(bin().arg("crlb").output().unwrap());
    assert!(single.starts_with("value,n_paths,quantity,bound,variable\n"));
    assert!(single.lines().any(|l| l.contains(",p,")));

    let sweep = ok(bin().args(["crlb", "--sweep", "mu=0.5,1"]).output().unwrap());
    for k in 1..=4 {
        let rows = sweep.lines().filter(|l| l.contains(&format!(",{k},p,"))).count();
        assert_eq!(rows, 2, "n_paths = {k}");
    }
}

#[test]
fn sweep_writes_stable_columns() {
    let out = ok(bin()
        .args(["sweep", "--sweep", "snr=10,20", "--trials", "4", "--seed", "1", "--method", "joint,sp-grid"])
        .output()
        .unwrap());
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("value,method,quantity,rmse,bound,trials_ok,trials_failed,q10,q50,q90,rmse_se,variable")
    );
    assert!(lines.clone().any(|l| l.starts_with("10.0,joint,p,")));
    assert!(lines.any(|l| l.starts_with("20.0,sp-grid,p,")));

    let again = ok(bin()
        .args(["sweep", "--sweep", "snr=10,20", "--trials", "4", "--seed", "1", "--method", "joint,sp-grid"])
        .output()
        .unwrap());
    assert_eq!(out, again);

    let bounds = ok(bin().args(["sweep", "--sweep", "lmr=-5,5", "--method", "bounds"]).output().unwrap());
    assert!(bounds.lines().skip(1).all(|l| l.split(',').nth(1) == Some("bound")));
}

#[test]
fn bad_arguments_fail_cleanly() {
    for args in [
        &["sweep", "--sweep", "snr=5:-1:0"][..],
        &["sweep", "--method", "magic"],
        &["estimate", "--obs", "/nonexistent.json"],
        &["crlb", "--sweep", "wavelength"],
    ] {
        let out = bin().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}");
    }
}
