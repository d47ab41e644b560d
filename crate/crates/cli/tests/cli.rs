use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_skyreserve"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn skyreserve")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", p(dir), "--densities", "10,20", "--runs", "2"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_dataset_summary_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    simulate(&dir, &[]);
    let data = fs::read_to_string(dir.join("dataset.csv")).unwrap();
    // header + 2 runs of 10 + 2 runs of 20
    assert_eq!(data.lines().count(), 1 + 2 * 10 + 2 * 20);
    let runs = fs::read_to_string(dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config"]["scenario"]["runs"], 2);
    assert_eq!(manifest["config"]["scenario"]["seed"], 42);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let path = o["path"].as_str().unwrap();
        assert_eq!(fs::metadata(path).unwrap().len(), o["bytes"].as_u64().unwrap());
    }
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    simulate(&a, &[]);
    bin()
        .env("SKYRESERVE_THREADS", "1")
        .args(["simulate", "--out", p(&b), "--densities", "10,20", "--runs", "2"])
        .output()
        .unwrap();
    simulate(&c, &["--seed", "7"]);
    let read = |d: &Path| fs::read(d.join("dataset.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(
        fs::read(a.join("runs.csv")).unwrap(),
        fs::read(b.join("runs.csv")).unwrap()
    );
}

#[test]
fn manifest_config_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    simulate(&first, &["--seed", "11"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    let cfg: skyreserve::config::Config = serde_json::from_value(manifest["config"].clone()).unwrap();
    let cfg_path = tmp.path().join("replay.toml");
    fs::write(&cfg_path, cfg.to_toml()).unwrap();

    let second = tmp.path().join("second");
    ok(&["--config", p(&cfg_path), "simulate", "--out", p(&second)]);
    assert_eq!(
        fs::read(first.join("dataset.csv")).unwrap(),
        fs::read(second.join("dataset.csv")).unwrap()
    );
}

#[test]
fn full_pipeline_report_train_evaluate_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, &[]);
    let dataset = sim.join("dataset.csv");

    let rep = tmp.path().join("rep");
    let table = ok(&["report", "--dataset", p(&dataset), "--out", p(&rep)]);
    assert!(table.contains("median%"));
    let stats = fs::read_to_string(rep.join("overhead_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 3);
    for f in ["conflict_fraction.csv", "overhead_histogram.csv"] {
        assert!(rep.join(f).exists(), "{f}");
    }

    let ckpt = tmp.path().join("model/ckpt.bin");
    ok(&["train", "--dataset", p(&dataset), "--out", p(&ckpt), "--epochs", "4"]);
    assert!(ckpt.exists());
    let log = fs::read_to_string(tmp.path().join("model/ckpt.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 5);
    assert!(tmp.path().join("model/ckpt.manifest.json").exists());

    let eval_dir = tmp.path().join("eval");
    let printed = ok(&[
        "evaluate",
        "--checkpoint",
        p(&ckpt),
        "--dataset",
        p(&dataset),
        "--out",
        p(&eval_dir),
    ]);
    let value = |key: &str| -> f64 {
        printed
            .lines()
            .find_map(|l| {
                let mut it = l.split_whitespace();
                (it.next() == Some(key)).then(|| it.next().unwrap().parse().unwrap())
            })
            .unwrap()
    };
    assert_eq!(value("nll"), value("logged_nll"));
    let metrics = fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value"));
    let preds = fs::read_to_string(eval_dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count() as f64 - 1.0, value("n"));

    let out = ok(&[
        "predict",
        "--checkpoint",
        p(&ckpt),
        "--dataset",
        p(&dataset),
        "--row",
        "0",
    ]);
    assert!(out.contains("90% upper bound"), "{out}");
    let row = "0,0.65,0.75,0,0,0,0,0,31.8,0,0,1,1";
    let out = ok(&["predict", "--checkpoint", p(&ckpt), "--features", row]);
    assert!(out.lines().any(|l| l.starts_with("reserve")));
}

#[test]
fn training_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, &[]);
    let dataset = sim.join("dataset.csv");
    let a = tmp.path().join("a.bin");
    let b = tmp.path().join("b.bin");
    for path in [&a, &b] {
        ok(&[
            "train",
            "--dataset",
            p(&dataset),
            "--out",
            p(path),
            "--epochs",
            "3",
            "--seed",
            "5",
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(tmp.path().join("a.log.csv")).unwrap(),
        fs::read(tmp.path().join("b.log.csv")).unwrap()
    );
}

#[test]
fn power_table_has_expected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("power.csv");
    ok(&["power-table", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "speed_kt,p_induced_kW,p_profile_kW,p_parasite_kW,p_hotel_kW,p_total_kW"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][0], 85.0);
    assert_eq!(rows[100][0], 185.0);
    for r in &rows {
        let shaft = r[1] + r[2] + r[3];
        assert!((r[5] - (shaft / 0.85 + r[4])).abs() < 1e-4, "{r:?}");
    }
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[scenario]\nn_aircraft = 1\n").unwrap();
    let out = run(&["--config", p(&cfg), "simulate", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));

    fs::write(&cfg, "[scenario]\nrpz_nm = \"far\"\n").unwrap();
    let out = run(&["--config", p(&cfg), "simulate", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(&cfg, "[scenario]\nwarp_factor = 9\n").unwrap();
    let out = run(&[
        "--config",
        p(&cfg),
        "power-table",
        "--out",
        p(&tmp.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["simulate", "--out", p(&tmp.path().join("x")), "--densities", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "--out", p(&tmp.path().join("x")), "--densities", "ten"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("none.csv");
    let out = run(&["report", "--dataset", p(&missing), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "not,a,dataset\n1,2,3\n").unwrap();
    let out = run(&["report", "--dataset", p(&bad), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));

    let junk = tmp.path().join("junk.bin");
    fs::write(&junk, b"definitely not a checkpoint").unwrap();
    let out = run(&[
        "predict",
        "--checkpoint",
        p(&junk),
        "--features",
        "0,0,0,0,0,0,0,0,0,0,0,1,1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}
