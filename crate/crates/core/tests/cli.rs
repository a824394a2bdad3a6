use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_croptype");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn help_lists_every_documented_flag() {
    let documented: [(&str, &[&str]); 7] = [
        ("gen", &["--out", "--parcels", "--satellites", "--crops", "--imbalance", "--noise", "--dropout", "--seed"]),
        ("split", &["--manifest", "--test-parcels", "--folds", "--seed", "--out"]),
        (
            "train",
            &[
                "--manifest", "--splits", "--fold", "--model", "--satellite", "--bands", "--gamma", "--rho", "--eps", "--epochs",
                "--batch", "--patience", "--seed", "--out",
            ],
        ),
        ("eval", &["--ckpt", "--manifest", "--splits", "--set", "--window"]),
        ("cv", &["--manifest", "--splits", "--model", "--grid", "--out"]),
        ("sweep", &["--config", "--out", "--jobs"]),
        ("report", &["--runs", "--format"]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let top = ok(&["--help"], tmp.path());
    for (cmd, flags) in documented {
        assert!(top.contains(cmd), "top-level help lacks {cmd}");
        let help = ok(&[cmd, "--help"], tmp.path());
        for flag in flags {
            assert!(help.contains(&format!("{flag} ")), "`{cmd} --help` lacks {flag}:\n{help}");
        }
    }
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["gen", "--out", "data", "--parcels", "12", "--satellites", "L8", "--seed", "1"], d);
    ok(&["split", "--manifest", "data/L8.jsonl", "--test-parcels", "2", "--folds", "2", "--seed", "1", "--out", "splits.json"], d);

    assert_eq!(run(&["train", "--model", "cnn"], d).status.code(), Some(2));
    assert_eq!(run(&["gen", "--out", "x", "--imbalance", "pareto:1"], d).status.code(), Some(2));
    assert_eq!(run(&["report", "--runs", ".", "--format", "html"], d).status.code(), Some(2));

    let train = |splits: &str| {
        run(&["train", "--manifest", "data/L8.jsonl", "--splits", splits, "--model", "cnn", "--epochs", "1", "--out", "run"], d)
    };
    fs::write(d.join("bad.json"), "{not json").unwrap();
    assert_eq!(train("bad.json").status.code(), Some(3));

    let mut plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("splits.json")).unwrap()).unwrap();
    let moved = plan["folds"][0][0].clone();
    plan["folds"][1].as_array_mut().unwrap().push(moved.clone());
    fs::write(d.join("leaky.json"), plan.to_string()).unwrap();
    let out = train("leaky.json");
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains(moved.as_str().unwrap()));
    assert!(!d.join("run").exists());
}

/// Every file under `dir`, relative path → bytes.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline(d: &Path) -> Vec<String> {
    let mut stdout = Vec::new();
    stdout.push(ok(
        &["gen", "--out", "data", "--parcels", "16", "--satellites", "L8,PS", "--crops", "paddy,banana,pulses", "--imbalance", "zipf:0.5", "--noise", "0.02", "--dropout", "0.2", "--seed", "3"],
        d,
    ));
    stdout.push(ok(&["split", "--manifest", "data/L8.jsonl", "--test-parcels", "4", "--folds", "3", "--seed", "3", "--out", "splits.json"], d));
    stdout.push(ok(
        &[
            "train", "--manifest", "data/L8.jsonl", "--splits", "splits.json", "--fold", "1", "--model", "psetae", "--satellite", "L8",
            "--bands", "NIR+SWIR1+SWIR2", "--gamma", "1", "--rho", "0.95", "--eps", "1e-6", "--epochs", "3", "--batch", "4",
            "--patience", "2", "--seed", "5", "--out", "run",
        ],
        d,
    ));
    stdout.push(ok(&["eval", "--ckpt", "run", "--manifest", "data/L8.jsonl", "--splits", "splits.json", "--set", "test"], d));
    stdout.push(ok(
        &["eval", "--ckpt", "run", "--manifest", "data/L8.jsonl", "--splits", "splits.json", "--set", "val", "--window", "60:400"],
        d,
    ));
    fs::write(d.join("grid.json"), r#"[{"gamma": 0.0, "alpha": "uniform"}, {"gamma": 2.0, "alpha": "inverse-frequency"}]"#).unwrap();
    stdout.push(ok(
        &["cv", "--manifest", "data/L8.jsonl", "--splits", "splits.json", "--model", "psetae", "--epochs", "2", "--seed", "2", "--grid", "grid.json", "--out", "cv"],
        d,
    ));
    let l8 = serde_json::json!({
        "models": ["cnn", "psetae"],
        "combinations": { "L8": ["NIR+SWIR1+SWIR2"] },
        "manifests": { "L8": "data/L8.jsonl" },
        "splits": "splits.json",
        "train": { "epochs": 2, "seed": 9 },
        "protocol": "holdout"
    });
    let ps = serde_json::json!({
        "models": ["psetae"],
        "combinations": { "PS": ["R+G+B+NIR", "SWIR1+NIR+B"] },
        "manifests": { "PS": "data/PS.jsonl" },
        "splits": "splits.json",
        "train": { "epochs": 2, "seed": 9 },
        "protocol": "holdout"
    });
    fs::write(d.join("l8.json"), l8.to_string()).unwrap();
    fs::write(d.join("ps.json"), ps.to_string()).unwrap();
    stdout.push(ok(&["sweep", "--config", "l8.json", "--out", "sweep/l8", "--jobs", "3"], d));
    stdout.push(ok(&["sweep", "--config", "ps.json", "--out", "sweep/ps"], d));
    stdout.push(ok(&["report", "--runs", "sweep", "--format", "md"], d));
    stdout.push(ok(&["report", "--runs", "sweep", "--format", "txt"], d));
    stdout
}

#[test]
fn identical_flags_give_byte_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = pipeline(a.path());
    let out_b = pipeline(b.path());
    assert_eq!(out_a, out_b);
    let (snap_a, snap_b) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(snap_a.iter().map(|f| &f.0).collect::<Vec<_>>(), snap_b.iter().map(|f| &f.0).collect::<Vec<_>>());
    for ((path, x), (_, y)) in snap_a.iter().zip(&snap_b) {
        assert!(x == y, "{} differs between runs", path.display());
    }

    let rows = |sub: &str| -> Vec<serde_json::Value> {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join(sub)).unwrap()).unwrap();
        v.as_array().unwrap().clone()
    };
    let (l8, ps) = (rows("sweep/l8/rows.json"), rows("sweep/ps/rows.json"));
    // the R+G+B baseline is inserted for both satellites
    assert_eq!((l8.len(), ps.len()), (4, 3));
    let skipped: Vec<_> = l8.iter().chain(&ps).filter(|r| r["status"] == "skipped:UnknownBand").collect();
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0]["satellite"] == "PS" && skipped[0]["combination"] == "SWIR1+NIR+B");
    for r in l8.iter().chain(&ps).filter(|r| r["baseline"] == true) {
        assert_eq!(r["gain"], 0.0);
    }
    let md = &out_a[out_a.len() - 2];
    assert!(md.contains("| L8 | 41×3×3×3 |"), "{md}");
    assert!(md.contains("| PS | 210×19×19×3 |"), "{md}");
    assert!(md.contains("3×3×3"), "{md}");
}
