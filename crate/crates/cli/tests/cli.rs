use std::path::Path;
use std::process::{Command, Output};

fn vahf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vahf"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VAHF_DATASET")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[train]
max_epochs = 3
warm_start_epochs = 1
hidden = [16, 16]
fusion_steps = 5

[train.extractor]
widths = [4, 8]
embedding = 16
"#;

#[test]
fn bad_invocations_print_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = vahf(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));

    let o = vahf(&["eval", "--grid", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = vahf(&["eval", "--grid", "no/such/dir"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"));
    assert!(stderr(&o).contains("Usage"));

    let o = vahf(&["eval", "--grid"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("VAHF_DATASET"));

    let o = vahf(&["train", "--combo", "LE+RE", "--selector", "U", "."], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("combo-selector-invalid"), "{}", stderr(&o));
}

#[test]
fn simulate_then_eval_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("small.toml"), SMALL).unwrap();
    let o = vahf(&["--seed", "7", "--out", "data", "simulate", "--users", "2"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(p.join("data/user_1/session_8/ring.wav").is_file());

    let o = vahf(&["--out", "samples", "preprocess", "data"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(p.join("samples/user_0/session_0/sample_9/sample.json").is_file());

    let o = vahf(
        &[
            "--out",
            "bundles",
            "features",
            "samples",
            "--combo",
            "RE",
            "--selector",
            "V",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(p.join("bundles")).unwrap().count() % 180, 0);

    let run = |out: &str| {
        let o = vahf(
            &[
                "--seed",
                "7",
                "--config",
                "small.toml",
                "--out",
                out,
                "eval",
                "--grid",
                "samples",
            ],
            p,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(p.join(out).join("report.json")).unwrap()
    };
    let a = run("r1");
    let b = run("r2");
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["grid"].as_array().unwrap().len(), 17);
    assert_eq!(report["seed"], 7);
    for f in ["report.csv", "table.txt", "confusion.txt"] {
        assert!(p.join("r1").join(f).is_file());
    }

    let o = vahf(&["report", "r1/report.json", "--format", "csv"], p);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 18);

    let o = vahf(
        &[
            "--config",
            "small.toml",
            "--out",
            "m/model.ckpt",
            "train",
            "samples",
            "--combo",
            "ALL-4ch",
            "--jobs",
            "1",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(p.join("m/model.ckpt").is_file());
}
