use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use afpgnn::experiment::{formats, read_embeddings_tsv};
use afpgnn::fixtures::SyntheticCorpus;
use afpgnn::numerics::Rng;

fn corpus(dir: &Path) {
    let c = SyntheticCorpus {
        nodes: 60,
        features: 24,
        ..SyntheticCorpus::default()
    };
    c.write(dir, "toy", &mut Rng::new(3)).unwrap();
}

fn afpgnn(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afpgnn"))
        .arg("--data-dir")
        .arg(data)
        .args(["--log", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

const SPEC: &[&str] = &[
    "--dataset",
    "toy",
    "--set",
    "train.max_epochs=5",
    "--set",
    "train.patience=5",
    "--set",
    "encoder.heads=2",
    "--set",
    "encoder.head_dim=4",
    "--set",
    "data.train_per_class=5",
    "--set",
    "data.val=10",
    "--set",
    "data.test=20",
    "--set",
    "probe.epochs=20",
];

fn train(data: &Path, out: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SPEC);
    args.extend_from_slice(extra);
    let o = afpgnn(data, &args);
    let dir = PathBuf::from(String::from_utf8_lossy(&o.stdout).trim());
    (o, dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_eval_export_cycle() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("runs");
    corpus(&data);

    let (o, dir) = train(&data, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "report.json",
        "params.bin",
        "embeddings.tsv",
        "config.json",
        "config.txt",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let name = dir.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("toy-full-s0-"), "{name}");

    // finished runs are not retrained
    let before = std::fs::metadata(dir.join("report.json"))
        .unwrap()
        .modified()
        .unwrap();
    let (o, again) = train(&data, &out, &[]);
    assert!(o.status.success());
    assert_eq!(again, dir);
    let after = std::fs::metadata(dir.join("report.json"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(before, after);

    // restating a default leaves the run directory unchanged
    let (_, same) = train(&data, &out, &["--set", "encoder.heads=2"]);
    assert_eq!(same, dir);
    let (_, other) = train(&data, &out, &["--seed", "1"]);
    assert_ne!(other, dir);

    let o = afpgnn(&data, &["eval", "--run", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let headline: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let acc = headline["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(dir.join("metrics.json").is_file());

    let bin = tmp.path().join("z.bin");
    let o = afpgnn(
        &data,
        &[
            "export-embeddings",
            "--run",
            dir.to_str().unwrap(),
            "--format",
            "bin",
            "--output",
            bin.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let from_bin = formats::decode_embeddings_bin(&std::fs::read(&bin).unwrap()).unwrap();
    let (ids, from_tsv) = read_embeddings_tsv(&dir.join("embeddings.tsv")).unwrap();
    assert_eq!(ids.len(), 60);
    assert_eq!(from_bin.shape(), from_tsv.shape());
    assert_eq!(from_bin.as_slice(), from_tsv.as_slice());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data);
    let out = tmp.path().join("runs");

    let (o, _) = train(&data, &out, &["--set", "train.p_drop=1.5"]);
    assert!(!o.status.success());
    let (o, _) = train(&data, &out, &["--set", "no.such.key=1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no.such.key"), "{}", stderr(&o));
    let (o, _) = train(&data, &out, &["--variant", "bogus"]);
    assert!(!o.status.success());

    let o = afpgnn(
        &data,
        &[
            "train",
            "--dataset",
            "missing",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing"));

    let o = afpgnn(
        &data,
        &[
            "eval",
            "--run",
            tmp.path().join("nowhere").to_str().unwrap(),
        ],
    );
    assert!(!o.status.success());

    std::fs::write(data.join("broken.content"), "a\t1\t0\tx\nb\t1\tx\n").unwrap();
    std::fs::write(data.join("broken.cites"), "a\tb\n").unwrap();
    let o = afpgnn(&data, &["stats", "--dataset", "broken"]);
    assert!(!o.status.success());
}

#[test]
fn stats_reports_split_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    corpus(&data);
    let mut args = vec!["stats"];
    args.extend_from_slice(SPEC);
    let o = afpgnn(&data, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nodes"], 60);
    assert_eq!(v["classes"], 3);
    assert_eq!(v["train"], 15);
    assert_eq!(v["val"], 10);
    assert_eq!(v["test"], 20);
}

#[test]
fn gradcheck_passes() {
    let o = afpgnn(Path::new("."), &["gradcheck", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("grid");
    corpus(&data);
    let mut args = vec![
        "ablate",
        "--seeds",
        "0,1",
        "--threads",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(SPEC);
    let o = afpgnn(&data, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 7);
    let dir = std::fs::read_dir(&out)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let table = std::fs::read_to_string(dir.join("ablation.tsv")).unwrap();
    assert_eq!(table.lines().count(), 8);
    let cells = std::fs::read_to_string(dir.join("ablation_cells.tsv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 14);
}

#[test]
fn sweep_marks_best_value() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("grid");
    corpus(&data);
    let mut args = vec![
        "sweep",
        "--param",
        "p_drop",
        "--values",
        "0.5,0.2,0.5",
        "--seeds",
        "0",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(SPEC);
    let o = afpgnn(&data, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.2\t"));
    assert!(rows.iter().any(|r| r.ends_with("\tbest")));

    let o = afpgnn(
        &data,
        &[
            "sweep",
            "--param",
            "patience",
            "--values",
            "1",
            "--dataset",
            "toy",
        ],
    );
    assert!(!o.status.success());
}
