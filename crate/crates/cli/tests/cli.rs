use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dua(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dua"));
    cmd.args(args).env_remove("DUA_SEED");
    if let Some(s) = env_seed {
        cmd.env("DUA_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dua(args, None);
    assert!(
        out.status.success(),
        "dua {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// A small labelled dataset; returns the path of its `dataset.json`.
fn small_data(root: &Path) -> PathBuf {
    let dir = root.join("data");
    ok(&[
        "synth",
        "--out",
        &s(&dir),
        "--n",
        "24",
        "--widths",
        "4,3",
        "--clusters",
        "3",
        "--latent-dim",
        "2",
    ]);
    dir.join("dataset.json")
}

fn tiny_train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(["--epochs", "15", "--latent-dim", "3"]);
    args.extend(extra);
    ok(&args)
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in [
        "synth",
        "train",
        "cluster",
        "classify",
        "noise-study",
        "kde",
        "dim-sweep",
    ] {
        let out = dua(&[sub, "--help"], None);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(
            String::from_utf8_lossy(&out.stdout).contains("--out"),
            "{sub}"
        );
    }
    assert_eq!(code(&dua(&["--version"], None)), 0);
}

#[test]
fn usage_errors_exit_one() {
    let out = dua(&["train", "--bogus"], None);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert_eq!(code(&dua(&[], None)), 1);
}

#[test]
fn missing_config_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = dua(
        &[
            "synth",
            "--out",
            &s(&tmp.path().join("o")),
            "--config",
            &s(&missing),
        ],
        None,
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nope.json"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"spec": {"n": 10, "colour": 3}}"#).unwrap();
    let out = dua(
        &[
            "synth",
            "--out",
            &s(&tmp.path().join("o")),
            "--config",
            &s(&cfg),
        ],
        None,
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
}

#[test]
fn train_writes_manifested_artifacts_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let stdout = tiny_train(&data, &a, &["--seed", "4"]).stdout;
    assert_eq!(
        String::from_utf8_lossy(&stdout).trim(),
        s(&a.join("manifest.json"))
    );
    tiny_train(&data, &b, &["--seed", "4"]);

    let m = manifest(&a);
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["config"]["train"]["epochs"], 15);
    let artifacts: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for name in ["checkpoint.json", "loss.csv", "latent.csv"] {
        assert!(artifacts.contains(&name), "{artifacts:?}");
    }
    for name in &artifacts {
        assert!(a.join(name).is_file(), "{name}");
    }
    assert!(m["inputs"]
        .as_object()
        .unwrap()
        .keys()
        .any(|k| k.ends_with("dataset.json")));
    assert_eq!(
        fs::read(a.join("loss.csv")).unwrap(),
        fs::read(b.join("loss.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(a.join("loss.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2 * 15
    );
}

#[test]
fn seed_precedence_is_flag_then_file_then_env() {
    let tmp = tempfile::tempdir().unwrap();
    let out = |name: &str| s(&tmp.path().join(name));
    let seed_of = |name: &str| manifest(&tmp.path().join(name))["seed"].clone();

    assert!(
        dua(&["synth", "--out", &out("env"), "--n", "9"], Some("21"))
            .status
            .success()
    );
    assert_eq!(seed_of("env"), 21);
    assert!(dua(
        &["synth", "--out", &out("flag"), "--n", "9", "--seed", "3"],
        Some("21")
    )
    .status
    .success());
    assert_eq!(seed_of("flag"), 3);

    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"spec": {"seed": 8}}"#).unwrap();
    let with_file = dua(
        &[
            "synth",
            "--out",
            &out("file"),
            "--n",
            "9",
            "--config",
            &s(&cfg),
        ],
        Some("21"),
    );
    assert!(with_file.status.success());
    assert_eq!(seed_of("file"), 8);

    assert_eq!(
        code(&dua(
            &["synth", "--out", &out("bad"), "--n", "9"],
            Some("x")
        )),
        1
    );
}

#[test]
fn evaluation_input_errors_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let train = tmp.path().join("train");
    tiny_train(&data, &train, &[]);
    let ckpt = s(&train.join("checkpoint.json"));

    let no_labels = dua(
        &[
            "cluster",
            "--checkpoint",
            &ckpt,
            "--out",
            &s(&tmp.path().join("c1")),
        ],
        None,
    );
    assert_eq!(code(&no_labels), 2, "{}", stderr(&no_labels));

    let short = tmp.path().join("short.csv");
    fs::write(&short, "0\n1\n2\n").unwrap();
    let mismatch = dua(
        &[
            "cluster",
            "--checkpoint",
            &ckpt,
            "--labels",
            &s(&short),
            "--out",
            &s(&tmp.path().join("c2")),
        ],
        None,
    );
    assert_eq!(code(&mismatch), 2);
    assert!(
        stderr(&mismatch).contains("3 labels"),
        "{}",
        stderr(&mismatch)
    );
}

#[test]
fn cluster_and_classify_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let train = tmp.path().join("train");
    tiny_train(&data, &train, &[]);
    let ckpt = s(&train.join("checkpoint.json"));

    let cl = tmp.path().join("cluster");
    ok(&[
        "cluster",
        "--checkpoint",
        &ckpt,
        "--data",
        &s(&data),
        "--runs",
        "3",
        "--restarts",
        "2",
        "--out",
        &s(&cl),
    ]);
    let report = fs::read_to_string(cl.join("cluster_report.csv")).unwrap();
    let metrics: Vec<&str> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(metrics, ["acc", "nmi", "f_score", "rand_index"]);
    assert_eq!(
        fs::read_to_string(cl.join("cluster_runs.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 4 * 3
    );

    let kn = tmp.path().join("classify");
    ok(&[
        "classify",
        "--checkpoint",
        &ckpt,
        "--data",
        &s(&data),
        "--splits",
        "8:2",
        "--runs",
        "4",
        "--out",
        &s(&kn),
    ]);
    let report = fs::read_to_string(kn.join("classify_report.csv")).unwrap();
    let metrics: Vec<&str> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(metrics, ["acc@8:2"]);
    assert!(report.lines().nth(1).unwrap().ends_with(",4"));
}

#[test]
fn noise_study_adds_the_clean_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let out = tmp.path().join("noise");
    ok(&[
        "noise-study",
        "--data",
        &s(&data),
        "--eta",
        "0.1,0.5,1,2",
        "--variants",
        "dua",
        "--seeds",
        "0",
        "--eval-runs",
        "1",
        "--restarts",
        "1",
        "--epochs",
        "5",
        "--latent-dim",
        "2",
        "--out",
        &s(&out),
    ]);
    let sweep: Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let values: Vec<f64> = sweep["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["value"].as_f64().unwrap())
        .collect();
    assert_eq!(values, [0.0, 0.1, 0.5, 1.0, 2.0]);
    assert!(out.join("sigma.csv").is_file());
    assert!(out.join("kde_eta_2.csv").is_file());
}

#[test]
fn overflowing_data_is_a_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let view = data.parent().unwrap().join("view0.csv");
    let huge: String = fs::read_to_string(&view)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|_| "1e300").collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(&view, huge).unwrap();
    let mut args = vec!["train", "--data"];
    let (d, o) = (s(&data), s(&tmp.path().join("t")));
    args.extend([
        d.as_str(),
        "--out",
        o.as_str(),
        "--epochs",
        "5",
        "--no-normalize",
    ]);
    let out = dua(&args, None);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn kde_without_polluted_rows_has_one_group() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let train = tmp.path().join("train");
    tiny_train(&data, &train, &[]);
    let out = tmp.path().join("kde");
    ok(&[
        "kde",
        "--checkpoint",
        &s(&train.join("checkpoint.json")),
        "--out",
        &s(&out),
    ]);
    let csv = fs::read_to_string(out.join("kde.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",all")));
    assert_eq!(csv.lines().count(), 1 + 256);

    let noisy = tmp.path().join("noisy");
    tiny_train(&data, &noisy, &["--noise-eta", "1"]);
    let out = tmp.path().join("kde2");
    ok(&[
        "kde",
        "--checkpoint",
        &s(&noisy.join("checkpoint.json")),
        "--polluted",
        &s(&noisy.join("polluted.csv")),
        "--out",
        &s(&out),
    ]);
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("kde_summary.json")).unwrap()).unwrap();
    let groups = summary["groups"].as_object().unwrap();
    assert_eq!(
        groups["clean"]["count"].as_u64().unwrap() + groups["noisy"]["count"].as_u64().unwrap(),
        24
    );
}

#[test]
fn nothing_is_written_outside_out() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let before: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    let data_files = fs::read_dir(data.parent().unwrap()).unwrap().count();
    let out = tmp.path().join("run");
    tiny_train(&data, &out, &[]);
    let mut after: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    after.retain(|n| n != "run");
    assert_eq!(before.len(), after.len());
    assert_eq!(
        fs::read_dir(data.parent().unwrap()).unwrap().count(),
        data_files
    );
    for e in fs::read_dir(&out).unwrap() {
        let name = e.unwrap().file_name();
        assert!(
            !name.to_string_lossy().ends_with(".tmp"),
            "{name:?} left behind"
        );
    }
}
