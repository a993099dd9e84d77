use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn metaod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metaod"))
        .args(args)
        .env_remove("METAOD_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    p: PathBuf,
    learner: PathBuf,
}

fn gen(out: &Path, mothersets: &str) -> Output {
    metaod(&[
        "gen-testbed",
        "--mothersets",
        mothersets,
        "--siblings",
        "2",
        "--samples",
        "120",
        "--dims",
        "3",
        "--freq",
        "0.1",
        "--seed",
        "5",
        "--out",
        s(out),
    ])
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        assert!(gen(&corpus, "4").status.success());
        let p = dir.path().join("p.csv");
        let out = metaod(&[
            "build-p",
            "--corpus",
            s(&corpus),
            "--out",
            s(&p),
            "--trials",
            "1",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let learner = dir.path().join("learner.json");
        let out = metaod(&[
            "train",
            "--corpus",
            s(&corpus),
            "--p",
            s(&p),
            "--k",
            "3",
            "--epochs",
            "5",
            "--out",
            s(&learner),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        Fixture {
            _dir: dir,
            corpus,
            p,
            learner,
        }
    })
}

#[test]
fn gen_testbed_writes_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(gen(&a, "3").status.success());
    assert!(gen(&b, "3").status.success());
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(
        names
            .iter()
            .filter(|n| n.to_string_lossy().ends_with(".csv"))
            .count(),
        6
    );
    assert!(a.join("folds.json").exists());
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap());
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(metaod(&["gen-testbed", "--bogus"]).status.code(), Some(2));
    assert_eq!(metaod(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(metaod(&["--help"]).status.code(), Some(0));
}

#[test]
fn resolved_config_is_printed() {
    let f = fixture();
    let out = metaod(&[
        "select",
        "--learner",
        s(&f.learner),
        "--data",
        s(&f.corpus.join("mother000_sib0.csv")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("resolved config:"), "{err}");
    assert!(err.contains("\"seed\":0"));
}

#[test]
fn performance_matrix_shape() {
    let f = fixture();
    let text = fs::read_to_string(&f.p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert_eq!(lines[0].split(',').count(), 1 + 261);
    assert!(!f.p.with_extension("csv.journal").exists());
}

#[test]
fn unlabeled_dataset_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert!(gen(&corpus, "1").status.success());
    let file = corpus.join("mother000_sib1.csv");
    let stripped: String = fs::read_to_string(&file)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned() + "\n")
        .collect();
    fs::write(&file, stripped).unwrap();
    let out = metaod(&[
        "build-p",
        "--corpus",
        s(&corpus),
        "--out",
        s(&dir.path().join("p.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mother000_sib1"));
}

#[test]
fn train_with_missing_p_exits_two() {
    let f = fixture();
    let out = metaod(&[
        "train",
        "--corpus",
        s(&f.corpus),
        "--p",
        "/no/such/p.csv",
        "--out",
        "/tmp/never.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn select_top_and_label_independence() {
    let f = fixture();
    let labeled = f.corpus.join("mother001_sib0.csv");
    let one = metaod(&[
        "select",
        "--learner",
        s(&f.learner),
        "--data",
        s(&labeled),
        "--label-col",
        "is_outlier",
        "--top",
        "1",
    ]);
    assert!(one.status.success());
    assert_eq!(String::from_utf8_lossy(&one.stdout).lines().count(), 1);

    let dir = tempfile::tempdir().unwrap();
    let unlabeled = dir.path().join("u.csv");
    let text: String = fs::read_to_string(&labeled)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned() + "\n")
        .collect();
    fs::write(&unlabeled, text).unwrap();
    let five = |data: &Path, label: bool| {
        let mut args = vec![
            "select",
            "--learner",
            s(&f.learner),
            "--data",
            s(data),
            "--top",
            "5",
        ];
        if label {
            args.extend(["--label-col", "is_outlier"]);
        }
        metaod(&args).stdout
    };
    let a = five(&labeled, true);
    assert_eq!(a, five(&unlabeled, false));
    assert_eq!(a, five(&labeled, true));
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 5);
}

#[test]
fn evaluate_poc_reports_map_and_timing() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = metaod(&[
        "evaluate",
        "--corpus",
        s(&f.corpus),
        "--p",
        s(&f.p),
        "--methods",
        "METAOD,GB,RS,EUB",
        "--mode",
        "poc",
        "--k",
        "2",
        "--epochs",
        "3",
        "--out",
        s(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("MAP"));
    assert!(table.contains("med_select_s"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"].as_array().unwrap().len(), 4);
    assert!(report["methods"][0]["timing"]["median_select_seconds"]
        .as_f64()
        .is_some());
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn evaluate_unknown_method_is_usage_error() {
    let f = fixture();
    let out = metaod(&[
        "evaluate",
        "--corpus",
        s(&f.corpus),
        "--p",
        s(&f.p),
        "--methods",
        "GB,NOPE",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
