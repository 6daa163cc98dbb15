use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flightsynth::flights::FrameVariant;
use flightsynth::table::schema_path_for;
use flightsynth_cli::commands::load_table;
use flightsynth_cli::pipeline::Manifest;
use tempfile::TempDir;

fn flightsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flightsynth"))
        .args(args)
        .env_remove("FLIGHTSYNTH_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = flightsynth(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Mock input plus its ingest output.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(rows: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        let rows = rows.to_string();
        ok(&["make-mock", "--rows", &rows, "--seed", "3", "--out", p(&f.path("mock"))]);
        ok(&[
            "ingest",
            "--raw",
            p(&f.path("mock/bts.csv")),
            "--airports",
            p(&f.airports()),
            "--frame",
            "all",
            "--out",
            p(&f.path("ingest")),
        ]);
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn airports(&self) -> PathBuf {
        self.path("mock/airports.csv")
    }

    fn frame(&self) -> PathBuf {
        self.path("ingest/frame_utc_d_2.csv")
    }

    fn fit_gc(&self) -> PathBuf {
        let model = self.path("fit/model.json");
        ok(&["fit", "--frame", p(&self.frame()), "--generator", "gc", "--seed", "1", "--out", p(&model)]);
        model
    }
}

#[test]
fn ingest_all_writes_every_frame() {
    let f = Fixture::new(400);
    for v in FrameVariant::ALL {
        let path = f.path(&format!("ingest/frame_{}.csv", v.name()));
        assert!(path.exists(), "{}", path.display());
        assert!(schema_path_for(&path).exists());
    }
    assert_eq!(load_table(&f.frame()).unwrap().n_cols(), 13);
    assert!(f.path("ingest/routes.csv").exists());
    assert!(f.path("ingest/flights.provenance.json").exists());
}

#[test]
fn exit_codes() {
    let f = Fixture::new(300);
    let missing = flightsynth(&[
        "ingest",
        "--raw",
        p(&f.path("mock/bts.csv")),
        "--airports",
        p(&f.path("nowhere.csv")),
        "--out",
        p(&f.path("x")),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let model = f.fit_gc();
    let sampled = f.path("s/sampled.csv");
    ok(&["sample", "--model", p(&model), "--n", "200", "--seed", "2", "--out", p(&sampled)]);
    let no_routes = flightsynth(&[
        "reconstruct",
        "--frame",
        p(&sampled),
        "--airports",
        p(&f.airports()),
        "--out",
        p(&f.path("r")),
    ]);
    assert_eq!(no_routes.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_routes.stderr).contains("routes"));

    ok(&[
        "reconstruct",
        "--frame",
        p(&sampled),
        "--airports",
        p(&f.airports()),
        "--routes",
        p(&f.path("ingest/routes.csv")),
        "--out",
        p(&f.path("r")),
    ]);
    let gated = flightsynth(&[
        "evaluate",
        "--real",
        p(&f.path("ingest/flights.csv")),
        "--synthetic",
        p(&f.path("r/reconstructed.csv")),
        "--stages",
        "statistical",
        "--min-statistical",
        "1.01",
        "--out",
        p(&f.path("e")),
    ]);
    assert_eq!(gated.status.code(), Some(1), "{}", String::from_utf8_lossy(&gated.stderr));
    assert!(f.path("e/report.json").exists());

    let no_out = flightsynth(&["make-mock", "--rows", "10"]);
    assert_eq!(no_out.status.code(), Some(2));
}

#[test]
fn sampling_is_reproducible_and_shaped() {
    let f = Fixture::new(400);
    let model = f.fit_gc();
    let (a, b, c) = (f.path("a.csv"), f.path("b.csv"), f.path("c.csv"));
    ok(&["sample", "--model", p(&model), "--n", "150", "--seed", "9", "--out", p(&a)]);
    ok(&["sample", "--model", p(&model), "--n", "150", "--seed", "9", "--out", p(&b)]);
    ok(&["sample", "--model", p(&model), "--n", "150", "--seed", "10", "--out", p(&c)]);
    let read = |x: &Path| std::fs::read(x).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(load_table(&a).unwrap().shape(), (150, 13));

    ok(&[
        "reconstruct",
        "--frame",
        p(&a),
        "--airports",
        p(&f.airports()),
        "--routes",
        p(&f.path("ingest/routes.csv")),
        "--out",
        p(&f.path("r")),
    ]);
    assert_eq!(load_table(&f.path("r/reconstructed.csv")).unwrap().shape(), (150, 30));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("r/cleaning_report.json")).unwrap()).unwrap();
    assert_eq!(report["input_rows"], 150);
    assert!(report["stamp"]["config_hash"].is_string());
}

#[test]
fn evaluate_runs_only_selected_stages() {
    let f = Fixture::new(500);
    let model = f.fit_gc();
    let sampled = f.path("s.csv");
    ok(&["sample", "--model", p(&model), "--n", "400", "--seed", "2", "--out", p(&sampled)]);
    ok(&[
        "reconstruct",
        "--frame",
        p(&sampled),
        "--airports",
        p(&f.airports()),
        "--routes",
        p(&f.path("ingest/routes.csv")),
        "--out",
        p(&f.path("r")),
    ]);
    ok(&[
        "evaluate",
        "--real",
        p(&f.path("ingest/flights.csv")),
        "--synthetic",
        p(&f.path("r/cleaned.csv")),
        "--stages",
        "statistical,fidelity",
        "--seed",
        "4",
        "--out",
        p(&f.path("e")),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("e/report.json")).unwrap()).unwrap();
    assert!(report["statistical"].is_object());
    assert!(report["fidelity"].is_object());
    assert!(report["diversity"].is_null());
    assert!(report["utility"].is_null());
    assert!(f.path("e/summary.md").exists());
}

#[test]
fn pipeline_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> Manifest {
        let out = dir.path().join(name);
        ok(&[
            "pipeline",
            "--preset",
            "5",
            "--mock-rows",
            "600",
            "--seed",
            "5",
            "--stages",
            "diversity,statistical",
            "--out",
            p(&out),
        ]);
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.artifacts, b.artifacts);
    assert_eq!(a.config_hash, b.config_hash);
    assert!(a.failed.is_none());
    assert_eq!(
        a.completed_stages,
        ["mock", "ingest", "fit", "sample", "reconstruct", "evaluate"]
    );
    assert!(a.artifacts.iter().any(|x| x.path == "evaluate/report.json"));
}

#[test]
fn pipeline_failure_still_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = flightsynth(&[
        "pipeline",
        "--preset",
        "5",
        "--data",
        p(&dir.path().join("absent.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.failed.unwrap().stage, "ingest");
    assert!(m.completed_stages.is_empty());
}
