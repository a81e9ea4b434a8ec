//! End-to-end runs of the `distinct` binary: exit codes, text and reports.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use distinct::synth::generate_table;
use serde_json::Value;

const SCHEMA_CSV_HEADER: &str = "id,sex,ethnicity,race,age,bmi";

fn distinct(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distinct"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run distinct")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn schema_path() -> String {
    common::fixture("schema.json").to_string_lossy().into_owned()
}

/// Bundled analogues written once: `source.csv` carries two binormal score
/// columns (targets 0.91 and 0.92) and a `cancer` outcome.
fn analogue_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let nlst = common::fixture("nlst_analogue.json");
        let o = distinct(
            dir.path(),
            &[
                "synth", "--spec", nlst.to_str().unwrap(), "--out", "source.csv", "--score", "psfr=0.91",
                "--score", "pssz=0.92", "--outcome", "cancer",
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let table = generate_table(&common::spec("vlst_analogue.json")).unwrap();
        table.write_csv(std::fs::File::create(dir.path().join("target.csv")).unwrap()).unwrap();
        dir
    })
    .path()
}

fn report(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

#[test]
fn validate_clean_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "clean.csv",
        &format!("{SCHEMA_CSV_HEADER}\na,Female,Non-Hispanic,Asian,62,27\nb,Male,Hispanic,White,55,31.5\n"),
    );
    let o = distinct(dir.path(), &["validate", "--schema", &schema_path(), "--cohort", &csv]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 rows excluded"), "{}", stdout(&o));
}

#[test]
fn validate_reports_missing_bmi() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "missing.csv",
        &format!("{SCHEMA_CSV_HEADER}\na,Female,Non-Hispanic,Asian,62,27\nb,Male,Hispanic,White,58,NA\n"),
    );
    let o = distinct(dir.path(), &["validate", "--schema", &schema_path(), "--cohort", &csv]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("1 row excluded: missing bmi"), "{text}");
    assert!(text.contains("line 3"), "{text}");
}

#[test]
fn validate_schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let no_bmi = write(dir.path(), "no_bmi.csv", "id,sex,ethnicity,race,age\na,Female,Non-Hispanic,Asian,62\n");
    let o = distinct(dir.path(), &["validate", "--schema", &schema_path(), "--cohort", &no_bmi]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bmi"));

    let o = distinct(dir.path(), &["validate", "--schema", &schema_path(), "--cohort", "absent.csv"]);
    assert_eq!(o.status.code(), Some(2));

    let bad_schema = write(dir.path(), "schema.json", r#"{"label_order": ["age"]}"#);
    let ok = write(dir.path(), "ok.csv", "age\n60\n");
    let o = distinct(dir.path(), &["validate", "--schema", &bad_schema, "--cohort", &ok]);
    assert_eq!(o.status.code(), Some(2));

    let level = write(
        dir.path(),
        "level.csv",
        &format!("{SCHEMA_CSV_HEADER}\na,Female,Non-Hispanic,Martian,62,27\n"),
    );
    let o = distinct(dir.path(), &["validate", "--schema", &schema_path(), "--cohort", &level]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown level"));
}

#[test]
fn align_target_against_itself_passes() {
    let d = analogue_dir();
    let o = distinct(
        d,
        &["align", "--schema", &schema_path(), "--source", "target.csv", "--target", "target.csv", "--n", "125", "--seed", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("alignment: pass"));
}

#[test]
fn align_at_twelve_thousand_fails() {
    let d = analogue_dir();
    let o = distinct(
        d,
        &[
            "align", "--schema", &schema_path(), "--source", "source.csv", "--target", "target.csv", "--n", "12000",
            "--seed", "1", "--permutations", "9999",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("<1e-3"), "{text}");
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let d = analogue_dir();
    let base = ["align", "--schema", "s.json", "--source", "source.csv", "--target", "target.csv", "--n", "100"];
    let o = distinct(d, &[&base[..], &["--seed", "1", "--alpha", "1.5"]].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    // no silent entropy: the seed is mandatory
    let o = distinct(d, &base);
    assert_eq!(o.status.code(), Some(2));
    let o = distinct(d, &["sweep", "--schema", &schema_path(), "--source", "source.csv", "--target", "target.csv", "--seed", "1", "--schedule", "500,400"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_size_sweep_equals_align() {
    let d = analogue_dir();
    let out = tempfile::tempdir().unwrap();
    let common_args = ["--schema", &schema_path(), "--source", "source.csv", "--target", "target.csv", "--seed", "5"];
    let a_dir = out.path().join("a");
    let s_dir = out.path().join("s");
    distinct(d, &[&["align"][..], &common_args, &["--n", "2019", "--out", a_dir.to_str().unwrap()]].concat());
    distinct(d, &[&["sweep"][..], &common_args, &["--schedule", "2019", "--out", s_dir.to_str().unwrap()]].concat());
    let align = report(a_dir.join("align.json"));
    let sweep = report(s_dir.join("sweep.json"));
    assert_eq!(align["payload"]["assessment"], sweep["payload"]["entries"][0]);
    assert_eq!(align["manifest"]["command"], "align");
    assert_eq!(align["manifest"]["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn default_sweep_fits_the_time_budget_and_exports_ids() {
    let d = analogue_dir();
    let out = tempfile::tempdir().unwrap();
    let ids = out.path().join("ids.csv");
    let start = Instant::now();
    let o = distinct(
        d,
        &[
            "sweep", "--schema", &schema_path(), "--source", "source.csv", "--target", "target.csv", "--seed", "2",
            "--export-ids", ids.to_str().unwrap(), "--out", out.path().to_str().unwrap(),
        ],
    );
    assert!(start.elapsed() < Duration::from_secs(300));
    assert_eq!(o.status.code(), Some(1), "default schedule reaches failing sizes");
    let text = stdout(&o);
    assert!(text.contains("Wasserstein") && text.contains("K-S") && text.contains("17958"), "{text}");
    let r = report(out.path().join("sweep.json"));
    let realized = r["payload"]["max_aligned_realized_n"].as_u64().unwrap() as usize;
    let exported = std::fs::read_to_string(&ids).unwrap();
    assert_eq!(exported.lines().count(), realized + 1);
    assert!(exported.starts_with("id\nnlst-"));
}

#[test]
fn maxsize_on_identical_pair_is_capped() {
    let d = analogue_dir();
    let out = tempfile::tempdir().unwrap();
    let o = distinct(
        d,
        &[
            "maxsize", "--schema", &schema_path(), "--source", "target.csv", "--target", "target.csv", "--seed", "4",
            "--out", out.path().to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let r = report(out.path().join("maxsize.json"));
    assert_eq!(r["payload"]["capped"], true);
    assert_eq!(r["payload"]["n_star"], r["payload"]["availability_cap"]);
}

#[test]
fn evaluate_full_cohort_strata_and_trajectory() {
    let d = analogue_dir();
    let out = tempfile::tempdir().unwrap();
    let schedule: Vec<String> = distinct::sampler::DEFAULT_SCHEDULE.iter().map(|n| n.to_string()).collect();
    let schedule = schedule.join(",");
    let o = distinct(
        d,
        &[
            "evaluate", "--schema", &schema_path(), "--cohort", "source.csv", "--scores", "psfr,pssz", "--outcome",
            "cancer", "--strata", "sex,age,bmi", "--target", "target.csv", "--schedule", &schedule, "--seed", "8",
            "--out", out.path().to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Full Dataset"), "{text}");

    let r = report(out.path().join("evaluate.json"));
    let p = &r["payload"];
    for (i, target) in [0.91, 0.92].iter().enumerate() {
        let auc = p["aucs"][i]["result"]["auc"].as_f64().unwrap();
        assert!((auc - target).abs() <= 0.015, "{auc} vs {target}");
    }
    // exchangeable by construction: sex carries no signal, so CIs overlap
    let rows = p["stratified"]["rows"].as_array().unwrap();
    let sex: Vec<&Value> = rows.iter().filter(|r| r["variable"] == "sex").collect();
    assert_eq!(sex.len(), 2);
    for score in 0..2 {
        let ci = |r: &Value| {
            let c = &r["cells"][score]["result"]["ci95"];
            (c[0].as_f64().unwrap(), c[1].as_f64().unwrap())
        };
        let (a, b) = (ci(sex[0]), ci(sex[1]));
        assert!(a.0 <= b.1 && b.0 <= a.1, "{a:?} {b:?}");
    }
    let csv = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("requested_n,realized_n,score,auc,lo,hi"));
    assert_eq!(lines.count(), 12 * 2);
}

#[test]
fn evaluate_on_exported_subsample() {
    let d = analogue_dir();
    let out = tempfile::tempdir().unwrap();
    let ids = out.path().join("ids.csv");
    let o = distinct(
        d,
        &[
            "align", "--schema", &schema_path(), "--source", "source.csv", "--target", "target.csv", "--n", "2019",
            "--seed", "6", "--export-ids", ids.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let o = distinct(
        d,
        &[
            "evaluate", "--schema", &schema_path(), "--cohort", "source.csv", "--scores", "psfr", "--outcome", "cancer",
            "--subsample", ids.to_str().unwrap(), "--json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let n_ids = std::fs::read_to_string(&ids).unwrap().lines().count() - 1;
    assert_eq!(r["payload"]["n"].as_u64().unwrap() as usize, n_ids);
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::fixture("vlst_analogue.json");
    let spec = spec.to_str().unwrap();
    for (out, seed) in [("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")] {
        let o = distinct(dir.path(), &["synth", "--spec", spec, "--out", out, "--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    let o = distinct(dir.path(), &["synth", "--spec", spec, "--out", "x.csv", "--score", "s=1.2"]);
    assert_eq!(o.status.code(), Some(2));
}
